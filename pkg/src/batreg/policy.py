"""Online threshold controller and the price-blind follower baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass

from . import _kernels
from .core import BatteryParams, MarketPrices
from .cost import StressFunction


def compute_u_hat(m: MarketPrices, p: BatteryParams, phi: StressFunction) -> float:
    """Depth threshold: the stress-derivative inverse of the marginal penalty
    of a full cycle per unit replacement price, clamped to [0, 1]."""
    marginal = m.pi * p.eta_d + m.theta / p.eta_c
    if marginal <= 0.0:
        return 0.0
    if p.R == 0.0:
        return 1.0
    return min(max(phi.derivative_inverse(marginal / p.R), 0.0), 1.0)


def u_hat_unclamped(m: MarketPrices, p: BatteryParams, phi: StressFunction) -> float:
    """Same as :func:`compute_u_hat` without the clamp (power-law stress only)."""
    y = (m.pi * p.eta_d + m.theta / p.eta_c) / p.R
    return (y / (phi.alpha * phi.beta)) ** (1.0 / (phi.beta - 1.0))


@dataclass(frozen=True)
class PolicyState:
    u_hat: float
    e_max_n: float
    e_min_n: float

    def __post_init__(self):
        if not self.e_min_n <= self.e_max_n:
            raise ValueError("running minimum above running maximum")
        if not 0.0 <= self.u_hat <= 1.0:
            raise ValueError(f"u_hat must be in [0, 1], got {self.u_hat}")


def policy_init(e_0: float, m: MarketPrices, p: BatteryParams,
                phi: StressFunction) -> PolicyState:
    if not p.e_min <= e_0 <= p.e_max:
        raise ValueError(f"e_0={e_0} outside [{p.e_min}, {p.e_max}]")
    return PolicyState(compute_u_hat(m, p, phi), e_0, e_0)


def policy_step(st: PolicyState, e_n: float, r_n: float,
                p: BatteryParams) -> tuple[float, float, PolicyState]:
    """Update the running extrema with e_n, then respond to r_n inside the band.

    Returns (c_n, d_n, new state).
    """
    st = PolicyState(st.u_hat, max(st.e_max_n, e_n), min(st.e_min_n, e_n))
    r_n = min(max(r_n, -p.P), p.P)
    c, d = _kernels.threshold_action(
        float(e_n), float(r_n), st.e_max_n, st.e_min_n, st.u_hat * p.E,
        p.e_min, p.e_max, p.T, p.eta_c, p.eta_d)
    return c, d, st


def simple_policy_step(e_n: float, r_n: float, p: BatteryParams) -> tuple[float, float]:
    """Follow r_n, limited only by the SoC bounds and the power rating."""
    r_n = min(max(r_n, -p.P), p.P)
    return _kernels.threshold_action(
        float(e_n), float(r_n), p.e_max, p.e_min, math.inf,
        p.e_min, p.e_max, p.T, p.eta_c, p.eta_d)
