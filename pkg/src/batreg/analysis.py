"""Cycle-domain costs, unconstrained optimal depths and the worst-case regret.

Under the restricted action space (never respond beyond the instruction)
total cost equals a constant plus a sum of per-cycle costs. Per unit of
normalized depth a charge half saves ``theta * E / eta_c`` of penalty and a
discharge half saves ``pi * E * eta_d``, so the linear terms below are
negative: deeper response trades aging for avoided penalty.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

from .core import BatteryParams, MarketPrices
from .cost import StressFunction, stress
from .policy import compute_u_hat

REGIME_BALANCED = "balanced"
# discharge side carries more penalty weight than the charge side
REGIME_OVER = "over-weighted"
REGIME_UNDER = "under-weighted"

_REL_TOL = 1e-9


def _clamp01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def cycle_cost_full(u: float, p: BatteryParams, phi: StressFunction, m: MarketPrices) -> float:
    return (p.E * p.R * stress(phi, u)
            - p.E * (m.theta / p.eta_c + m.pi * p.eta_d) * u)


def cycle_cost_half_charge(v: float, p: BatteryParams, phi: StressFunction,
                           m: MarketPrices) -> float:
    return 0.5 * p.E * p.R * stress(phi, v) - (p.E / p.eta_c) * m.theta * v


def cycle_cost_half_discharge(w: float, p: BatteryParams, phi: StressFunction,
                              m: MarketPrices) -> float:
    return 0.5 * p.E * p.R * stress(phi, w) - p.E * p.eta_d * m.pi * w


def optimal_half_depths(m: MarketPrices, p: BatteryParams,
                        phi: StressFunction) -> tuple[float, float]:
    """(v_hat, w_hat): minimizers of the charge- and discharge-half costs on [0, 1]."""
    if p.R == 0.0:
        return 1.0, 1.0
    v = 0.0 if m.theta == 0 else _clamp01(phi.derivative_inverse(m.theta / p.eta_c / p.R))
    w = 0.0 if m.pi == 0 else _clamp01(phi.derivative_inverse(m.pi * p.eta_d / p.R))
    return v, w


def _half_cost_argmins(m: MarketPrices, p: BatteryParams,
                       phi: StressFunction) -> tuple[float, float]:
    # a half cycle carries half the aging weight, so its first-order
    # condition doubles the price argument relative to optimal_half_depths
    if p.R == 0.0:
        return 1.0, 1.0
    v = 0.0 if m.theta == 0 else _clamp01(phi.derivative_inverse(2.0 * m.theta / p.eta_c / p.R))
    w = 0.0 if m.pi == 0 else _clamp01(phi.derivative_inverse(2.0 * m.pi * p.eta_d / p.R))
    return v, w


@dataclass(frozen=True)
class GapReport:
    u_hat: float
    v_hat: float
    w_hat: float
    regime: str
    epsilon: float

    def to_dict(self) -> dict:
        return asdict(self)


def classify_regime(m: MarketPrices, p: BatteryParams) -> str:
    dis = m.pi * p.eta_d
    chg = m.theta / p.eta_c
    if abs(dis - chg) <= _REL_TOL * max(abs(dis), abs(chg)):
        return REGIME_BALANCED
    return REGIME_OVER if dis > chg else REGIME_UNDER


def optimality_gap_bound(m: MarketPrices, p: BatteryParams, phi: StressFunction) -> GapReport:
    """Worst-case excess cost of the threshold policy over the offline optimum.

    When discharge weighs more, the bound charges one discharge half and two
    charge halves at u_hat against their own optima; the mirror case swaps
    the roles. Each half term is compared against its true minimum on
    [0, 1]; the reported ``v_hat``/``w_hat`` are the single-price depths
    from :func:`optimal_half_depths`.
    """
    if not phi.is_strictly_convex():
        raise ValueError("stress function must be strictly convex")
    u = compute_u_hat(m, p, phi)
    v_rep, w_rep = optimal_half_depths(m, p, phi)
    v, w = _half_cost_argmins(m, p, phi)
    regime = classify_regime(m, p)

    def jv(x):
        return cycle_cost_half_charge(x, p, phi, m)

    def jw(x):
        return cycle_cost_half_discharge(x, p, phi, m)

    if regime == REGIME_BALANCED:
        eps = 0.0
    elif regime == REGIME_OVER:
        eps = jw(u) + 2.0 * jv(u) - jw(w) - 2.0 * jv(v)
    else:
        eps = 2.0 * jw(u) + jv(u) - 2.0 * jw(w) - jv(v)
    return GapReport(u_hat=u, v_hat=v_rep, w_hat=w_rep, regime=regime, epsilon=max(eps, 0.0))
