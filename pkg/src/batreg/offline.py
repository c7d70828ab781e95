"""Full-information offline optimum on a discretized action grid.

Each step may respond with a fraction j/(K-1), j = 0..K-1, of the instructed
set-point in its own direction (responding beyond the instruction never
pays), clipped to the SoC limits. The minimum over all K**N sequences is
found exactly by branch and bound in :func:`batreg._kernels.offline_search`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .core import BatteryParams, Dispatch, MarketPrices, RegulationTrace, simulate_soc
from .cost import CostBreakdown, PowerLawStress, StressFunction, total_cost
from .policy import policy_init
from .rainflow import DEFAULT_TOL

log = logging.getLogger(__name__)


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleConfig:
    levels_per_step: int = 9
    max_steps: int = 12
    budget: int = 10_000_000
    """maximum search nodes visited per solve"""

    def __post_init__(self):
        if self.levels_per_step < 2:
            raise ValueError("levels_per_step must be at least 2")
        if self.max_steps < 1 or self.budget < 1:
            raise ValueError("max_steps and budget must be positive")

    def refined(self) -> "OracleConfig":
        """Grid with 2K-1 levels; contains every level of this one."""
        return OracleConfig(2 * self.levels_per_step - 1, self.max_steps, self.budget)


@dataclass(frozen=True)
class OracleResult:
    dispatch: Dispatch
    cost: CostBreakdown
    nodes: int
    levels: int


def _require_power_law(phi: StressFunction) -> PowerLawStress:
    if not isinstance(phi, PowerLawStress):
        raise TypeError("the offline search supports PowerLawStress only")
    return phi


def grid_dispatch(r: np.ndarray, levels: np.ndarray, K: int, p: BatteryParams,
                  e_0: float) -> Dispatch:
    """Dispatch for grid indices ``levels`` (0..K-1 per step), clipped to the SoC limits."""
    c = np.zeros(r.size)
    d = np.zeros(r.size)
    e = float(e_0)
    for n, (rn, j) in enumerate(zip(r.tolist(), np.asarray(levels).tolist())):
        mag = abs(rn) * j / (K - 1)
        if rn >= 0.0:
            c[n] = _kernels.bounded_charge(e, mag, p.e_max, p.e_min, math.inf, p.T, p.eta_c, p.eta_d)
        else:
            d[n] = _kernels.bounded_discharge(e, mag, p.e_min, p.e_max, math.inf, p.T, p.eta_c, p.eta_d)
        e = _kernels.soc_next(e, c[n], d[n], p.T, p.eta_c, p.eta_d)
    return Dispatch(c, d)


def _snapped_policy_cost(tr, p, phi, m, e_0, K, tol) -> float:
    """Cost of the threshold policy snapped to the nearest grid level.

    The snapped dispatch is achievable on the grid, so its cost bounds the
    grid optimum from above.
    """
    dsp, _ = run_threshold(tr, p, phi, m, e_0, tol)
    r = np.clip(tr.r, -p.P, p.P)
    mag = np.where(r >= 0.0, dsp.c, dsp.d)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(r != 0.0, mag / np.abs(r), 0.0)
    levels = np.clip(np.rint(frac * (K - 1)), 0, K - 1).astype(int)
    return total_cost(grid_dispatch(r, levels, K, p, e_0), tr, p, phi, m, tol).j_total


def brute_force_offline(tr: RegulationTrace, p: BatteryParams, phi: StressFunction,
                        m: MarketPrices, e_0: float, cfg: OracleConfig = OracleConfig(),
                        tol: float = DEFAULT_TOL, upper: Optional[float] = None) -> OracleResult:
    """Minimum-cost dispatch over the action grid; ties go to the
    lexicographically smallest sequence of response magnitudes.

    ``upper`` may supply a cost known to be achievable on this grid; the
    snapped threshold policy always provides one.
    """
    phi = _require_power_law(phi)
    N = len(tr)
    if N > cfg.max_steps:
        raise BudgetExceeded(f"N={N} exceeds max_steps={cfg.max_steps}")
    if not p.e_min <= e_0 <= p.e_max:
        raise ValueError(f"e_0={e_0} outside [{p.e_min}, {p.e_max}]")
    r = np.clip(tr.r, -p.P, p.P)
    snapped = _snapped_policy_cost(tr, p, phi, m, e_0, cfg.levels_per_step, tol)
    if upper is None or snapped < upper:
        upper = snapped
    # instruction beyond the power rating is never delivered; its penalty is
    # a constant the search does not see
    beyond = tr.T * float(np.sum(m.theta * np.maximum(tr.r - p.P, 0.0)
                                 + m.pi * np.maximum(-tr.r - p.P, 0.0)))
    # the search accumulates costs in a different order than total_cost
    upper = upper - beyond + 1e-9 * max(1.0, abs(upper))
    best, acts, nodes, status = _kernels.offline_search(
        r, float(e_0), p.e_min, p.e_max, p.T, p.eta_c, p.eta_d, p.E,
        int(cfg.levels_per_step), m.theta, m.pi, p.E * p.R, phi.alpha, phi.beta,
        float(tol), int(cfg.budget), float(upper))
    if status:
        raise BudgetExceeded(
            f"search exceeded {cfg.budget} nodes (N={N}, K={cfg.levels_per_step})")
    if not best < math.inf:
        raise AssertionError("no grid dispatch under an achievable cost bound")
    best += beyond
    acts = np.asarray(acts)
    dsp = Dispatch(np.where(r >= 0.0, acts, 0.0), np.where(r < 0.0, acts, 0.0))
    simulate_soc(e_0, dsp, p)
    cost = total_cost(dsp, tr, p, phi, m, tol)
    if not np.isclose(cost.j_total, best, rtol=1e-9, atol=1e-9):
        raise AssertionError(f"search cost {best} disagrees with recount {cost.j_total}")
    return OracleResult(dsp, cost, int(nodes), cfg.levels_per_step)


def run_threshold(tr: RegulationTrace, p: BatteryParams, phi: StressFunction,
                  m: MarketPrices, e_0: float, tol: float = DEFAULT_TOL):
    st = policy_init(e_0, m, p, phi)
    r = np.clip(tr.r, -p.P, p.P)
    c, d, _, _, _ = _kernels.run_controller(
        r, float(e_0), st.u_hat * p.E, p.e_min, p.e_max, p.T, p.eta_c, p.eta_d,
        p.E, float(tol), False)
    dsp = Dispatch(c, d)
    return dsp, total_cost(dsp, tr, p, phi, m, tol)


@dataclass(frozen=True)
class GapMeasurement:
    gap: float
    raw_gap: float
    slack: float
    policy: CostBreakdown
    optimum: OracleResult
    refined: OracleResult

    def to_dict(self) -> dict:
        return {
            "optimum": self.optimum.cost.j_total,
            "dispatch": {"c": self.optimum.dispatch.c.tolist(),
                         "d": self.optimum.dispatch.d.tolist()},
            "gap_vs_policy": self.gap,
            "slack": self.slack,
            "policy": self.policy.to_dict(),
            "optimum_breakdown": self.optimum.cost.to_dict(),
            "refined_optimum": self.refined.cost.j_total,
            "levels": self.optimum.levels,
        }


def gap_against(j_policy: float, tr: RegulationTrace, p: BatteryParams, phi: StressFunction,
                m: MarketPrices, e_0: float, cfg: OracleConfig = OracleConfig(),
                tol: float = DEFAULT_TOL) -> tuple[float, float, float, OracleResult, OracleResult]:
    """Compare a policy cost with the grid optimum.

    Returns (gap, raw gap, slack, optimum, refined optimum). ``slack`` is the
    drop of the optimum when the grid is refined to 2K-1 levels, an
    empirical size of the discretization error.
    """
    opt = brute_force_offline(tr, p, phi, m, e_0, cfg, tol)
    # every K-level sequence is also on the refined grid
    fine = brute_force_offline(tr, p, phi, m, e_0, cfg.refined(), tol, upper=opt.cost.j_total)
    raw = j_policy - opt.cost.j_total
    if raw < 0.0:
        log.debug("policy beats the K=%d grid optimum by %.3g", cfg.levels_per_step, -raw)
    slack = max(opt.cost.j_total - fine.cost.j_total, 0.0)
    return max(raw, 0.0), raw, slack, opt, fine


def measure_gap(tr: RegulationTrace, p: BatteryParams, phi: StressFunction,
                m: MarketPrices, e_0: float, cfg: OracleConfig = OracleConfig(),
                tol: float = DEFAULT_TOL) -> GapMeasurement:
    """Threshold-policy cost minus the grid optimum, clamped at zero."""
    _, pol = run_threshold(tr, p, phi, m, e_0, tol)
    gap, raw, slack, opt, fine = gap_against(pol.j_total, tr, p, phi, m, e_0, cfg, tol)
    return GapMeasurement(gap, raw, slack, pol, opt, fine)
