"""Trace generation and ingestion, the simulation harness and batch experiments.

Synthetic traces come from numpy's PCG64 generator seeded with the trial
seed, so a (seed, N, P) triple reproduces the same set-points on every
platform.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .analysis import optimality_gap_bound
from .core import BatteryParams, Dispatch, MarketPrices, RegulationTrace, SocSeries, simulate_soc
from .cost import CostBreakdown, StressFunction, total_cost
from .offline import OracleConfig, gap_against
from .policy import compute_u_hat
from .rainflow import DEFAULT_TOL, CycleSet, count_dispatch

log = logging.getLogger(__name__)

# PJM-style feeds update every 2 seconds
PJM_INTERVAL_H = 2.0 / 3600.0
POLICIES = ("threshold", "simple")

BATCH_COLUMNS = ("case", "theta", "pi", "eta", "N", "u_hat", "epsilon_theory", "max_gap",
                 "mean_objective_offline", "mean_objective_policy", "mean_objective_simple")


class InvariantViolation(RuntimeError):
    """A run produced results that contradict a model identity."""


class TraceFormatError(ValueError):
    """Malformed trace or profile file."""


class ClipWarning(UserWarning):
    """Set-points outside [-P, P] were clipped on load."""

    def __init__(self, count: int, path: str):
        self.count = count
        super().__init__(f"{path}: clipped {count} set-point(s) to the power rating")


# --------------------------------------------------------------------------- traces

def generate_trace(seed: int, N: int, P: float = 1.0, T: float = 0.25) -> RegulationTrace:
    """I.i.d. set-points uniform on [-P, P] from PCG64 seeded with ``seed``."""
    if N < 1:
        raise ValueError("N must be at least 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    return RegulationTrace(rng.uniform(-1.0, 1.0, N) * P, T)


def repeat_trace(tr: RegulationTrace, times: int = 2) -> RegulationTrace:
    if times < 1:
        raise ValueError("times must be at least 1")
    return tr.repeated(times)


def pjm_like_trace(seed: int, N: int, P: float = 1.0,
                   T: float = PJM_INTERVAL_H) -> RegulationTrace:
    """Fast, roughly energy-neutral signal shaped like a normalized RegD feed.

    A slow AR(1) component (time constant about 10 minutes) plus a fast one
    (about 30 seconds), scaled and clipped to [-P, P].
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    steps_per_min = (1.0 / 60.0) / T
    out = np.zeros(N)
    for tau_min, weight in ((10.0, 0.7), (0.5, 0.3)):
        rho = math.exp(-1.0 / (tau_min * steps_per_min))
        y = _kernels.ar1_filter(rng.standard_normal(N), rho)
        out += weight * y * math.sqrt(1.0 - rho * rho)
    return RegulationTrace(np.clip(0.8 * out, -1.0, 1.0) * P, T)


def _read_rows(path, column: str, allow_empty: bool):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = None
        values = []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if header is None:
                header = [cell.strip().lower() for cell in row]
                if header != ["t", column]:
                    raise TraceFormatError(
                        f"{path}:{line}: expected header 't,{column}', got {','.join(row)!r}")
                continue
            if len(row) != 2:
                raise TraceFormatError(f"{path}:{line}: expected 2 fields, got {len(row)}")
            if not row[0].strip():
                raise TraceFormatError(f"{path}:{line}: empty t field")
            try:
                x = float(row[1])
            except ValueError:
                raise TraceFormatError(f"{path}:{line}: {column}={row[1]!r} is not a number") from None
            if not math.isfinite(x):
                raise TraceFormatError(f"{path}:{line}: {column}={row[1]!r} is not finite")
            values.append(x)
    if not values and not allow_empty:
        raise TraceFormatError(f"{path}: no data rows")
    return np.asarray(values, dtype=np.float64)


def load_trace_csv(path, P: float = 1.0, T: float = PJM_INTERVAL_H, normalized: bool = False,
                   negate: bool = False) -> RegulationTrace:
    """Read a ``t,r`` CSV into a trace.

    ``t`` is only checked to be present; rows are taken in file order.
    Normalized values are scaled by ``P``; ``negate`` flips feeds that use
    positive for discharge. Values beyond the power rating are clipped and
    reported through a :class:`ClipWarning`.
    """
    r = _read_rows(path, "r", allow_empty=False)
    if normalized:
        r = r * P
    if negate:
        r = -r
    n_clip = int(np.count_nonzero(np.abs(r) > P))
    if n_clip:
        warnings.warn(ClipWarning(n_clip, str(path)), stacklevel=2)
        r = np.clip(r, -P, P)
    return RegulationTrace(r, T)


def load_profile_csv(path) -> np.ndarray:
    """Read a ``t,s`` CSV of normalized SoC samples. Empty files give an empty profile."""
    if Path(path).stat().st_size == 0:
        return np.zeros(0)
    return _read_rows(path, "s", allow_empty=True)


# --------------------------------------------------------------------------- runs

@dataclass(frozen=True)
class SimReport:
    policy: str
    breakdown: CostBreakdown
    soc: SocSeries
    cycles: CycleSet
    dispatch: Dispatch
    metadata: dict = field(default_factory=dict)
    gap: Optional[float] = None
    slack: Optional[float] = None
    optimum: Optional[float] = None

    def to_dict(self, series: bool = False) -> dict:
        out = {
            "policy": self.policy,
            "breakdown": self.breakdown.to_dict(),
            "cycles": {"n_full": int(self.cycles.u.size), "n_charge_half": int(self.cycles.v.size),
                       "n_discharge_half": int(self.cycles.w.size)},
            "gap": self.gap,
            "slack": self.slack,
            "optimum": self.optimum,
            "metadata": dict(self.metadata),
        }
        if series:
            out["soc"] = self.soc.e.tolist()
            out["c"] = self.dispatch.c.tolist()
            out["d"] = self.dispatch.d.tolist()
            out["cycles"].update(self.cycles.to_dict())
        return out


def default_e0(p: BatteryParams) -> float:
    return 0.5 * (p.e_min + p.e_max)


def _check_conservation(cs: CycleSet, dsp: Dispatch, p: BatteryParams) -> None:
    up = float(np.sum(dsp.c)) * p.T * p.eta_c / p.E
    down = float(np.sum(dsp.d)) * p.T / (p.eta_d * p.E)
    su = float(np.sum(cs.u))
    for name, lhs, rhs in (("charge", su + float(np.sum(cs.v)), up),
                           ("discharge", su + float(np.sum(cs.w)), down)):
        if abs(lhs - rhs) > 1e-9 * max(1.0, rhs):
            raise InvariantViolation(
                f"{name} depths sum to {lhs!r} but normalized throughput is {rhs!r}")


def run_simulation(policy_kind: str, tr: RegulationTrace, e_0: float, p: BatteryParams,
                   phi: StressFunction, m: MarketPrices, oracle: Optional[OracleConfig] = None,
                   tol: float = DEFAULT_TOL, metadata: Optional[dict] = None) -> SimReport:
    """Step a policy over the trace and account for its costs.

    The cycle count kept while stepping is checked against a recount of the
    finished dispatch, and the depth sums against the throughput. With an
    ``oracle`` config the grid optimum is solved when the trace is short
    enough.
    """
    if policy_kind not in POLICIES:
        raise ValueError(f"unknown policy {policy_kind!r}; expected one of {POLICIES}")
    if not math.isclose(tr.T, p.T, rel_tol=1e-12):
        raise ValueError(f"trace interval {tr.T} h differs from battery interval {p.T} h")
    simple = policy_kind == "simple"
    u_hat = 1.0 if simple else compute_u_hat(m, p, phi)
    r = np.clip(tr.r, -p.P, p.P)
    c, d, e, u, res = _kernels.run_controller(
        r, float(e_0), u_hat * p.E, p.e_min, p.e_max, p.T, p.eta_c, p.eta_d, p.E,
        float(tol), simple)
    dsp = Dispatch(c, d)
    soc = simulate_soc(e_0, dsp, p)
    v, w = _kernels.split_residue(res)
    streamed = CycleSet(u, v, w)
    if not streamed.same_as(count_dispatch(dsp, p, tol)):
        raise InvariantViolation("streaming cycle count differs from the batch recount")
    _check_conservation(streamed, dsp, p)
    cost = total_cost(dsp, tr, p, phi, m, tol, cycles=streamed)
    meta = {"N": len(tr), "theta": m.theta, "pi": m.pi, "eta_c": p.eta_c, "eta_d": p.eta_d,
            "e0": float(e_0), "u_hat": compute_u_hat(m, p, phi)}
    meta.update(metadata or {})
    report = SimReport(policy_kind, cost, soc, streamed, dsp, meta)
    if oracle is not None and len(tr) <= oracle.max_steps:
        gap, _, slack, opt, _ = gap_against(cost.j_total, tr, p, phi, m, e_0, oracle, tol)
        report = replace(report, gap=gap, slack=slack, optimum=opt.cost.j_total)
    return report


# --------------------------------------------------------------------------- batch

@dataclass(frozen=True)
class BatchCase:
    name: str
    theta: float
    pi: float
    eta: float = 1.0
    N: int = 3
    repeat: int = 1
    """the base trace is repeated this many times (duration doubling uses 2)"""

    @property
    def steps(self) -> int:
        return self.N * self.repeat


def table_cases(N: int = 3) -> list[BatchCase]:
    """Nine cases: balanced prices at three levels, three efficiency-loss
    cases, and the latter repeated to twice the duration."""
    base = [BatchCase("1", 50, 50, 1.0, N), BatchCase("2", 100, 100, 1.0, N),
            BatchCase("3", 200, 200, 1.0, N), BatchCase("4", 50, 50, 0.85, N),
            BatchCase("5", 80, 20, 0.85, N), BatchCase("6", 20, 80, 0.85, N)]
    doubled = [replace(c, name=str(int(c.name) + 3), repeat=2) for c in base[3:]]
    return base + doubled


@dataclass(frozen=True)
class TrialResult:
    case: str
    seed: int
    policy: SimReport
    simple: SimReport


def _params_for(case: BatchCase, p: BatteryParams) -> BatteryParams:
    s = math.sqrt(case.eta)
    return replace(p, eta_c=s, eta_d=s)


def run_trial(case: BatchCase, seed: int, p: BatteryParams, phi: StressFunction,
              e_0: Optional[float] = None, oracle: Optional[OracleConfig] = None,
              tol: float = DEFAULT_TOL) -> TrialResult:
    pc = _params_for(case, p)
    m = MarketPrices(case.theta, case.pi)
    tr = repeat_trace(generate_trace(seed, case.N, pc.P, pc.T), case.repeat)
    e0 = default_e0(pc) if e_0 is None else e_0
    meta = {"seed": seed, "case": case.name}
    pol = run_simulation("threshold", tr, e0, pc, phi, m, oracle, tol, meta)
    sim = run_simulation("simple", tr, e0, pc, phi, m, None, tol, meta)
    if sim.breakdown.j_total < pol.breakdown.j_total - 1e-9 * max(1.0, sim.breakdown.j_total):
        log.info("case %s seed %d: simple policy beats the threshold policy", case.name, seed)
    return TrialResult(case.name, seed, pol, sim)


def _trial_task(args):
    return run_trial(*args)


def run_batch(cases: Sequence[BatchCase], n_trials: int, p: BatteryParams, phi: StressFunction,
              e_0: Optional[float] = None, oracle: Optional[OracleConfig] = OracleConfig(),
              jobs: int = 1, tol: float = DEFAULT_TOL,
              first_seed: int = 1) -> tuple[list[dict], list[TrialResult]]:
    """Run ``n_trials`` consecutive seeds from ``first_seed`` for every case
    and aggregate one row per case.

    Trials are independent and may run in ``jobs`` worker processes; results
    are collected in (case, seed) order so the rows do not depend on it.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    tasks = [(c, s, p, phi, e_0, oracle, tol) for c in cases
             for s in range(first_seed, first_seed + n_trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            trials = list(ex.map(_trial_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        trials = [_trial_task(t) for t in tasks]
    rows = []
    for i, case in enumerate(cases):
        chunk = trials[i * n_trials:(i + 1) * n_trials]
        pc = _params_for(case, p)
        m = MarketPrices(case.theta, case.pi)
        gaps = [t.policy.gap for t in chunk if t.policy.gap is not None]
        offl = [t.policy.optimum for t in chunk if t.policy.optimum is not None]
        rows.append({
            "case": case.name,
            "theta": case.theta,
            "pi": case.pi,
            "eta": case.eta,
            "N": case.steps,
            "u_hat": compute_u_hat(m, pc, phi),
            "epsilon_theory": optimality_gap_bound(m, pc, phi).epsilon,
            "max_gap": max(gaps) if len(gaps) == len(chunk) else math.nan,
            "mean_objective_offline": float(np.mean(offl)) if len(offl) == len(chunk) else math.nan,
            "mean_objective_policy": float(np.mean([t.policy.breakdown.j_total for t in chunk])),
            "mean_objective_simple": float(np.mean([t.simple.breakdown.j_total for t in chunk])),
        })
    return rows, trials
