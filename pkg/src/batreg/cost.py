"""Cycle-aging cost, regulation settlement cost and their sum."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .core import BatteryParams, Dispatch, MarketPrices, RegulationTrace
from .rainflow import DEFAULT_TOL, CycleSet, count_dispatch

_DOMAIN_EPS = 1e-12


class StressFunction:
    """Convex cycle-depth stress model: life fraction lost per cycle of depth u.

    Subclasses provide ``value``, ``derivative`` and optionally a closed-form
    ``derivative_inverse``; the default inverse bisects the (increasing)
    derivative on [0, 1] and saturates at the interval ends.
    """

    def value(self, u):
        raise NotImplementedError

    def derivative(self, u):
        raise NotImplementedError

    def derivative_inverse(self, y: float, tol: float = 1e-12) -> float:
        if y <= self.derivative(0.0):
            return 0.0
        if y >= self.derivative(1.0):
            return 1.0
        lo, hi = 0.0, 1.0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if self.derivative(mid) < y:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def is_strictly_convex(self, samples: int = 257) -> bool:
        u = np.linspace(0.0, 1.0, samples)
        g = np.asarray([self.derivative(x) for x in u], dtype=float)
        return bool(np.all(np.diff(g) > 0.0))

    def __call__(self, u):
        return self.value(u)


@dataclass(frozen=True)
class PowerLawStress(StressFunction):
    """Phi(u) = alpha * u**beta with alpha > 0, beta > 1."""

    alpha: float = 5.24e-4
    beta: float = 2.03

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.beta > 1.0:
            raise ValueError(f"beta must exceed 1 for strict convexity, got {self.beta}")

    def value(self, u):
        return self.alpha * np.power(u, self.beta)

    def derivative(self, u):
        return self.alpha * self.beta * np.power(u, self.beta - 1.0)

    def derivative_inverse(self, y: float, tol: float = 1e-12) -> float:
        if y <= 0.0:
            return 0.0
        return float((y / (self.alpha * self.beta)) ** (1.0 / (self.beta - 1.0)))

    def is_strictly_convex(self, samples: int = 257) -> bool:
        return True


class ConvexStress(StressFunction):
    """Stress model from user callables (value, derivative[, derivative inverse])."""

    def __init__(self, value: Callable, derivative: Callable,
                 derivative_inverse: Optional[Callable] = None):
        self._value = value
        self._derivative = derivative
        self._inverse = derivative_inverse

    def value(self, u):
        return self._value(u)

    def derivative(self, u):
        return self._derivative(u)

    def derivative_inverse(self, y: float, tol: float = 1e-12) -> float:
        if self._inverse is not None:
            return float(self._inverse(y))
        return super().derivative_inverse(y, tol)


DEFAULT_STRESS = PowerLawStress()


@dataclass(frozen=True)
class CostBreakdown:
    j_cyc: float
    j_reg: float
    j_total: float
    delta_life: float

    def to_dict(self) -> dict:
        return asdict(self)


def stress(phi: StressFunction, u: float) -> float:
    if not -_DOMAIN_EPS <= u <= 1.0 + _DOMAIN_EPS:
        raise ValueError(f"cycle depth must lie in [0, 1], got {u}")
    return float(phi.value(min(max(u, 0.0), 1.0)))


def _phi_sum(phi: StressFunction, depths: np.ndarray) -> float:
    if depths.size == 0:
        return 0.0
    if depths.max() > 1.0 + _DOMAIN_EPS:
        raise ValueError(f"cycle depth {depths.max()} exceeds 1")
    vals = np.asarray(phi.value(np.minimum(depths, 1.0)), dtype=np.float64)
    return float(np.sum(vals))


def delta_life(cs: CycleSet, phi: StressFunction) -> float:
    """Life fraction consumed: full cycles at full weight, residue halves at half."""
    return _phi_sum(phi, cs.u) + 0.5 * _phi_sum(phi, cs.v) + 0.5 * _phi_sum(phi, cs.w)


def cycle_aging_cost(dsp: Dispatch, p: BatteryParams, phi: StressFunction,
                     tol: float = DEFAULT_TOL) -> float:
    return delta_life(count_dispatch(dsp, p, tol), phi) * p.E * p.R


def settlement_cost(dsp: Dispatch, tr: RegulationTrace, m: MarketPrices) -> float:
    """Penalty for deviating from the instructed set-points.

    With net charge ``c - d`` against instruction ``r`` (positive = charge),
    the shortfall ``r - c + d`` is over-response (extra net injection) and
    pays ``theta``; the surplus ``c - d - r`` is under-response and pays
    ``pi``.
    """
    if len(dsp) != len(tr):
        raise ValueError(f"dispatch length {len(dsp)} != trace length {len(tr)}")
    over = tr.r - dsp.c + dsp.d
    return float(tr.T * m.theta * np.sum(np.maximum(over, 0.0))
                 + tr.T * m.pi * np.sum(np.maximum(-over, 0.0)))


def total_cost(dsp: Dispatch, tr: RegulationTrace, p: BatteryParams,
               phi: StressFunction, m: MarketPrices, tol: float = DEFAULT_TOL,
               cycles: Optional[CycleSet] = None) -> CostBreakdown:
    """Aging plus settlement. ``cycles`` may be passed to skip recounting."""
    if not math.isclose(tr.T, p.T, rel_tol=1e-12):
        raise ValueError(f"trace interval {tr.T} h differs from battery interval {p.T} h")
    cs = count_dispatch(dsp, p, tol) if cycles is None else cycles
    dl = delta_life(cs, phi)
    j_cyc = dl * p.E * p.R
    j_reg = settlement_cost(dsp, tr, m)
    return CostBreakdown(j_cyc=j_cyc, j_reg=j_reg, j_total=j_cyc + j_reg, delta_life=dl)
