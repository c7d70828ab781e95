"""Rainflow cycle identification on normalized SoC profiles.

Full cycles are taken with the three-range rule on consecutive extrema
(inner range not larger than either neighbour, ties included). Whatever is
left, the residue, is split into half cycles: rising halves are charge
halves (``v``), falling halves are discharge halves (``w``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import BatteryParams, Dispatch

DEFAULT_TOL = 1e-12


def _ro(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CycleSet:
    """Full-cycle depths ``u`` and residue half-cycle depths ``v`` (charge), ``w`` (discharge)."""

    u: np.ndarray = field(default_factory=lambda: np.zeros(0))
    v: np.ndarray = field(default_factory=lambda: np.zeros(0))
    w: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name in ("u", "v", "w"):
            a = _ro(getattr(self, name))
            a = a[a > 0.0] if np.any(a <= 0.0) else a
            object.__setattr__(self, name, _ro(a))

    @property
    def empty(self) -> bool:
        return self.u.size == 0 and self.v.size == 0 and self.w.size == 0

    def sorted(self) -> "CycleSet":
        return CycleSet(np.sort(self.u), np.sort(self.v), np.sort(self.w))

    def same_as(self, other: "CycleSet") -> bool:
        """Exact multiset equality of all three depth lists."""
        a, b = self.sorted(), other.sorted()
        return all(np.array_equal(getattr(a, k), getattr(b, k)) for k in "uvw")

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in "uvw"}


def extract_extrema(profile, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Reduce a profile to alternating turning points.

    Interior samples inside a monotone run are dropped, and moves of at most
    ``tol`` from the last kept point are treated as a plateau (the first
    sample of the plateau is kept). The first sample is always kept; the
    last sample survives unless it sits on such a plateau.

    >>> extract_extrema([0.1, 0.2, 0.3, 0.2]).tolist()
    [0.1, 0.3, 0.2]
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    x = np.ascontiguousarray(profile, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("profile must be one-dimensional")
    return _kernels.extract_extrema(x, float(tol))


def residue_to_halves(residue) -> tuple[np.ndarray, np.ndarray]:
    return _kernels.split_residue(np.ascontiguousarray(residue, dtype=np.float64))


def rainflow_count(extrema) -> CycleSet:
    """Count full cycles and residue half cycles of an alternating extrema sequence."""
    s = np.ascontiguousarray(extrema, dtype=np.float64)
    if s.size == 0:
        return CycleSet()
    u, res = _kernels.rainflow_batch(s)
    v, w = _kernels.split_residue(res)
    return CycleSet(u, v, w)


def rainflow_residue(extrema) -> np.ndarray:
    s = np.ascontiguousarray(extrema, dtype=np.float64)
    if s.size == 0:
        return s
    return _kernels.rainflow_batch(s)[1]


def dispatch_profile(dsp: Dispatch, p: BatteryParams) -> np.ndarray:
    """Cumulative normalized SoC swing, anchored at 0 (length N + 1)."""
    inc = (p.T * p.eta_c / p.E) * dsp.c - (p.T / (p.eta_d * p.E)) * dsp.d
    out = np.empty(inc.size + 1)
    out[0] = 0.0
    np.cumsum(inc, out=out[1:])
    return out


def count_dispatch(dsp: Dispatch, p: BatteryParams, tol: float = DEFAULT_TOL) -> CycleSet:
    return rainflow_count(extract_extrema(dispatch_profile(dsp, p), tol))


class ResidueStack:
    """Incremental rainflow counter.

    Accepts either turning points or raw profile samples (monotone runs are
    merged on the fly), emits full cycles as soon as they close, and keeps
    the residue for :meth:`finalize`. One owner at a time: not thread-safe.
    """

    def __init__(self, tol: float = DEFAULT_TOL, capacity: int = 64):
        self.tol = float(tol)
        self._buf = np.empty(max(int(capacity), 4))
        self._n = 0
        self._cyc = np.empty(self._buf.size + 2)

    def __len__(self) -> int:
        return self._n

    @property
    def points(self) -> np.ndarray:
        return self._buf[: self._n].copy()

    def push(self, s: float) -> np.ndarray:
        """Add one point; returns the full-cycle depths it closed (possibly empty)."""
        if self._n + 2 > self._buf.size:
            grown = np.empty(2 * self._buf.size)
            grown[: self._n] = self._buf[: self._n]
            self._buf = grown
            self._cyc = np.empty(grown.size + 2)
        self._n, nc = _kernels.stack_push(self._buf, self._n, float(s), self.tol, self._cyc, 0)
        return self._cyc[:nc].copy()

    def extend(self, points) -> np.ndarray:
        out = [self.push(x) for x in np.asarray(points, dtype=np.float64).ravel()]
        return np.concatenate(out) if out else np.zeros(0)

    def finalize(self) -> CycleSet:
        """Half cycles of the current residue (full cycles are not repeated here)."""
        v, w = _kernels.split_residue(self._buf[: self._n])
        return CycleSet(v=v, w=w)


def streaming_push(st: ResidueStack, s: float) -> tuple[ResidueStack, np.ndarray]:
    return st, st.push(s)


def streaming_finalize(st: ResidueStack) -> CycleSet:
    return st.finalize()


def streaming_count(points, tol: float = DEFAULT_TOL) -> CycleSet:
    """Whole-sequence convenience wrapper around :class:`ResidueStack`."""
    pts = np.asarray(points, dtype=np.float64).ravel()
    st = ResidueStack(tol, capacity=pts.size + 4)
    u = st.extend(pts)
    halves = st.finalize()
    return CycleSet(u, halves.v, halves.w)
