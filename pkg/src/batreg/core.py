"""Battery, market and trace data types plus the SoC difference equation.

Units throughout: MWh, MW, hours and $/MWh.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels


class SocBoundsError(ValueError):
    """A SoC trajectory left [e_min, e_max]."""

    def __init__(self, index: int, value: float, e_min: float, e_max: float):
        self.index = index
        self.value = value
        super().__init__(
            f"SoC bound violated at n={index}: e={value!r} not in [{e_min}, {e_max}]"
        )


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


@dataclass(frozen=True)
class BatteryParams:
    """Physical and economic description of the battery.

    ``E`` is the nameplate capacity used to normalize cycle depths; it is
    independent of the operating window ``[e_min, e_max]``.
    """

    e_min: float = 0.1
    e_max: float = 0.95
    E: float = 1.0
    P: float = 1.0
    eta_c: float = 1.0
    eta_d: float = 1.0
    R: float = 300_000.0
    T: float = 0.25

    def __post_init__(self):
        _check(0.0 <= self.e_min < self.e_max <= self.E,
               f"need 0 <= e_min < e_max <= E, got {self.e_min}, {self.e_max}, {self.E}")
        _check(0.0 < self.eta_c <= 1.0, f"eta_c must be in (0, 1], got {self.eta_c}")
        _check(0.0 < self.eta_d <= 1.0, f"eta_d must be in (0, 1], got {self.eta_d}")
        _check(self.P > 0.0, f"P must be positive, got {self.P}")
        _check(self.R >= 0.0, f"R must be non-negative, got {self.R}")
        _check(self.T > 0.0, f"T must be positive, got {self.T}")

    @classmethod
    def with_round_trip(cls, eta: float, **kw) -> "BatteryParams":
        """Split a round-trip efficiency symmetrically into eta_c = eta_d = sqrt(eta)."""
        s = math.sqrt(eta)
        return cls(eta_c=s, eta_d=s, **kw)

    @property
    def round_trip(self) -> float:
        return self.eta_c * self.eta_d


@dataclass(frozen=True)
class MarketPrices:
    """Constant penalty prices in $/MWh.

    ``theta`` prices over-response (net injection above the instruction:
    surplus discharge or deficient charge); ``pi`` prices under-response
    (surplus charge or deficient discharge).
    """

    theta: float = 50.0
    pi: float = 50.0

    def __post_init__(self):
        _check(self.theta >= 0.0, f"theta must be non-negative, got {self.theta}")
        _check(self.pi >= 0.0, f"pi must be non-negative, got {self.pi}")


@dataclass(frozen=True)
class RegulationTrace:
    """Instructed set-points in MW (positive = charge) at a fixed interval T (hours)."""

    r: np.ndarray
    T: float

    def __post_init__(self):
        r = np.ascontiguousarray(self.r, dtype=np.float64)
        _check(r.ndim == 1 and r.size >= 1, "trace needs at least one set-point")
        _check(bool(np.all(np.isfinite(r))), "trace contains non-finite values")
        _check(self.T > 0.0, f"T must be positive, got {self.T}")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)

    def __len__(self) -> int:
        return self.r.size

    def repeated(self, times: int = 2) -> "RegulationTrace":
        return RegulationTrace(np.tile(self.r, times), self.T)


@dataclass(frozen=True)
class Dispatch:
    """Charge and discharge power sequences (MW)."""

    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(self.c, dtype=np.float64)
        d = np.ascontiguousarray(self.d, dtype=np.float64)
        _check(c.ndim == 1 and c.shape == d.shape, "c and d must be 1-D and equal length")
        _check(bool(np.all(c >= 0.0)) and bool(np.all(d >= 0.0)), "c and d must be non-negative")
        bad = np.flatnonzero((c > 0.0) & (d > 0.0))
        if bad.size:
            raise ValueError(f"simultaneous charge and discharge at n={int(bad[0])}")
        c.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @classmethod
    def zeros(cls, n: int) -> "Dispatch":
        return cls(np.zeros(n), np.zeros(n))

    @classmethod
    def from_net(cls, net) -> "Dispatch":
        """Build from a signed net power (positive = charge)."""
        net = np.asarray(net, dtype=np.float64)
        return cls(np.maximum(net, 0.0), np.maximum(-net, 0.0))

    @property
    def net(self) -> np.ndarray:
        return self.c - self.d

    def __len__(self) -> int:
        return self.c.size

    def check_power(self, p: BatteryParams) -> None:
        _check(bool(np.all(self.c <= p.P)) and bool(np.all(self.d <= p.P)),
               f"dispatch exceeds power rating P={p.P}")


@dataclass(frozen=True)
class SocSeries:
    """Stored energy e_0..e_N in MWh."""

    e: np.ndarray = field(repr=False)

    def __post_init__(self):
        e = np.ascontiguousarray(self.e, dtype=np.float64)
        e.setflags(write=False)
        object.__setattr__(self, "e", e)

    def __len__(self) -> int:
        return self.e.size


def soc_step(e_n: float, c_n: float, d_n: float, p: BatteryParams) -> float:
    """Advance the SoC by one interval; no clipping is applied."""
    if c_n > 0.0 and d_n > 0.0:
        raise ValueError("simultaneous charge and discharge")
    if c_n < 0.0 or d_n < 0.0:
        raise ValueError("c_n and d_n must be non-negative")
    return float(_kernels.soc_next(float(e_n), float(c_n), float(d_n), p.T, p.eta_c, p.eta_d))


def simulate_soc(e_0: float, dsp: Dispatch, p: BatteryParams) -> SocSeries:
    """Roll the SoC forward over a dispatch; raises SocBoundsError on the first violation."""
    if not p.e_min <= e_0 <= p.e_max:
        raise SocBoundsError(0, e_0, p.e_min, p.e_max)
    e = _kernels.roll_soc(float(e_0), dsp.c, dsp.d, p.T, p.eta_c, p.eta_d)
    out = (e < p.e_min) | (e > p.e_max)
    if out.any():
        i = int(np.argmax(out))
        raise SocBoundsError(i, float(e[i]), p.e_min, p.e_max)
    return SocSeries(e)


def normalize_profile(s: SocSeries | np.ndarray, p: BatteryParams) -> np.ndarray:
    e = s.e if isinstance(s, SocSeries) else np.asarray(s, dtype=np.float64)
    return e / p.E
