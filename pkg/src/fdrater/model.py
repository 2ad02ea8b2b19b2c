"""Domain types and rate arithmetic for full-duplex links.

Everything here works in linear units. Powers are normalized so that the
default per-station budget is 1; gains and noise are whatever linear scale
the caller picks, only their ratios matter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple, Union

import numpy as np

__all__ = [
    "LN2",
    "log2",
    "db_to_linear",
    "linear_to_db",
    "FlatSic",
    "QuadraticSic",
    "TabulatedSic",
    "SicProfile",
    "OutOfRangeError",
    "StationParams",
    "LinkInstance",
    "Allocation",
    "RateReport",
    "unit_rsi",
    "xinr_ms",
    "sum_rate_single",
    "sum_rate_two_uni",
    "sum_rate_multi",
    "water_fill",
]

LN2 = math.log(2.0)


def log2(x):
    # Single place for the base change so derivative code shares the constant.
    return np.log(x) / LN2


def db_to_linear(db):
    return np.power(10.0, np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


class OutOfRangeError(ValueError):
    """Raised when a tabulated profile is queried outside its sample span."""


@dataclass(frozen=True)
class FlatSic:
    """Residual SI is a constant fraction ``g`` of the transmitted power."""

    g: float

    def __post_init__(self):
        if not self.g >= 0:
            raise ValueError(f"residual SI fraction must be >= 0, got {self.g}")


@dataclass(frozen=True)
class QuadraticSic:
    """Residual SI grows with the squared channel distance from the canceller.

    ``g_m`` is the residual fraction per unit transmitted power at a distance
    of one channel from the canceller center.
    """

    g_m: float

    def __post_init__(self):
        if not self.g_m >= 0:
            raise ValueError(f"g_m must be >= 0, got {self.g_m}")


@dataclass(frozen=True)
class TabulatedSic:
    """Measured isolation versus frequency offset from the canceller center.

    Isolation is stored in dB (negative means suppression) and interpolated
    linearly in dB. ``digital_sic_db`` is extra flat cancellation applied on
    top, and ``channel_width_hz`` maps channel-index offsets to Hz.
    """

    offsets_hz: np.ndarray
    isolation_db: np.ndarray
    digital_sic_db: float = 0.0
    channel_width_hz: float = 600e3

    def __post_init__(self):
        offsets = np.asarray(self.offsets_hz, dtype=float)
        iso = np.asarray(self.isolation_db, dtype=float)
        if offsets.ndim != 1 or offsets.shape != iso.shape or offsets.size < 2:
            raise ValueError("offsets and isolation must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(offsets) <= 0):
            raise ValueError("tabulated offsets must be strictly increasing")
        if not np.all(np.isfinite(iso)):
            raise ValueError("isolation values must be finite")
        if not self.channel_width_hz > 0:
            raise ValueError("channel width must be positive")
        object.__setattr__(self, "offsets_hz", offsets)
        object.__setattr__(self, "isolation_db", iso)

    def total_db(self, offset_hz):
        """Isolation plus digital cancellation at ``offset_hz``, in dB."""
        offset_hz = np.asarray(offset_hz, dtype=float)
        lo, hi = self.offsets_hz[0], self.offsets_hz[-1]
        if np.any(offset_hz < lo) or np.any(offset_hz > hi):
            raise OutOfRangeError(
                f"offset outside tabulated span [{lo:g}, {hi:g}] Hz"
            )
        return np.interp(offset_hz, self.offsets_hz, self.isolation_db) - self.digital_sic_db

    def fraction(self, offset_hz):
        """Residual SI as a linear fraction of transmitted power."""
        return db_to_linear(self.total_db(offset_hz))


SicProfile = Union[FlatSic, QuadraticSic, TabulatedSic]


@dataclass(frozen=True)
class StationParams:
    noise: float
    sic: SicProfile = field(default_factory=lambda: FlatSic(0.0))
    p_max: float = 1.0

    def __post_init__(self):
        if not self.p_max > 0:
            raise ValueError(f"p_max must be positive, got {self.p_max}")
        if not self.noise > 0:
            raise ValueError(f"noise must be positive, got {self.noise}")

    @property
    def g(self) -> float:
        """Residual fraction of a frequency-flat profile."""
        if not isinstance(self.sic, FlatSic):
            raise TypeError(f"expected a flat SIC profile, got {type(self.sic).__name__}")
        return self.sic.g


@dataclass(frozen=True)
class LinkInstance:
    """An OFDM bidirectional link between a BS and one MS."""

    h_mb: np.ndarray
    h_bm: np.ndarray
    bs: StationParams
    ms: StationParams

    def __post_init__(self):
        h_mb = np.atleast_1d(np.asarray(self.h_mb, dtype=float))
        h_bm = np.atleast_1d(np.asarray(self.h_bm, dtype=float))
        if h_mb.ndim != 1 or h_mb.shape != h_bm.shape:
            raise ValueError("gain lists must be 1-D and of equal length")
        if np.any(h_mb <= 0) or np.any(h_bm <= 0):
            raise ValueError("channel gains must be positive")
        if not isinstance(self.bs.sic, FlatSic):
            raise TypeError("the BS must have a frequency-flat SIC profile")
        object.__setattr__(self, "h_mb", h_mb)
        object.__setattr__(self, "h_bm", h_bm)

    @property
    def k_channels(self) -> int:
        return self.h_mb.size

    @property
    def channels(self) -> np.ndarray:
        """Channel indices 1..K as floats."""
        return np.arange(1, self.k_channels + 1, dtype=float)

    def with_budgets(self, p_max_b: float, p_max_m: float) -> "LinkInstance":
        from dataclasses import replace

        return replace(
            self,
            bs=replace(self.bs, p_max=p_max_b),
            ms=replace(self.ms, p_max=p_max_m),
        )


@dataclass(frozen=True)
class Allocation:
    p_b: np.ndarray
    p_m: np.ndarray
    c: float

    def __post_init__(self):
        p_b = np.atleast_1d(np.asarray(self.p_b, dtype=float))
        p_m = np.atleast_1d(np.asarray(self.p_m, dtype=float))
        if p_b.shape != p_m.shape:
            raise ValueError("power vectors must have equal length")
        if not (np.all(p_b >= 0) and np.all(p_m >= 0)):
            raise ValueError("powers must be nonnegative")
        if not (np.all(np.isfinite(p_b)) and np.all(np.isfinite(p_m)) and math.isfinite(self.c)):
            raise ValueError("powers and canceller position must be finite")
        object.__setattr__(self, "p_b", p_b)
        object.__setattr__(self, "p_m", p_m)
        object.__setattr__(self, "c", float(self.c))

    def check(self, link: LinkInstance, rtol: float = 1e-9) -> None:
        """Raise ``ValueError`` unless the allocation is feasible for ``link``."""
        if self.p_b.size != link.k_channels:
            raise ValueError("allocation length does not match the channel count")
        if np.any(self.p_b < 0) or np.any(self.p_m < 0):
            raise ValueError("powers must be nonnegative")
        if self.p_b.sum() > link.bs.p_max * (1 + rtol):
            raise ValueError("BS power budget exceeded")
        if self.p_m.sum() > link.ms.p_max * (1 + rtol):
            raise ValueError("MS power budget exceeded")


@dataclass(frozen=True)
class RateReport:
    per_channel: Tuple[Tuple[float, float], ...]
    sum_rate: float
    tdd_ul_max: float
    tdd_dl_max: float
    extension_p: float

    @property
    def tdd_max(self) -> float:
        return max(self.tdd_ul_max, self.tdd_dl_max)

    @property
    def ul_rate(self) -> float:
        return float(sum(ul for ul, _ in self.per_channel))

    @property
    def dl_rate(self) -> float:
        return float(sum(dl for _, dl in self.per_channel))


def unit_rsi(sic: SicProfile, k, c):
    """Residual SI per unit transmitted power on channel ``k`` for canceller ``c``.

    Broadcasts over array-valued ``k`` and ``c``.
    """
    offset = np.asarray(k, dtype=float) - np.asarray(c, dtype=float)
    if isinstance(sic, FlatSic):
        return np.full(offset.shape, sic.g) if offset.ndim else sic.g
    if isinstance(sic, QuadraticSic):
        return sic.g_m * offset**2
    if isinstance(sic, TabulatedSic):
        return sic.fraction(offset * sic.channel_width_hz)
    raise TypeError(f"unknown SIC profile {sic!r}")


def xinr_ms(ms: StationParams, p, k, c):
    """Residual self-interference to noise ratio at the MS on channel ``k``."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("power must be nonnegative")
    return unit_rsi(ms.sic, k, c) * p / ms.noise


def _single_rates(bs, ms, h_mb, h_bm, p_b, p_m):
    g_b, g_m = bs.g, ms.g
    snr_ul = h_mb * p_m / bs.noise
    snr_dl = h_bm * p_b / ms.noise
    xinr_b = g_b * p_b / bs.noise
    xinr_m = g_m * p_m / ms.noise
    r_ul = log2(1.0 + snr_ul / (1.0 + xinr_b))
    r_dl = log2(1.0 + snr_dl / (1.0 + xinr_m))
    return r_ul, r_dl


def sum_rate_single(bs: StationParams, ms: StationParams, h_mb, h_bm, p_b, p_m):
    """Sum of UL and DL rates on one bidirectional FD channel, in b/s/Hz.

    Both stations use flat residual SI. Array-valued powers broadcast, which
    the grid oracles in the test-suite rely on.
    """
    r_ul, r_dl = _single_rates(bs, ms, h_mb, h_bm, np.asarray(p_b, float), np.asarray(p_m, float))
    return r_ul + r_dl


def sum_rate_two_uni(
    bs: StationParams,
    ms1: StationParams,
    ms2: StationParams,
    h_m1b,
    h_bm2,
    h_m1m2,
    p_m1,
    p_b,
):
    """Sum rate of an UL from MS 1 and a DL to MS 2 sharing one channel.

    Interference from MS 1 at MS 2 is not known at MS 2 and is never
    cancelled; only the BS applies SIC. ``ms1`` is accepted for symmetry of
    the call signature, its noise level does not enter the rate.
    """
    p_m1 = np.asarray(p_m1, dtype=float)
    p_b = np.asarray(p_b, dtype=float)
    snr_ul = h_m1b * p_m1 / bs.noise
    xinr_b = bs.g * p_b / bs.noise
    snr_dl = h_bm2 * p_b / ms2.noise
    inr = h_m1m2 * p_m1 / ms2.noise
    return log2(1.0 + snr_ul / (1.0 + xinr_b)) + log2(1.0 + snr_dl / (1.0 + inr))


def water_fill(gains: np.ndarray, budget: float, noise: float) -> np.ndarray:
    """Capacity-achieving split of ``budget`` over parallel channels."""
    inv = noise / np.asarray(gains, dtype=float)
    order = np.sort(inv)
    # Largest n such that the water level over the n best channels stays
    # above the n-th noise-to-gain ratio.
    csum = np.cumsum(order)
    n = np.arange(1, order.size + 1)
    level = (budget + csum) / n
    active = np.nonzero(level > order)[0][-1] + 1
    mu = level[active - 1]
    return np.maximum(mu - inv, 0.0)


def tdd_maxima(link: LinkInstance) -> Tuple[float, float]:
    """Best UL-only and DL-only rates over all power splits."""
    p_ul = water_fill(link.h_mb, link.ms.p_max, link.bs.noise)
    p_dl = water_fill(link.h_bm, link.bs.p_max, link.ms.noise)
    ul = float(np.sum(log2(1.0 + link.h_mb * p_ul / link.bs.noise)))
    dl = float(np.sum(log2(1.0 + link.h_bm * p_dl / link.ms.noise)))
    return ul, dl


def channel_rates(link: LinkInstance, p_b, p_m, c):
    """Per-channel (UL, DL) rates; broadcasts over leading batch axes."""
    k = link.channels
    q = unit_rsi(link.ms.sic, k, np.asarray(c, dtype=float)[..., None])
    g_b = link.bs.g
    sinr_ul = link.h_mb * p_m / (link.bs.noise + g_b * p_b)
    sinr_dl = link.h_bm * p_b / (link.ms.noise + q * p_m)
    return log2(1.0 + sinr_ul), log2(1.0 + sinr_dl)


def sum_rate_multi(link: LinkInstance, a: Allocation, tdd: Tuple[float, float] = None) -> RateReport:
    """Per-channel and total FD rates for an OFDM allocation.

    The report also carries the best TDD rates (water-filling in each
    direction at full budget) and the capacity-region extension of the FD
    operating point relative to the TDD triangle.
    """
    a.check(link)
    r_ul, r_dl = channel_rates(link, a.p_b, a.p_m, a.c)
    r_ul = np.asarray(r_ul).reshape(-1)
    r_dl = np.asarray(r_dl).reshape(-1)
    tdd_ul, tdd_dl = tdd if tdd is not None else tdd_maxima(link)
    ext = max(float(r_dl.sum()) / tdd_dl + float(r_ul.sum()) / tdd_ul - 1.0, 0.0)
    per_channel = tuple((float(u), float(d)) for u, d in zip(r_ul, r_dl))
    return RateReport(
        per_channel=per_channel,
        sum_rate=float(math.fsum(u + d for u, d in per_channel)),
        tdd_ul_max=tdd_ul,
        tdd_dl_max=tdd_dl,
        extension_p=ext,
    )


def equal_allocation(link: LinkInstance, c: float = None) -> Allocation:
    """Both budgets split evenly, canceller at the band center by default."""
    k = link.k_channels
    if c is None:
        c = (k + 1) / 2.0
    return Allocation(
        np.full(k, link.bs.p_max / k), np.full(k, link.ms.p_max / k), c
    )


def as_gain_array(values: Union[float, Sequence[float]], k: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        return np.full(k, float(arr))
    return arr
