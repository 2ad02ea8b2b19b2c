"""Single-channel analyses: FD versus TDD, capacity-region extension,
biconcavity checks and the two-unidirectional path-loss geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Tuple

import numpy as np

from .model import StationParams, log2, sum_rate_single

__all__ = [
    "FD",
    "TDD_UL",
    "TDD_DL",
    "SingleOptimum",
    "CapRegionPoint",
    "TwoUniGeometry",
    "single_channel_optimum",
    "capacity_extension_p",
    "extension_p_for",
    "trace_capacity_boundary",
    "check_condition1",
    "tdd_gap_check",
    "two_uni_extension_p",
    "two_uni_extension_map",
]

FD = "FD"
TDD_UL = "TDD_UL"
TDD_DL = "TDD_DL"


class SingleOptimum(NamedTuple):
    p_b: float
    p_m: float
    rate: float
    winner: str


class CapRegionPoint(NamedTuple):
    r_dl: float
    r_ul: float


def _snrs(bs: StationParams, ms: StationParams, h_mb, h_bm, p_b, p_m):
    """(gamma_mb, gamma_bm, gamma_bb, gamma_mm) at the given powers."""
    return (
        h_mb * p_m / bs.noise,
        h_bm * p_b / ms.noise,
        bs.g * p_b / bs.noise,
        ms.g * p_m / ms.noise,
    )


def _ul_dl(bs, ms, h_mb, h_bm, p_b, p_m):
    g_mb, g_bm, g_bb, g_mm = _snrs(bs, ms, h_mb, h_bm, p_b, p_m)
    return log2(1 + g_mb / (1 + g_bb)), log2(1 + g_bm / (1 + g_mm))


def single_channel_optimum(bs, ms, h_mb, h_bm) -> SingleOptimum:
    """Best of full power in both directions and the two TDD corners.

    FD is reported only if it strictly beats both corners.
    """
    fd = float(sum_rate_single(bs, ms, h_mb, h_bm, bs.p_max, ms.p_max))
    ul = float(log2(1 + h_mb * ms.p_max / bs.noise))
    dl = float(log2(1 + h_bm * bs.p_max / ms.noise))
    if fd > max(ul, dl):
        return SingleOptimum(bs.p_max, ms.p_max, fd, FD)
    if ul >= dl:
        return SingleOptimum(0.0, ms.p_max, ul, TDD_UL)
    return SingleOptimum(bs.p_max, 0.0, dl, TDD_DL)


def capacity_extension_p(gamma_bm_max, gamma_mb_max, gamma_mm_max, gamma_bb_max) -> float:
    """Capacity-region extension of FD over TDD, clamped at zero.

    Raises
    ------
    ValueError
        If either maximum SNR is zero, since the ratios are then undefined.
    """
    if gamma_bm_max <= 0 or gamma_mb_max <= 0:
        raise ValueError("maximum SNRs must be positive")
    if min(gamma_mm_max, gamma_bb_max) < 0:
        raise ValueError("XINRs must be nonnegative")
    lhs = (
        math.log1p(gamma_bm_max / (1 + gamma_mm_max)) / math.log1p(gamma_bm_max)
        + math.log1p(gamma_mb_max / (1 + gamma_bb_max)) / math.log1p(gamma_mb_max)
    )
    return max(lhs - 1.0, 0.0)


def extension_p_for(bs, ms, h_mb, h_bm) -> float:
    """`capacity_extension_p` evaluated at full power for a station pair."""
    g_mb, g_bm, g_bb, g_mm = _snrs(bs, ms, h_mb, h_bm, bs.p_max, ms.p_max)
    return capacity_extension_p(g_bm, g_mb, g_mm, g_bb)


def _bisect_increasing(f, target, lo, hi, tol):
    f_lo, f_hi = f(lo), f(hi)
    if not f_lo <= target <= f_hi:
        raise RuntimeError("bisection target is not bracketed")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def trace_capacity_boundary(bs, ms, h_mb, h_bm, n_points: int, tol: float = 1e-10) -> List[CapRegionPoint]:
    """Boundary of the FD rate region.

    Each boundary point has at least one station at full power. The DL pass
    keeps the MS at full power and lowers the BS power until the DL rate is
    ``alpha`` times its full-power value, for ``alpha = i / n_points``; the
    UL pass is symmetric. Points are returned sorted by DL rate.
    """
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    s_ul, s_dl = _ul_dl(bs, ms, h_mb, h_bm, bs.p_max, ms.p_max)
    points = set()
    for i in range(1, n_points + 1):
        alpha = i / n_points
        if i == n_points:
            p_b = bs.p_max
        else:
            p_b = _bisect_increasing(
                lambda p: _ul_dl(bs, ms, h_mb, h_bm, p, ms.p_max)[1],
                alpha * s_dl, 0.0, bs.p_max, tol * bs.p_max,
            )
        ul, dl = _ul_dl(bs, ms, h_mb, h_bm, p_b, ms.p_max)
        points.add(CapRegionPoint(float(dl), float(ul)))
        if i == n_points:
            p_m = ms.p_max
        else:
            p_m = _bisect_increasing(
                lambda p: _ul_dl(bs, ms, h_mb, h_bm, bs.p_max, p)[0],
                alpha * s_ul, 0.0, ms.p_max, tol * ms.p_max,
            )
        ul, dl = _ul_dl(bs, ms, h_mb, h_bm, bs.p_max, p_m)
        points.add(CapRegionPoint(float(dl), float(ul)))
    return sorted(points)


def check_condition1(bs, ms, h_mb, h_bm, p_b, p_m) -> Tuple[bool, bool]:
    """Biconcavity condition at the given powers.

    Returns ``(gamma_mm <= gamma_mb / (1 + gamma_bb),
    gamma_bb <= gamma_bm / (1 + gamma_mm))``.
    """
    g_mb, g_bm, g_bb, g_mm = _snrs(bs, ms, h_mb, h_bm, p_b, p_m)
    return bool(g_mm <= g_mb / (1 + g_bb)), bool(g_bb <= g_bm / (1 + g_mm))


def tdd_gap_check(bs, ms, h_mb, h_bm, n_grid: int = 101) -> float:
    """Largest FD gain over the best TDD rate among grid points violating
    the biconcavity condition."""
    pb = np.linspace(0.0, bs.p_max, n_grid)[:, None]
    pm = np.linspace(0.0, ms.p_max, n_grid)[None, :]
    g_mb, g_bm, g_bb, g_mm = _snrs(bs, ms, h_mb, h_bm, pb, pm)
    bad = (g_mm > g_mb / (1 + g_bb)) | (g_bb > g_bm / (1 + g_mm))
    if not bad.any():
        raise ValueError("the biconcavity condition holds on every sampled point")
    rate = log2(1 + g_mb / (1 + g_bb)) + log2(1 + g_bm / (1 + g_mm))
    tdd = max(
        float(log2(1 + h_mb * ms.p_max / bs.noise)),
        float(log2(1 + h_bm * bs.p_max / ms.noise)),
    )
    return float(rate[bad].max() - tdd)


@dataclass(frozen=True)
class TwoUniGeometry:
    """Path-loss geometry of one uplink and one downlink user.

    SNRs and the inter-user INR equal their ``gamma_max_*`` values at the
    common reference distance ``d_min`` and decay as ``d**-eta``. The
    distance between the two users is ``rho`` times the sum of their
    distances to the BS.
    """

    eta: float = 4.0
    rho: float = 1.0
    gamma_max_m1b: float = 100.0
    gamma_max_bm2: float = 100.0
    gamma_max_m1m2: float = 100.0
    gamma_bb: float = 1.0
    d_min: float = 1.0

    def __post_init__(self):
        if self.eta <= 0 or self.rho <= 0 or self.d_min <= 0:
            raise ValueError("eta, rho and d_min must be positive")
        if min(self.gamma_max_m1b, self.gamma_max_bm2, self.gamma_max_m1m2) <= 0:
            raise ValueError("maximum SNRs must be positive")
        if self.gamma_bb < 0:
            raise ValueError("gamma_bb must be nonnegative")

    def distance(self, gamma, gamma_max):
        return self.d_min * (gamma_max / gamma) ** (1.0 / self.eta)

    def inr(self, d_m1m2):
        return self.gamma_max_m1m2 * (self.d_min / d_m1m2) ** self.eta


def two_uni_extension_p(gamma_m1b, gamma_bm2, gamma_m1m2, gamma_bb) -> float:
    """Extension for two unidirectional links; the inter-user INR is never
    cancelled."""
    return capacity_extension_p(gamma_bm2, gamma_m1b, gamma_m1m2, gamma_bb)


def two_uni_extension_map(geom: TwoUniGeometry, gamma_m1b_values, gamma_bm2_values) -> np.ndarray:
    """Extension ``p`` over a grid of uplink and downlink SNRs.

    Entry ``[i, j]`` belongs to ``gamma_m1b_values[i]`` and
    ``gamma_bm2_values[j]``. Cells whose distances violate the triangle
    inequality get ``p = 0``.
    """
    g1 = np.asarray(gamma_m1b_values, dtype=float)
    g2 = np.asarray(gamma_bm2_values, dtype=float)
    if np.any(g1 <= 0) or np.any(g2 <= 0):
        raise ValueError("SNR values must be positive")
    if np.any(g1 > geom.gamma_max_m1b * (1 + 1e-12)) or np.any(g2 > geom.gamma_max_bm2 * (1 + 1e-12)):
        raise ValueError("SNR values must not exceed their maxima")
    out = np.zeros((g1.size, g2.size))
    for i, a in enumerate(g1):
        d1 = geom.distance(a, geom.gamma_max_m1b)
        for j, b in enumerate(g2):
            d2 = geom.distance(b, geom.gamma_max_bm2)
            d12 = geom.rho * (d1 + d2)
            if d1 > d2 + d12 or d2 > d1 + d12 or d12 > d1 + d2:
                continue
            out[i, j] = two_uni_extension_p(a, b, geom.inr(d12), geom.gamma_bb)
    return out
