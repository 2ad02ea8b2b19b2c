"""High-SINR closed-form optimizer.

In the high-SINR regime the sum rate is approximated by dropping the ``1 +``
inside each logarithm. The BS then splits its budget evenly, the canceller
sits at the band center, and the MS powers follow from one scalar found by
binary search.

The per-channel gains only add constants to the approximate rate, so the
optimal allocation depends on them only through the MS residual-SI profile.
"""

from __future__ import annotations

import math
from typing import List, NamedTuple, Optional

import numpy as np

from .model import Allocation, LinkInstance, QuadraticSic, log2, unit_rsi

__all__ = ["hsinr_rate", "hsinr_maximum_rate", "ms_fractions", "HsinrResult"]


def hsinr_rate(link: LinkInstance, a: Allocation) -> float:
    """Approximate sum rate with the ``1 +`` dropped from each SINR term.

    Returns ``-inf`` when any channel carries zero power at either station;
    the approximation is only meaningful with every channel active.
    """
    p_b = np.asarray(a.p_b, dtype=float)
    p_m = np.asarray(a.p_m, dtype=float)
    if np.any(p_b <= 0) or np.any(p_m <= 0):
        return -math.inf
    bs, ms = link.bs, link.ms
    k = link.channels
    g_mb = link.h_mb * p_m / bs.noise
    g_bm = link.h_bm * p_b / ms.noise
    g_bb = bs.g * p_b / bs.noise
    g_mm = unit_rsi(ms.sic, k, a.c) * p_m / ms.noise
    return math.fsum(log2(g_mb / (1 + g_bb)) + log2(g_bm / (1 + g_mm)))


class HsinrResult(NamedTuple):
    alpha: np.ndarray
    iterations: int


def _alphas(alpha_ref: float, noise: float, rsi: List[float], ref: int) -> List[float]:
    # alpha_k (N + R_k alpha_k) = C, solved in the form that stays finite at R_k = 0
    big_c = alpha_ref * (noise + rsi[ref] * alpha_ref)
    out = []
    for r in rsi:
        out.append(2.0 * big_c / (noise + math.sqrt(noise * noise + 4.0 * big_c * r)))
    return out


def ms_fractions(
    link: LinkInstance, epsilon: float = 1e-6, c: Optional[float] = None
) -> HsinrResult:
    """Fractions of the MS budget per channel at canceller position ``c``.

    The channel farthest from ``c`` serves as the reference; its fraction is
    bisected on ``[0, 1/K]`` until the fractions sum to within
    ``epsilon / (K + epsilon)`` below one.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    n_ch = link.k_channels
    if c is None:
        c = (n_ch + 1) / 2.0
    ms = link.ms
    rsi = [float(r) * ms.p_max for r in unit_rsi(ms.sic, link.channels, c)]
    if max(rsi) == 0.0:
        return HsinrResult(np.full(n_ch, 1.0 / n_ch), 0)
    ref = max(range(n_ch), key=lambda i: (rsi[i], i))
    noise = ms.noise
    tol = epsilon / (n_ch + epsilon)
    lo, hi = 0.0, 1.0 / n_ch
    # alpha_ref = 1/K already gives the largest feasible fractions
    alpha = _alphas(hi, noise, rsi, ref)
    total = math.fsum(alpha)
    it = 0
    if total > 1.0:
        prev_total = 0.0
        while True:
            it += 1
            mid = 0.5 * (lo + hi)
            alpha = _alphas(mid, noise, rsi, ref)
            total = math.fsum(alpha)
            if total > 1.0:
                hi = mid
            elif total >= 1.0 - tol:
                break
            else:
                lo = mid
            if it > 4 and total == prev_total:
                break
            prev_total = total
    return HsinrResult(np.array(alpha), it)


def hsinr_maximum_rate(link: LinkInstance, epsilon: float = 1e-6) -> Allocation:
    """Allocation maximizing the high-SINR sum rate.

    Parameters
    ----------
    link : LinkInstance
        Any gains; only the MS residual-SI profile shapes the result.
    epsilon : float
        Target accuracy; the MS fractions sum to at least
        ``1 - epsilon / (K + epsilon)``.
    """
    n_ch = link.k_channels
    c = (n_ch + 1) / 2.0
    res = ms_fractions(link, epsilon, c)
    p_b = np.full(n_ch, link.bs.p_max / n_ch)
    return Allocation(p_b=p_b, p_m=res.alpha * link.ms.p_max, c=c)
