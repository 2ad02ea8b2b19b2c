"""Joint power allocation and canceller placement for OFDM FD links.

The fixed-canceller problem is solved by block-coordinate ascent: with the
BS powers held fixed the sum rate is concave and separable in the MS powers
(and vice versa), so each half-step is a budget-constrained concave program
solved exactly through its Lagrange multiplier. The canceller position is
then scanned over a uniform grid whose step is set by the bound on
``|dr/dc|`` so that the grid search loses at most ``epsilon`` b/s/Hz.

All heavy routines are vectorized over a leading batch axis of canceller
positions; `maximum_rate` evaluates the whole grid a chunk at a time.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .model import (
    LN2,
    Allocation,
    FlatSic,
    LinkInstance,
    QuadraticSic,
    TabulatedSic,
    channel_rates,
    unit_rsi,
)

__all__ = [
    "ChannelConstraint",
    "SolveOptions",
    "Solution",
    "NumericError",
    "build_constraints",
    "solve_fixed_c",
    "maximum_rate",
    "canceller_grid",
    "derivative_bound",
    "delta_c_for",
    "epsilon_for",
    "dr_dc",
]


class NumericError(ArithmeticError):
    """Non-finite values encountered inside the optimizer."""


@dataclass(frozen=True)
class ChannelConstraint:
    ms_forced_zero: bool
    bs_forced_zero: bool
    p_b_upper: float
    p_m_upper: float


@dataclass(frozen=True)
class SolveOptions:
    epsilon: float = 0.1
    inner_tol: float = 1e-9
    max_outer_iters: int = 200
    bisection_tol: float = 1e-10
    # Overrides the epsilon-derived canceller step when set.
    delta_c: Optional[float] = None
    multistart: int = 1
    seed: int = 0
    chunk_size: int = 512

    def __post_init__(self):
        for name in ("epsilon", "inner_tol", "bisection_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer_iters < 1 or self.multistart < 1 or self.chunk_size < 1:
            raise ValueError("iteration, start and chunk counts must be >= 1")
        if self.delta_c is not None and not self.delta_c > 0:
            raise ValueError("delta_c must be positive")


class Solution(NamedTuple):
    allocation: Allocation
    rate: float
    history: tuple = ()


def derivative_bound(k: int) -> float:
    """Upper bound on ``|dr/dc|`` over ``c`` in ``(1, K)``."""
    if k < 2:
        raise ValueError("the derivative bound needs K >= 2")
    return (2.0 / LN2) * (math.log(k) + 1.0 + 2.0 * math.sqrt(3.0))


def delta_c_for(k: int, epsilon: float) -> float:
    return epsilon / derivative_bound(k)


def epsilon_for(k: int, delta_c: float) -> float:
    """Absolute rate error guaranteed by a canceller step of ``delta_c``."""
    return delta_c * derivative_bound(k)


def canceller_grid(k: int, opts: SolveOptions) -> np.ndarray:
    """Positions ``1, 1 + dc, ...`` strictly below ``K``."""
    dc = opts.delta_c if opts.delta_c is not None else delta_c_for(k, opts.epsilon)
    n = int(math.ceil((k - 1) / dc - 1e-9))
    return 1.0 + dc * np.arange(max(n, 1))


# --------------------------------------------------------------------------
# constraints


def _reference_rsi(sic) -> float:
    """Residual fraction at one channel of distance from the canceller."""
    if isinstance(sic, QuadraticSic):
        return sic.g_m
    if isinstance(sic, FlatSic):
        return sic.g
    if isinstance(sic, TabulatedSic):
        w = sic.channel_width_hz
        return float(np.max(sic.fraction(np.array([-w, w]))))
    raise TypeError(f"unknown SIC profile {sic!r}")


def _constraint_arrays(link: LinkInstance, c: np.ndarray):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    k = link.channels
    q = np.asarray(unit_rsi(link.ms.sic, k, c[:, None]), dtype=float)
    q = np.broadcast_to(q, (c.size, k.size))
    n_b, n_m = link.bs.noise, link.ms.noise
    g_b = link.bs.g
    h_mb, h_bm = link.h_mb, link.h_bm
    shape = q.shape

    ms_zero = np.zeros(shape, dtype=bool)
    pb_up = np.full(shape, np.inf)
    pm_up = np.full(shape, np.inf)

    with np.errstate(divide="ignore", invalid="ignore"):
        # bound on the BS power so the MS side stays concave
        guard_a = q / n_m < h_mb / n_b
        bound_a = (h_mb * n_m / q - n_b) / g_b
        use = guard_a & (q > 0) & (g_b > 0)
        pb_up = np.where(use, np.minimum(pb_up, bound_a), pb_up)
        ms_zero_a = ~guard_a
        ms_zero |= ms_zero_a

        # bound on the MS power so the BS side stays concave
        guard_b = np.broadcast_to(g_b / n_b < h_bm / n_m, shape)
        bound_b = (h_bm * n_b / g_b - n_m) / q
        use = guard_b & (q > 0) & (g_b > 0)
        pm_up = np.where(use, bound_b, pm_up)
        bs_zero = ~guard_b & ~ms_zero_a

        # unit-distance residual, bounds |dr/dc|
        q_ref = _reference_rsi(link.ms.sic)
        guard_3 = np.broadcast_to(q_ref / n_m < h_mb / n_b, shape)
        if q_ref > 0 and g_b > 0:
            bound_3 = (h_mb * n_m / q_ref - n_b) / g_b
            pb_up = np.where(guard_3, np.minimum(pb_up, bound_3), pb_up)
        ms_zero |= ~guard_3

    # A negative bound leaves no room for the station on that channel.
    ms_zero = ms_zero | (pm_up < 0)
    bs_zero = bs_zero | (pb_up < 0)
    pb_up = np.maximum(pb_up, 0.0)
    pm_up = np.maximum(pm_up, 0.0)
    return q, ms_zero, bs_zero, pb_up, pm_up


def build_constraints(link: LinkInstance, c: float) -> List[ChannelConstraint]:
    """Per-channel forcing and power caps that keep the sum rate biconcave."""
    _, ms_zero, bs_zero, pb_up, pm_up = _constraint_arrays(link, np.array([c]))
    return [
        ChannelConstraint(bool(mz), bool(bz), float(pb), float(pm))
        for mz, bz, pb, pm in zip(ms_zero[0], bs_zero[0], pb_up[0], pm_up[0])
    ]


def _arrays_from_constraints(cons: Sequence[ChannelConstraint]):
    ms_zero = np.array([[x.ms_forced_zero for x in cons]])
    bs_zero = np.array([[x.bs_forced_zero for x in cons]])
    pb_up = np.array([[x.p_b_upper for x in cons]], dtype=float)
    pm_up = np.array([[x.p_m_upper for x in cons]], dtype=float)
    return ms_zero, bs_zero, pb_up, pm_up


# --------------------------------------------------------------------------
# concave block solver
#
# One block is   max sum_k  ln(1 + a_k x_k) + ln(1 + s_k / (n + q_k x_k))
#                s.t. sum_k x_k <= budget, 0 <= x_k <= u_k
# (the other station's powers enter through a, s, q). Everything is scaled
# by the noise ``n`` so the arithmetic stays O(1).


def _deriv(x, a, q, s):
    u = 1.0 + q * x
    return a / (1.0 + a * x) - q * s / ((u + s) * u)


def _deriv2(x, a, q, s):
    u = 1.0 + q * x
    return -(a * a) / (1.0 + a * x) ** 2 + q * q * s * (2.0 * u + s) / (u * u * (u + s) ** 2)


def _x_of_lambda(lam, a, q, s, up, x0, xtol):
    """Per-channel power where the marginal rate equals ``lam``."""
    lam = lam[..., None]
    f0 = _deriv(0.0, a, q, s)
    fu = _deriv(up, a, q, s)
    at_zero = f0 <= lam
    at_top = ~at_zero & (fu >= lam)
    inner = ~at_zero & ~at_top
    lo = np.zeros_like(up)
    hi = up.copy()
    x = np.where(inner, np.clip(x0, 0.0, up), 0.0)
    bad = inner & ((x <= lo) | (x >= hi))
    x = np.where(bad, 0.5 * (lo + hi), x)
    for _ in range(100):
        if not inner.any():
            break
        fx = _deriv(x, a, q, s) - lam
        lo = np.where(inner & (fx > 0), x, lo)
        hi = np.where(inner & (fx <= 0), x, hi)
        d2 = _deriv2(x, a, q, s)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x - fx / d2
        ok = np.isfinite(step) & (step > lo) & (step < hi) & (d2 < 0)
        x_new = np.where(ok, step, 0.5 * (lo + hi))
        done = np.abs(x_new - x) <= xtol
        x = np.where(inner, x_new, x)
        inner = inner & ~done & (hi - lo > xtol)
    x = np.where(at_top, up, x)
    x = np.where(at_zero, 0.0, x)
    return x


def _solve_block(a, q, s, up, budget, x_prev, lam_tol, xtol):
    """Exact maximizer of one separable concave block (batched over rows)."""
    up = np.minimum(up, budget[:, None])
    # Budget-free maximizer; it is the answer whenever it fits the budget.
    x = _x_of_lambda(np.zeros(up.shape[0]), a, q, s, up, x_prev, xtol)
    rows = np.nonzero(x.sum(axis=1) > budget)[0]
    if rows.size == 0:
        return x
    x_free = x[rows]
    a, q, s, up, b = a[rows], q[rows], s[rows], up[rows], budget[rows]
    x0 = x_prev[rows]
    f0 = np.where(up > 0, _deriv(0.0, a, q, s), 0.0)
    lam_lo = np.zeros(rows.size)
    lam_hi = f0.max(axis=1)
    x_lo = x_free  # sum exceeds the budget at lam_lo
    x_hi = np.zeros_like(up)  # sum is below the budget at lam_hi
    lam = 0.5 * (lam_lo + lam_hi)
    active = np.ones(rows.size, dtype=bool)
    for _ in range(200):
        xs = _x_of_lambda(lam, a, q, s, up, x0, xtol)
        total = xs.sum(axis=1)
        over = total > b
        lam_lo = np.where(active & over, lam, lam_lo)
        x_lo = np.where((active & over)[:, None], xs, x_lo)
        lam_hi = np.where(active & ~over, lam, lam_hi)
        x_hi = np.where((active & ~over)[:, None], xs, x_hi)
        x0 = xs
        gap = total - b
        # Newton step on the dual through dx/dlam = 1 / f'(x) on interior channels
        interior = (xs > 0) & (xs < up)
        d2 = _deriv2(xs, a, q, s)
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(interior, 1.0 / d2, 0.0).sum(axis=1)
            nlam = lam - gap / slope
        mid = 0.5 * (lam_lo + lam_hi)
        ok = np.isfinite(nlam) & (nlam > lam_lo) & (nlam < lam_hi)
        width = lam_hi - lam_lo
        converged = (np.abs(gap) <= 1e-13 * b) | (width <= lam_tol * np.maximum(lam_hi, 1e-300))
        active = active & ~converged
        if not active.any():
            break
        lam = np.where(active, np.where(ok, nlam, mid), lam)
    # Blend the two bracketing solutions to spend the budget exactly; both are
    # inside the box so the blend is feasible.
    s_lo, s_hi = x_lo.sum(axis=1), x_hi.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.where(s_lo > s_hi, (b - s_hi) / (s_lo - s_hi), 0.0)
    theta = np.clip(theta, 0.0, 1.0)[:, None]
    x[rows] = x_hi + theta * (x_lo - x_hi)
    return x


# --------------------------------------------------------------------------
# block-coordinate ascent


def _rates(link, p_b, p_m, q):
    n_b, n_m = link.bs.noise, link.ms.noise
    sinr_ul = link.h_mb * p_m / (n_b + link.bs.g * p_b)
    sinr_dl = link.h_bm * p_b / (n_m + q * p_m)
    return (np.log1p(sinr_ul) + np.log1p(sinr_dl)).sum(axis=1) / LN2


def _equal_start(up, zero, budget):
    free = ~zero
    n_free = free.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        share = np.where(n_free > 0, budget / np.maximum(n_free, 1), 0.0)
    return np.where(free, np.minimum(share, up), 0.0)


def _solve_batch(link, q, pb_up, pm_up, opts, p_b0, p_m0, record=False):
    """Alternate MS and BS block maximizations for a batch of canceller positions."""
    n_b, n_m = link.bs.noise, link.ms.noise
    g_b = link.bs.g
    h_mb, h_bm = link.h_mb, link.h_bm
    rows = q.shape[0]
    bud_b = np.full(rows, link.bs.p_max)
    bud_m = np.full(rows, link.ms.p_max)
    xtol_b = 1e-12 * link.bs.p_max
    xtol_m = 1e-12 * link.ms.p_max

    p_b, p_m = p_b0.copy(), p_m0.copy()
    rate = _rates(link, p_b, p_m, q)
    history = [rate.copy()] if record else None
    active = np.arange(rows)
    for _ in range(opts.max_outer_iters):
        if active.size == 0:
            break
        qa, pba, pma = q[active], p_b[active], p_m[active]
        start = rate[active]

        # MS block, BS powers fixed
        a = h_mb / (n_b + g_b * pba)
        s = h_bm * pba / n_m
        qq = qa / n_m * np.ones_like(pba)
        new_m = _solve_block(a, qq, s, pm_up[active], bud_m[active], pma, opts.bisection_tol, xtol_m)
        r1 = _rates(link, pba, new_m, qa)
        keep = r1 < start
        new_m = np.where(keep[:, None], pma, new_m)
        r1 = np.where(keep, start, r1)

        # BS block, MS powers fixed
        a = h_bm / (n_m + qa * new_m)
        s = h_mb * new_m / n_b
        qq = np.full_like(pba, g_b / n_b)
        new_b = _solve_block(a, qq, s, pb_up[active], bud_b[active], pba, opts.bisection_tol, xtol_b)
        r2 = _rates(link, new_b, new_m, qa)
        keep = r2 < r1
        new_b = np.where(keep[:, None], pba, new_b)
        r2 = np.where(keep, r1, r2)

        if not (np.all(np.isfinite(new_b)) and np.all(np.isfinite(new_m))):
            raise NumericError("non-finite power iterate")
        p_b[active], p_m[active] = new_b, new_m
        if record:
            half = rate.copy()
            half[active] = r1
            history.append(half)
            full = rate.copy()
            full[active] = r2
            history.append(full)
        rate[active] = r2
        active = active[(r2 - start) >= opts.inner_tol]
    return p_b, p_m, rate, history


def _starts(zero_b, zero_m, pb_up, pm_up, link, opts):
    rows = pb_up.shape[0]
    bud_b = np.full((rows, 1), link.bs.p_max)
    bud_m = np.full((rows, 1), link.ms.p_max)
    yield _equal_start(pb_up, zero_b, bud_b), _equal_start(pm_up, zero_m, bud_m)
    rng = np.random.default_rng(opts.seed)
    for _ in range(opts.multistart - 1):
        w_b = rng.dirichlet(np.ones(pb_up.shape[1]), size=rows) * ~zero_b
        w_m = rng.dirichlet(np.ones(pm_up.shape[1]), size=rows) * ~zero_m
        yield np.minimum(w_b * bud_b, pb_up), np.minimum(w_m * bud_m, pm_up)


def _solve_grid(link, cs, opts, constraints=None, record=False):
    if constraints is None:
        q, ms_zero, bs_zero, pb_up, pm_up = _constraint_arrays(link, cs)
    else:
        q = np.asarray(unit_rsi(link.ms.sic, link.channels, cs[:, None]), dtype=float)
        q = np.broadcast_to(q, (cs.size, link.k_channels))
        ms_zero, bs_zero, pb_up, pm_up = constraints
    pb_up = np.where(bs_zero, 0.0, pb_up)
    pm_up = np.where(ms_zero, 0.0, pm_up)
    for arr in (q, pb_up, pm_up):
        if np.any(np.isnan(arr)):
            raise NumericError("NaN in channel parameters")
    best = None
    for p_b0, p_m0 in _starts(bs_zero, ms_zero, pb_up, pm_up, link, opts):
        p_b, p_m, rate, hist = _solve_batch(link, q, pb_up, pm_up, opts, p_b0, p_m0, record)
        if best is None:
            best = (p_b, p_m, rate, hist)
        else:
            better = rate > best[2]
            best = (
                np.where(better[:, None], p_b, best[0]),
                np.where(better[:, None], p_m, best[1]),
                np.where(better, rate, best[2]),
                best[3],
            )
    return best


def solve_fixed_c(
    link: LinkInstance,
    c: float,
    cons: Optional[Sequence[ChannelConstraint]] = None,
    opts: SolveOptions = SolveOptions(),
    record: bool = False,
) -> Solution:
    """Maximize the sum rate over both power vectors for a fixed canceller.

    Parameters
    ----------
    link : LinkInstance
    c : float
        Canceller position in channel-index units.
    cons : list of ChannelConstraint, optional
        Defaults to ``build_constraints(link, c)``.
    opts : SolveOptions
    record : bool
        Keep the sum rate after every half-step in ``Solution.history``.
    """
    cs = np.array([float(c)])
    arrays = None if cons is None else _arrays_from_constraints(cons)
    p_b, p_m, rate, hist = _solve_grid(link, cs, opts, arrays, record)
    history = tuple(float(h[0]) for h in hist) if record else ()
    return Solution(Allocation(p_b[0], p_m[0], c), float(rate[0]), history)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("FD_RATER_THREADS", "1")))
    except ValueError:
        return 1


def maximum_rate(link: LinkInstance, opts: SolveOptions = SolveOptions()) -> Solution:
    """Grid search over the canceller position with an exact inner solver.

    The grid step is ``epsilon / derivative_bound(K)`` unless
    ``opts.delta_c`` is given. Ties keep the first (smallest) position.
    """
    k = link.k_channels
    if k < 2:
        raise ValueError("maximum_rate needs K >= 2; use the single-channel analysis for K = 1")
    cs = canceller_grid(k, opts)
    chunks = [cs[i : i + opts.chunk_size] for i in range(0, cs.size, opts.chunk_size)]

    def run(chunk):
        p_b, p_m, rate, _ = _solve_grid(link, chunk, opts)
        i = int(np.argmax(rate))
        return rate[i], chunk[i], p_b[i], p_m[i]

    workers = min(_threads(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(ch) for ch in chunks]
    best = results[0]
    for res in results[1:]:
        if res[0] > best[0]:
            best = res
    rate, c, p_b, p_m = best
    return Solution(Allocation(p_b, p_m, c), float(rate))


# --------------------------------------------------------------------------
# sensitivity to the canceller position


def dr_dc(link: LinkInstance, a: Allocation) -> float:
    """Closed-form derivative of the sum rate with respect to ``c``.

    Only the DL term depends on ``c``, through the MS residual SI, so the
    SNR that multiplies each term is the DL one at the MS.
    """
    if not isinstance(link.ms.sic, QuadraticSic):
        raise TypeError("closed-form dr/dc needs a quadratic MS profile")
    k = link.channels
    n_m = link.ms.noise
    x = k - a.c
    snr_dl = link.h_bm * a.p_b / n_m
    xinr = link.ms.sic.g_m * x**2 * a.p_m / n_m
    terms = (
        (2.0 / LN2)
        * (link.ms.sic.g_m * a.p_m / n_m)
        * snr_dl
        * x
        / ((1.0 + snr_dl + xinr) * (1.0 + xinr))
    )
    return float(np.sum(terms))
