import math

import numpy as np
import pytest

from fdrater.model import (
    Allocation,
    FlatSic,
    LinkInstance,
    QuadraticSic,
    StationParams,
    sum_rate_multi,
)
from fdrater.multichannel import (
    SolveOptions,
    build_constraints,
    canceller_grid,
    delta_c_for,
    derivative_bound,
    dr_dc,
    epsilon_for,
    maximum_rate,
    solve_fixed_c,
)
from fdrater.sic import calibrate_evaluation


def make_link(h_mb, h_bm, g_b, g_m, noise=1.0):
    return LinkInstance(
        np.asarray(h_mb, dtype=float), np.asarray(h_bm, dtype=float),
        StationParams(noise, FlatSic(g_b)), StationParams(noise, QuadraticSic(g_m)),
    )


def random_link(rng, k, snr=(0, 2), sic=(-1, 1)):
    return make_link(
        10 ** rng.uniform(*snr, k), 10 ** rng.uniform(*snr, k),
        10 ** rng.uniform(*sic), 10 ** rng.uniform(*sic),
    )


def assert_feasible(link, alloc, cons):
    alloc.check(link)
    for pb, pm, x in zip(alloc.p_b, alloc.p_m, cons):
        assert pb <= x.p_b_upper * (1 + 1e-9) + 1e-15
        assert pm <= x.p_m_upper * (1 + 1e-9) + 1e-15
        if x.bs_forced_zero:
            assert pb == 0
        if x.ms_forced_zero:
            assert pm == 0


# build_constraints


def test_constraints_perfect_sic():
    link = make_link([1, 2, 3], [3, 2, 1], 0.0, 0.0)
    for x in build_constraints(link, 2.3):
        assert not x.ms_forced_zero and not x.bs_forced_zero
        assert x.p_b_upper == math.inf and x.p_m_upper == math.inf


def test_constraints_force_ms_zero():
    # g_m (k - c)^2 / N_m = 0.1 * 100 = 10 >= h_mb / N_b = 1 on channel 1
    link = make_link(np.ones(12), np.full(12, 1e3), 1.0, 0.1)
    cons = build_constraints(link, 11.0)
    assert cons[0].ms_forced_zero
    assert not cons[10].ms_forced_zero


def test_constraints_ul_interference_bound():
    # h = 1, N = 1, g_b = 1, g_m = 0.1, k - c = 2: (1 / 0.4 - 1) / 1 = 1.5
    link = make_link(np.full(3, 1.0), np.full(3, 1.0), 1.0, 0.1)
    cons = build_constraints(link, 1.0)
    q = 0.1 * 4
    assert (1 / q - 1) / 1 == pytest.approx(1.5)
    # the canceller-offset cap on the same channel is at (1 / 0.1 - 1) = 9, so 1.5 is binding
    assert cons[2].p_b_upper == pytest.approx(1.5, rel=1e-14)


def test_constraints_zero_offset_leaves_ms_uncapped():
    link = make_link(np.full(3, 5.0), np.full(3, 5.0), 1.0, 0.1)
    cons = build_constraints(link, 2.0)
    assert cons[1].p_m_upper == math.inf
    assert cons[1].p_b_upper == pytest.approx((5.0 / 0.1 - 1.0) / 1.0)


def test_constraints_strong_bs_si_forces_bs_zero():
    # g_b / N_b = 10 >= h_bm / N_m = 5, and the MS cap leaves the MS free
    link = make_link(np.full(2, 100.0), np.full(2, 5.0), 10.0, 0.01)
    cons = build_constraints(link, 1.5)
    assert all(x.bs_forced_zero and not x.ms_forced_zero for x in cons)


# solve_fixed_c


def test_fixed_c_single_channel_full_budgets():
    link = make_link([4.0], [6.0], 0.0, 0.0)
    sol = solve_fixed_c(link, 1.0)
    assert sol.allocation.p_b[0] == pytest.approx(1.0, rel=1e-9)
    assert sol.allocation.p_m[0] == pytest.approx(1.0, rel=1e-9)


def test_fixed_c_symmetric_two_channels():
    link = make_link([10.0, 10.0], [10.0, 10.0], 0.3, 0.5)
    sol = solve_fixed_c(link, 1.5)
    a = sol.allocation
    assert a.p_m[0] == pytest.approx(a.p_m[1], rel=1e-8)
    assert a.p_b[0] == pytest.approx(a.p_b[1], rel=1e-8)


def _alternating_grid(link, c, cons, n=40):
    pts = np.array([
        (i / n, j / n, l / n)
        for i in range(n + 1) for j in range(n + 1 - i) for l in range(n + 1 - i - j)
    ])
    ok_b = np.all([(pts[:, k] <= cons[k].p_b_upper + 1e-12) & ~(cons[k].bs_forced_zero & (pts[:, k] > 0))
                   for k in range(3)], axis=0)
    ok_m = np.all([(pts[:, k] <= cons[k].p_m_upper + 1e-12) & ~(cons[k].ms_forced_zero & (pts[:, k] > 0))
                   for k in range(3)], axis=0)
    cand_b, cand_m = pts[ok_b], pts[ok_m]
    q = link.ms.sic.g_m * (np.arange(1, 4) - c) ** 2

    def rate(pb, pm):
        ul = np.log2(1 + link.h_mb * pm / (link.bs.noise + link.bs.g * pb))
        dl = np.log2(1 + link.h_bm * pb / (link.ms.noise + q * pm))
        return (ul + dl).sum(axis=-1)

    pb = cand_b[np.argmin(np.abs(cand_b - 1 / 3).sum(axis=1))]
    pm = cand_m[np.argmin(np.abs(cand_m - 1 / 3).sum(axis=1))]
    best = rate(pb, pm)
    while True:
        pm = cand_m[np.argmax(rate(pb[None, :], cand_m))]
        pb = cand_b[np.argmax(rate(cand_b, pm[None, :]))]
        r = rate(pb, pm)
        if r <= best + 1e-15:
            return best
        best = r


def test_fixed_c_k3_beats_grid():
    rng = np.random.default_rng(31)
    for _ in range(5):
        link = random_link(rng, 3)
        c = rng.uniform(1, 3)
        cons = build_constraints(link, c)
        sol = solve_fixed_c(link, c, cons)
        assert sol.rate >= _alternating_grid(link, c, cons) - 1e-4


def test_fixed_c_monotone_ascent_and_feasible():
    rng = np.random.default_rng(32)
    for _ in range(30):
        k = int(rng.integers(2, 9))
        link = random_link(rng, k, snr=(-1, 3), sic=(-2, 1))
        c = rng.uniform(1, k)
        cons = build_constraints(link, c)
        sol = solve_fixed_c(link, c, cons, record=True)
        hist = np.array(sol.history)
        assert np.all(np.diff(hist) >= -1e-12)
        assert_feasible(link, sol.allocation, cons)
        assert sol.rate == pytest.approx(sum_rate_multi(link, sol.allocation).sum_rate, rel=1e-12)


def test_fixed_c_saturates_budgets_when_fd_profitable():
    # weak residual SI: every channel gains from FD at the solution
    link = calibrate_evaluation(9, 40.0)
    sol = solve_fixed_c(link, 5.0)
    assert sol.allocation.p_b.sum() == pytest.approx(1.0, rel=1e-9)
    assert sol.allocation.p_m.sum() == pytest.approx(1.0, rel=1e-9)


def test_fixed_c_multistart_never_worse():
    rng = np.random.default_rng(33)
    link = random_link(rng, 5, sic=(0, 1))
    one = solve_fixed_c(link, 2.2)
    many = solve_fixed_c(link, 2.2, opts=SolveOptions(multistart=4))
    assert many.rate >= one.rate - 1e-12


# grid, bounds and derivative


def test_derivative_bound_values():
    assert derivative_bound(33) == pytest.approx(22.97, abs=5e-3)
    assert derivative_bound(2) == pytest.approx(2 / math.log(2) * (math.log(2) + 1 + 2 * math.sqrt(3)))
    assert derivative_bound(2) == pytest.approx(14.88, abs=5e-3)
    with pytest.raises(ValueError):
        derivative_bound(1)


def test_grid_step_epsilon_round_trip():
    assert epsilon_for(33, 0.01) == pytest.approx(0.2297, abs=5e-5)
    assert delta_c_for(33, epsilon_for(33, 0.01)) == pytest.approx(0.01)
    cs = canceller_grid(5, SolveOptions(delta_c=0.5))
    assert np.allclose(cs, [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5])


def test_dr_dc_zero_at_center_for_symmetric_allocation():
    link = make_link(np.full(5, 50.0), np.full(5, 50.0), 0.5, 0.3)
    a = Allocation(np.full(5, 0.2), np.array([0.1, 0.2, 0.4, 0.2, 0.1]), 3.0)
    assert abs(dr_dc(link, a)) < 1e-13


def test_dr_dc_term_vanishes_at_channel():
    link = make_link([10.0], [10.0], 0.5, 0.3)
    assert dr_dc(link, Allocation([1.0], [1.0], 1.0)) == 0.0


def test_dr_dc_matches_finite_difference():
    rng = np.random.default_rng(34)
    for _ in range(50):
        k = int(rng.integers(2, 10))
        link = random_link(rng, k, snr=(-1, 3), sic=(-2, 1))
        a = Allocation(rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k)), rng.uniform(1, k))
        h = 1e-6
        up = sum_rate_multi(link, Allocation(a.p_b, a.p_m, a.c + h)).sum_rate
        dn = sum_rate_multi(link, Allocation(a.p_b, a.p_m, a.c - h)).sum_rate
        fd = (up - dn) / (2 * h)
        d = dr_dc(link, a)
        assert abs(fd - d) <= 1e-5 * abs(d) + 1e-9 * max(1.0, up)


def test_derivative_bound_exceeded_with_strong_near_channel_si():
    # a = g_m P_m / N_m = 1e4 and |k - c| = 1 / sqrt(a): the offset cap holds,
    # yet that channel alone contributes about sqrt(a) / (2 ln 2) = 72.
    link = make_link([1e8, 1e8], [1e8, 1e8], 1.0, 1e4)
    cons = build_constraints(link, 1.01)
    assert not cons[0].ms_forced_zero
    a = Allocation([0.5, 0.5], [1.0, 0.0], 1.01)
    assert a.p_b[0] <= cons[0].p_b_upper
    assert abs(dr_dc(link, a)) > derivative_bound(2)


def test_rate_maxima_in_c_lie_inside_band():
    rng = np.random.default_rng(35)
    for _ in range(20):
        k = int(rng.integers(3, 10))
        link = random_link(rng, k, sic=(-1, 1))
        p_b = rng.dirichlet(np.ones(k))
        p_m = rng.dirichlet(np.ones(k))
        cs = np.linspace(0.0, k + 1.0, 1000)
        rates = [sum_rate_multi(link, Allocation(p_b, p_m, c)).sum_rate for c in cs]
        c_best = cs[int(np.argmax(rates))]
        assert 1.0 < c_best < k


# maximum_rate


def test_maximum_rate_requires_two_channels():
    with pytest.raises(ValueError):
        maximum_rate(make_link([1.0], [1.0], 0.1, 0.1))


def test_maximum_rate_centers_canceller_at_high_snr():
    link = calibrate_evaluation(9, 40.0)
    opts = SolveOptions(delta_c=0.05)
    sol = maximum_rate(link, opts)
    assert abs(sol.allocation.c - 5.0) <= 0.05 + 1e-12


def test_maximum_rate_thread_count_does_not_change_result(monkeypatch):
    link = calibrate_evaluation(9, 20.0)
    opts = SolveOptions(delta_c=0.05, chunk_size=16)
    monkeypatch.setenv("FD_RATER_THREADS", "1")
    one = maximum_rate(link, opts)
    monkeypatch.setenv("FD_RATER_THREADS", "3")
    three = maximum_rate(link, opts)
    assert one.rate == three.rate
    assert one.allocation.c == three.allocation.c
    assert np.array_equal(one.allocation.p_m, three.allocation.p_m)
