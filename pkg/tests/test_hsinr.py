import math

import numpy as np
import pytest

from fdrater.hsinr import hsinr_maximum_rate, hsinr_rate, ms_fractions
from fdrater.model import (
    Allocation,
    FlatSic,
    LinkInstance,
    QuadraticSic,
    StationParams,
    sum_rate_multi,
)
from fdrater.sic import calibrate_evaluation


def flat_link(k, h=100.0, g_b=0.0, g_m=0.0, noise=1.0):
    return LinkInstance(
        np.full(k, h), np.full(k, h),
        StationParams(noise, FlatSic(g_b)), StationParams(noise, QuadraticSic(g_m)),
    )


def test_rate_single_channel_no_si():
    link = flat_link(1)
    r = hsinr_rate(link, Allocation([1.0], [1.0], 1.0))
    assert r == pytest.approx(2 * math.log2(100), rel=1e-14)


def test_rate_reference_value():
    link = LinkInstance(
        np.array([10.0]), np.array([10.0]),
        StationParams(1.0, FlatSic(1.0)), StationParams(1.0, FlatSic(1.0)),
    )
    r = hsinr_rate(link, Allocation([1.0], [1.0], 1.0))
    assert r == pytest.approx(2 * math.log2(5), rel=1e-14)


def test_rate_zero_power_sentinel():
    link = flat_link(2)
    assert hsinr_rate(link, Allocation([1.0, 0.0], [0.5, 0.5], 1.5)) == -math.inf


def test_rate_close_to_exact_at_high_sinr():
    rng = np.random.default_rng(41)
    for _ in range(30):
        k = int(rng.integers(1, 8))
        link = LinkInstance(
            10 ** rng.uniform(3, 5, k), 10 ** rng.uniform(3, 5, k),
            StationParams(1.0, FlatSic(rng.uniform(0, 1))),
            StationParams(1.0, QuadraticSic(rng.uniform(0, 0.1))),
        )
        a = Allocation(rng.dirichlet(np.ones(k) * 5), rng.dirichlet(np.ones(k) * 5), rng.uniform(1, k))
        rep = sum_rate_multi(link, a)
        sinr_ok = all(min(2 ** u, 2 ** d) - 1 >= 100 for u, d in rep.per_channel)
        if sinr_ok:
            assert abs(rep.sum_rate - hsinr_rate(link, a)) <= 0.03 * k


def test_allocation_without_si_is_uniform():
    alloc = hsinr_maximum_rate(flat_link(4))
    assert alloc.c == 2.5
    assert np.allclose(alloc.p_m, 0.25, rtol=0, atol=0)
    assert np.allclose(alloc.p_b, 0.25, rtol=0, atol=0)


@pytest.mark.parametrize("k", [5, 9, 33])
def test_allocation_symmetric_for_odd_k(k):
    alloc = hsinr_maximum_rate(calibrate_evaluation(k, 30.0))
    assert np.allclose(alloc.p_m, alloc.p_m[::-1], rtol=1e-13, atol=0)


@pytest.mark.parametrize("k", [4, 9, 16, 33])
def test_stationarity_identity_and_budget(k):
    eps = 1e-6
    link = calibrate_evaluation(k, 30.0)
    alloc = hsinr_maximum_rate(link, eps)
    alpha = alloc.p_m / link.ms.p_max
    assert 1 - eps / (k + eps) <= alpha.sum() <= 1
    r = link.ms.sic.g_m * link.ms.p_max * (link.channels - alloc.c) ** 2
    lhs = alpha * (link.ms.noise + r * alpha)
    assert np.max(np.abs(lhs - lhs[0])) / link.ms.noise <= 1e-10


def test_fractions_decrease_away_from_center():
    link = calibrate_evaluation(17, 30.0)
    res = ms_fractions(link)
    dist = np.abs(link.channels - 9.0)
    order = np.argsort(dist, kind="stable")
    assert np.all(np.diff(res.alpha[order]) <= 1e-15)


def test_bisection_iterations_logarithmic():
    link = calibrate_evaluation(33, 30.0)
    for eps in (1e-3, 1e-6, 1e-9):
        res = ms_fractions(link, eps)
        bound = math.ceil(math.log2((1 / 33) / (eps / (33 + eps) / 33)))
        assert res.iterations <= bound + 2


def test_fractions_at_off_center_position():
    link = calibrate_evaluation(8, 30.0)
    res = ms_fractions(link, 1e-9, c=2.3)
    assert res.alpha.sum() == pytest.approx(1.0, abs=1e-8)
    assert int(np.argmax(res.alpha)) == 1


def test_rejects_nonpositive_epsilon():
    with pytest.raises(ValueError):
        hsinr_maximum_rate(flat_link(3, g_m=0.1), 0.0)


def test_gains_do_not_change_allocation():
    base = calibrate_evaluation(9, 30.0)
    rng = np.random.default_rng(42)
    other = LinkInstance(base.h_mb * rng.uniform(0.5, 2, 9), base.h_bm * rng.uniform(0.5, 2, 9), base.bs, base.ms)
    assert np.array_equal(hsinr_maximum_rate(base).p_m, hsinr_maximum_rate(other).p_m)
