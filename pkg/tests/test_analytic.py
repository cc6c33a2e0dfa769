import math

import numpy as np
import pytest
from scipy import optimize

from doc_sim.analytic import (Allocation, E_OVERHEAD, INV_E, NetworkParams,
                              SolverError, StationStats, channel_time_deficit,
                              proportional_fairness, solve_min_deficit,
                              solve_optimal_p, solve_threshold, station_stats,
                              success_probabilities, throughput,
                              throughput_slope_signs)
from doc_sim.channel import RateModel, censored_mean, mean_rate, tail_prob

W = 1e7


def iid(rho=1.0):
    return RateModel("iid-rayleigh", W=W, rho=rho)


def params_for(n, models=None, t_tx=10, t_total=100_000):
    models = models if models is not None else (iid(),) * n
    return NetworkParams(n=n, t_tx=t_tx, t_total=t_total, models=models)


def homog_stats(n, rho=1.0, threshold=None, params=None):
    params = params or params_for(n)
    m = iid(rho)
    thr = solve_threshold(m, params) if threshold is None else threshold
    return [station_stats(m, thr, params)] * n, params


def near_deterministic(c):
    # a single-entry table under an enormous SNR emits rate c essentially
    # surely, emulating a constant-rate channel
    return RateModel("discrete-mapped", W=W, rho=1e9, rate_table=(c,))


def test_station_stats_limits():
    params = params_for(1)
    m = iid(1.0)
    s0 = station_stats(m, 0.0, params)
    assert s0.t_hold == pytest.approx(params.t_tx + 1.0)
    assert s0.l_bits == pytest.approx(mean_rate(m) * params.t_tx, rel=1e-12)
    s_inf = station_stats(m, 60 * W, params)
    assert s_inf.t_hold == pytest.approx(1.0, abs=1e-6)
    assert s_inf.l_bits < 1e-3 * mean_rate(m)
    s_w = station_stats(m, W, params)
    assert s_w.t_hold == pytest.approx(1.0 + 10.0 * math.exp(-1.0), rel=1e-12)


def test_success_probability_consistency():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = rng.integers(1, 11)
        p = rng.uniform(0, 1, size=n)
        p_s_i, p_s = success_probabilities(p)
        # odds form: p_s = prod(1-p) * sum p/(1-p)
        if np.all(p < 1):
            alt = np.prod(1 - p) * np.sum(p / (1 - p))
            assert abs(p_s - alt) < 1e-12
        assert abs(p_s - p_s_i.sum()) < 1e-12


def test_throughput_trivial_cases():
    params = params_for(1)
    c = 5e6
    stats = [StationStats(t_hold=params.t_tx + 1.0, l_bits=c * params.t_tx,
                          threshold=0.0)]
    alloc = throughput([1.0], stats, params)
    assert alloc.r[0] == pytest.approx(c * params.t_tx / (params.t_tx + 1.0))

    params2 = params_for(2)
    stats2, _ = homog_stats(2)
    alloc2 = throughput([1.0, 1.0], stats2, params2)
    assert alloc2.p_s == 0.0
    assert np.all(alloc2.r == 0.0)

    alloc3 = throughput([0.0, 0.0], stats2, params2)
    assert np.all(alloc3.r == 0.0)


def test_solve_threshold_deterministic_closed_form():
    c = 5e6
    params = params_for(1, (near_deterministic(c),))
    thr = solve_threshold(near_deterministic(c), params)
    assert thr == pytest.approx(c / (1.0 + math.e / params.t_tx), rel=1e-9)


def test_solve_threshold_small_tx_limit():
    m = iid(1.0)
    params = params_for(1, (m,), t_tx=1, t_total=1000)
    big = solve_threshold(m, params_for(1, (m,)))
    small = solve_threshold(m, params)
    assert small < big  # heavier contention overhead lowers the threshold


def test_solve_threshold_residual_and_argmax_oracle():
    m = iid(1.0)
    params = params_for(1, (m,))
    thr = solve_threshold(m, params)
    from doc_sim.channel import excess_mean
    resid = excess_mean(m, thr) - thr * math.e / params.t_tx
    assert abs(resid) <= 1e-9 * mean_rate(m)

    # independent oracle: golden-section maximization of the single-station
    # throughput l(x) / (T(x) + (e-1))
    def neg_rate(x):
        s = station_stats(m, x, params)
        return -s.l_bits / (s.t_hold + E_OVERHEAD)

    res = optimize.minimize_scalar(neg_rate, bracket=(0.1 * W, W, 4 * W),
                                   method="golden", options={"xtol": 1e-10})
    assert thr == pytest.approx(res.x, rel=1e-6)

    # perturbing the threshold by 1% lowers the single-station throughput
    peak = -neg_rate(thr)
    assert -neg_rate(thr * 1.01) < peak
    assert -neg_rate(thr * 0.99) < peak


def test_solve_threshold_rejects_busted_model():
    class Dead:
        kind = "iid-rayleigh"
        W = 1e7
        rho = 1e-300
    with pytest.raises((SolverError, OverflowError, ValueError)):
        solve_threshold(Dead(), params_for(1, (iid(),)))


def test_solve_optimal_p_homogeneous_oracles():
    # N = 10: larger root of 10 p (1-p)^9 = 1/e by plain bisection
    def f(p):
        return 10 * p * (1 - p) ** 9 - INV_E

    lo, hi = 0.1, 1.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    oracle = 0.5 * (lo + hi)
    stats, params = homog_stats(10)
    p = solve_optimal_p(stats, params)
    assert np.allclose(p, oracle, rtol=1e-9)
    assert oracle == pytest.approx(0.133, abs=5e-4)

    # N = 2: larger root of the quadratic
    stats2, params2 = homog_stats(2)
    p2 = solve_optimal_p(stats2, params2)
    assert p2[0] == pytest.approx((1 + math.sqrt(1 - 2 / math.e)) / 2, rel=1e-9)

    # N = 1 plays 1/e outright
    stats1, params1 = homog_stats(1)
    assert solve_optimal_p(stats1, params1)[0] == pytest.approx(INV_E)


def test_solve_optimal_p_residuals_and_dominance():
    params = params_for(4, tuple(iid(r) for r in (1.0, 2.0, 4.0, 9.0)))
    stats = [station_stats(m, solve_threshold(m, params), params)
             for m in params.models]
    p = solve_optimal_p(stats, params)
    p_s_i, p_s = success_probabilities(p)
    assert abs(p_s - INV_E) <= 1e-9
    ct = p_s_i * np.array([s.t_hold + E_OVERHEAD for s in stats])
    assert np.max(np.abs(ct / ct[0] - 1.0)) <= 1e-9
    small = solve_optimal_p(stats, params, branch="smaller")
    assert np.all(p > small)
    ps_small = success_probabilities(small)[1]
    assert abs(ps_small - INV_E) <= 1e-9


def test_solve_optimal_p_equal_holds_give_equal_p():
    params = params_for(3, tuple(iid(2.0) for _ in range(3)))
    s = station_stats(params.models[0], 1.2e7, params)
    stats = [s, s, StationStats(t_hold=s.t_hold, l_bits=0.5 * s.l_bits,
                                threshold=s.threshold)]
    p = solve_optimal_p(stats, params)
    # only hold times enter the ratios; bits do not
    assert p[0] == pytest.approx(p[1], rel=1e-12)
    assert p[0] == pytest.approx(p[2], rel=1e-12)


def test_proportional_fairness():
    mk = lambda r: Allocation(p=np.zeros(len(r)), r=np.array(r, float),
                              p_s_i=np.zeros(len(r)), p_s=0.0)
    assert proportional_fairness(mk([1.0, 1.0, 1.0])) == 0.0
    assert proportional_fairness(mk([math.e, math.e])) == pytest.approx(2.0)
    assert proportional_fairness(mk([1.0, 0.0])) == -math.inf


def test_optimal_p_matches_fairness_grid_oracle():
    # the 1/e target approximates the true optimum; at N = 10 it gives up
    # about 2% per-station throughput against the brute-force symmetric
    # grid maximum (0.25 in log units covers it)
    stats, params = homog_stats(10)
    p_star = solve_optimal_p(stats, params)
    at_star = proportional_fairness(throughput(p_star, stats, params))
    grid = [proportional_fairness(throughput([p] * 10, stats, params))
            for p in np.linspace(0.02, 0.6, 117)]
    assert at_star >= max(grid) - 0.25
    assert at_star <= max(grid) + 1e-9


def test_throughput_slope_signs():
    stats2, params2 = homog_stats(2)
    assert np.all(throughput_slope_signs([0.3, 0.3], stats2, params2) == 1)
    stats1, params1 = homog_stats(1)
    assert throughput_slope_signs([0.5], stats1, params1)[0] == 1
    stats10, params10 = homog_stats(10)
    p_star = solve_optimal_p(stats10, params10)
    assert np.all(throughput_slope_signs(p_star, stats10, params10) == 1)


def test_channel_time_deficit():
    stats, params = homog_stats(10)
    assert channel_time_deficit(np.zeros(10), stats, params) == pytest.approx(
        params.t_total)
    p_star = solve_optimal_p(stats, params)
    assert abs(channel_time_deficit(p_star, stats, params)) < 0.01 * params.t_total
    p_min, delta = solve_min_deficit(stats, params)
    assert delta == pytest.approx(
        channel_time_deficit(p_min, stats, params), rel=1e-12)
    assert delta < 0.0


def test_solve_min_deficit():
    stats, params = homog_stats(10)
    p_min, delta = solve_min_deficit(stats, params)
    assert np.allclose(p_min, 0.1, atol=1e-9)  # scalar argmax at 1/n

    stats2, params2 = homog_stats(2)
    p2, d2 = solve_min_deficit(stats2, params2)
    assert np.allclose(p2, 0.5, atol=1e-9)
    assert d2 < 0.0

    # grid-search oracle for the success probability along the family
    params_h = params_for(3, tuple(iid(r) for r in (1.0, 3.0, 8.0)))
    stats_h = [station_stats(m, solve_threshold(m, params_h), params_h)
               for m in params_h.models]
    p_min_h, _ = solve_min_deficit(stats_h, params_h)
    best = success_probabilities(p_min_h)[1]
    c = 1.0 / np.array([s.t_hold + E_OVERHEAD for s in stats_h])
    for scale in np.linspace(0.2, 12.0, 400):
        x = scale * c
        ps = success_probabilities(x / (1 + x))[1]
        assert ps <= best + 1e-7
    # componentwise below the larger fixed-point root
    p_star_h = solve_optimal_p(stats_h, params_h)
    assert np.all(p_min_h < p_star_h)


def test_network_params_validation():
    with pytest.raises(ValueError):
        NetworkParams(n=0)
    with pytest.raises(ValueError):
        NetworkParams(n=1, t_tx=0)
    with pytest.raises(ValueError):
        NetworkParams(n=1, t_tx=10, t_total=50)
    with pytest.raises(ValueError):
        NetworkParams(n=2, models=(iid(),))
