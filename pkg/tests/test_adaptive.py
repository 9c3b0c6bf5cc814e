import math
import statistics
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pandora_bon.adaptive import (
    InsufficientTailData,
    StreamingTailStats,
    TailFit,
    UtilityConfig,
    acceptance_rate,
    acceptance_rate_array,
    benchmark_estimate,
    confidence_scaler,
    fair_cap_of_utility,
    fit_tail,
    run_adaptive,
    run_target_ar,
    utility,
)
from pandora_bon.distributions import Empirical, ShiftedExponential, fair_cap
from pandora_bon.policies import RewardStream


def batch_tail(rs):
    """From-scratch oracle: median, then the exact mean of e^r - e^median above it."""
    med = statistics.median(rs)
    theta = Fraction(math.exp(med))
    above = [Fraction(math.exp(r)) for r in rs if r > med]
    if not above:
        return med, None
    return med, float((sum(above) - len(above) * theta) / len(above))


def check_stream(rs):
    stats = StreamingTailStats()
    for i, r in enumerate(rs, 1):
        stats.add(r)
        med, mean = batch_tail(rs[:i])
        assert stats.median == med
        low, high = stats.heap_sizes()
        assert low + high == i and 0 <= low - high <= 1
        if mean is None:
            with pytest.raises(InsufficientTailData):
                stats.exceedance_mean()
        else:
            assert stats.exceedance_mean() == mean


# ---- acceptance rate & utility --------------------------------------------

def test_acceptance_rate_examples():
    assert acceptance_rate(2.0, 2.0) == 1.0
    assert acceptance_rate(7.0, 2.0) == 1.0
    assert acceptance_rate(2.0 - math.log(3), 2.0) == pytest.approx(0.5)
    assert utility(2.0, 2.0, 1.0) == 1.0
    assert utility(2.0 - math.log(3), 2.0, 2.0) == pytest.approx(1.0)
    assert utility(-1e6, 0.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        utility(0.0, 0.0, 0.0)


def test_acceptance_rate_no_overflow():
    assert acceptance_rate(-800.0, 800.0) == 0.0
    assert acceptance_rate(1000.0, -1000.0) == 1.0


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0, 10), st.floats(-30, 30))
def test_acceptance_rate_properties(v, kappa, dv, shift):
    a = acceptance_rate(v, kappa)
    assert 0.0 <= a <= 1.0
    assert (a == 1.0) == (v >= kappa)
    assert acceptance_rate(v + dv, kappa) >= a
    assert acceptance_rate(v, kappa + dv) <= a
    # depends on (v, kappa) only through v - kappa
    assert acceptance_rate(v + shift, kappa + shift) == pytest.approx(a, rel=1e-9, abs=1e-300)


def test_acceptance_rate_array_bitwise():
    v = np.random.default_rng(0).normal(scale=200, size=(20, 30))
    arr = acceptance_rate_array(v, 3.0)
    assert all(arr.ravel()[i] == acceptance_rate(x, 3.0) for i, x in enumerate(v.ravel()))


# ---- streaming statistics -------------------------------------------------

def test_streaming_matches_batch_random_streams():
    rng = np.random.default_rng(11)
    for _ in range(300):
        n = int(rng.integers(1, 40))
        rs = list(rng.normal(size=n)) if rng.random() < 0.5 else [float(x) for x in rng.integers(-2, 3, size=n)]
        check_stream(rs)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.one_of(st.floats(-30, 30), st.sampled_from([0.0, 1.0, math.log(2)])), min_size=1, max_size=30))
def test_streaming_matches_batch_property(rs):
    check_stream(rs)


def test_streaming_rejects_nonfinite():
    with pytest.raises(ValueError):
        StreamingTailStats().add(math.nan)
    with pytest.raises(ValueError):
        StreamingTailStats().median


# ---- tail fit -------------------------------------------------------------

def fit_of(rs, delta=0.1):
    stats = StreamingTailStats()
    for r in rs:
        stats.add(r)
    return fit_tail(stats, delta)


def test_fit_tail_duplicate_median_has_no_tail():
    with pytest.raises(InsufficientTailData):
        fit_of([0.0, math.log(2), math.log(2), math.log(2)])


def test_fit_tail_four_points():
    fit = fit_of([0.0, 1.0, 2.0, 3.0])
    t = math.exp(1.5)
    assert fit.theta_hat == t
    assert fit.mu_hat == pytest.approx(((math.e**2 - t) + (math.e**3 - t)) / 2)
    assert fit.mu_hat == pytest.approx(9.2556, abs=1e-4)


def test_confidence_scaler():
    assert confidence_scaler(100, 0.1) == pytest.approx(0.3256, abs=1e-4)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=60, unique=True), st.floats(0.01, 0.9))
def test_fit_bounds_ordered(rs, delta):
    try:
        fit = fit_of(rs, delta)
    except InsufficientTailData:
        return
    assert 0 < fit.mu_lcb <= fit.mu_hat <= fit.mu_ucb
    assert fit.mu_lcb >= 1e-3 * fit.mu_hat
    assert fit.d_ucb == ShiftedExponential(fit.theta_hat, fit.mu_ucb)


def test_benchmark_estimate():
    assert benchmark_estimate(TailFit(1.0, 1.0, 1.0, 0.0), 0.99) == 0.0
    assert benchmark_estimate(TailFit(1.0, 2.0, 3.0, 2.0), 0.99) == pytest.approx(math.log(10.2103), abs=1e-4)
    fit = TailFit(2.0, 1.0, 1.5, 0.5)
    assert benchmark_estimate(fit, 0.9) < benchmark_estimate(fit, 0.99) < benchmark_estimate(fit, 0.999)
    assert benchmark_estimate(fit, 0.99, "lcb") < benchmark_estimate(fit, 0.99, "ucb")
    with pytest.raises(ValueError):
        benchmark_estimate(fit, 1.0)


# ---- utility fair cap -----------------------------------------------------

def test_utility_fair_cap_point_mass_limit():
    theta, kappa, c = 2.0, math.log(5.0), 0.01
    res = fair_cap_of_utility(TailFit(theta, 1e-12, 1e-12, 1e-12), kappa, 1.0, c)
    assert res.tau == pytest.approx(utility(math.log(theta), kappa, 1.0) - c, abs=1e-6)


def test_utility_fair_cap_zero_cost_limit():
    fit = TailFit(math.e, 1.0, 1.0, 1.0)
    kappa = benchmark_estimate(fit, 0.99)
    assert fair_cap_of_utility(fit, kappa, 1.0, 1e-9).tau == pytest.approx(1.0, abs=1e-6)


def test_utility_fair_cap_monte_carlo():
    fit = TailFit(math.e, 1.0, 1.0, 1.0)
    kappa = benchmark_estimate(fit, 0.99)
    w = math.e + np.random.default_rng(8).exponential(1.0, 10**6)
    u = np.minimum(2 * w / (w + math.exp(kappa)), 1.0)
    oracle = fair_cap(Empirical.from_samples(u), 0.01).tau
    assert fair_cap_of_utility(fit, kappa, 1.0, 0.01).tau == pytest.approx(oracle, rel=0.01)


def test_utility_fair_cap_unprofitable():
    fit = TailFit(1.0, 1.0, 1.0, 1.0)
    res = fair_cap_of_utility(fit, 10.0, 1.0, 0.9)
    assert res.tau == 0.0 and not res.profitable


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.01, 10), st.floats(-2, 5), st.floats(0.1, 3),
       st.floats(0, 0.5), st.floats(0, 0.5))
def test_utility_fair_cap_bounded_and_monotone(theta, mu, kappa, B, c1, c2):
    fit = TailFit(theta, mu, mu, mu)
    lo, hi = sorted((c1 * B, c2 * B))
    t_lo = fair_cap_of_utility(fit, kappa, B, lo).tau
    t_hi = fair_cap_of_utility(fit, kappa, B, hi).tau
    assert 0.0 <= t_hi <= t_lo + 1e-12 <= B + 1e-12


# ---- runs -----------------------------------------------------------------

def test_config_validation():
    for kwargs in ({"cost": 2.0}, {"cost": -0.1}, {"cost": 0.1, "alpha": 1.0}, {"cost": 0.1, "min_samples": 1},
                   {"cost": 0.1, "delta": 0.0}, {"cost": 0.1, "B": 0.0}):
        with pytest.raises(ValueError):
            UtilityConfig(**kwargs)


def test_cost_equal_to_B_stops_at_min_samples():
    rs = np.random.default_rng(1).normal(size=100)
    out = run_adaptive(RewardStream.from_trace(rs), UtilityConfig(cost=1.0, min_samples=8))
    assert out.stopping_time == 8 and not out.stopped_by_cap


def test_constant_trace_runs_to_cap():
    out = run_adaptive(RewardStream.from_trace([5.0] * 20, cap=12), UtilityConfig(cost=0.001, min_samples=4))
    assert out.stopped_by_cap and out.stopping_time == 12 and out.kappa_estimate is None
    out = run_adaptive(RewardStream.from_trace([5.0] * 6), UtilityConfig(cost=0.001, min_samples=4))
    assert out.stopped_by_cap and out.stopping_time == 6


def test_adaptive_outcome_fields():
    rs = np.random.default_rng(2).normal(size=200)
    cfg = UtilityConfig(cost=0.0004)
    out = run_adaptive(RewardStream.from_trace(rs), cfg)
    t = out.stopping_time
    assert out.max_reward == rs[:t].max()
    assert out.acceptance_of_max == acceptance_rate(out.max_reward, out.kappa_estimate)
    assert out.utility_payoff == pytest.approx(out.acceptance_of_max - 0.0004 * t)
    assert utility(out.max_reward, out.kappa_estimate, 1.0) >= out.threshold


def test_target_zero_stops_at_min_samples():
    rs = np.random.default_rng(3).normal(size=50)
    assert run_target_ar(RewardStream.from_trace(rs), UtilityConfig(cost=0.0), 0.0).stopping_time == 8


def test_target_one_unreachable_runs_to_cap():
    rs = [0.0] * 14 + [1.0] * 6
    out = run_target_ar(RewardStream.from_trace(rs * 5, cap=60), UtilityConfig(cost=0.0), 1.0)
    assert out.stopped_by_cap and out.stopping_time == 60 and out.acceptance_of_max < 1.0


def test_target_domain():
    with pytest.raises(ValueError):
        run_target_ar(RewardStream.from_trace([1.0]), UtilityConfig(cost=0.0), 1.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.3, 1.0))
def test_target_met_when_stopped_early(seed, target):
    rs = np.random.default_rng(seed).normal(scale=2.0, size=300)
    out = run_target_ar(RewardStream.from_trace(rs), UtilityConfig(cost=0.0), target)
    if not out.stopped_by_cap:
        assert out.acceptance_of_max >= target


def _lognormal_profit_study(orderings=100, grid=tuple(2**k for k in range(10))):
    cfg = UtilityConfig(cost=0.0004, alpha=0.99, B=1.0, min_samples=8)
    kappa = 2.3263478740408408  # 0.99 quantile of N(0, 1)
    rows = np.random.default_rng(77).normal(size=(orderings, 960))
    prefix = np.maximum.accumulate(rows, axis=1)
    ts, prof = [], []
    for row in rows:
        out = run_adaptive(RewardStream.from_trace(row), cfg)
        ts.append(out.stopping_time)
        prof.append(acceptance_rate(out.max_reward, kappa) - cfg.cost * out.stopping_time)
    fixed = {n: np.mean(acceptance_rate_array(prefix[:, n - 1], kappa)) - cfg.cost * n for n in grid}
    best_n = max(fixed, key=fixed.get)
    return np.mean(ts), np.mean(prof), best_n, fixed[best_n]


@pytest.mark.xfail(strict=True, reason="the LCB benchmark sits below the running max at t=8, so runs stop at t")
def test_adaptive_beats_fixed_grid_on_lognormal_rewards():
    mean_t, profit, best_n, best_profit = _lognormal_profit_study()
    assert mean_t < best_n
    assert profit >= best_profit


def test_target_ar_calibration_exponential_tail_observed():
    # records the observed overshoot: the UCB benchmark is conservative on exact shifted-exponential tails
    theta, mu, target = 1.0, 3.0, 0.9
    kappa = math.log(theta + mu * math.log(100))
    rng = np.random.default_rng(5)
    ars = []
    for _ in range(100):
        rs = np.log(theta + mu * rng.exponential(size=960))
        out = run_target_ar(RewardStream.from_trace(rs), UtilityConfig(cost=0.0), target)
        ars.append(acceptance_rate(out.max_reward, kappa))
    assert np.mean(ars) >= target


@pytest.mark.xfail(strict=True, reason="achieved AR overshoots the target on exact exponential tails")
def test_target_ar_calibration_exponential_tail_within_005():
    theta, mu, target = 1.0, 3.0, 0.9
    kappa = math.log(theta + mu * math.log(100))
    rng = np.random.default_rng(5)
    ars = []
    for _ in range(100):
        rs = np.log(theta + mu * rng.exponential(size=960))
        out = run_target_ar(RewardStream.from_trace(rs), UtilityConfig(cost=0.0), target)
        ars.append(acceptance_rate(out.max_reward, kappa))
    assert abs(np.mean(ars) - target) <= 0.05
