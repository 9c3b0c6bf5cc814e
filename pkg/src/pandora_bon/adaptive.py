"""Adaptive Best-of-N: streaming tail fit, acceptance-rate utility, fair-cap stopping."""

from __future__ import annotations

import heapq
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .distributions import DEFAULT_INTERVALS, TAIL_MASS, ShiftedExponential
from .policies import RewardStream

LCB_FLOOR = 1e-3

# exp(r) sums are kept as integers in units of 2**-1074, the smallest subnormal;
# every double is an exact multiple, and int / int true division rounds correctly.
_FIXED_SHIFT = 1074
_FIXED_ONE = 1 << _FIXED_SHIFT
_BELOW_ONE = math.nextafter(1.0, 0.0)


class InsufficientTailData(ValueError):
    """No observation lies strictly above the median."""


def _to_fixed(x: float) -> int:
    num, den = x.as_integer_ratio()
    return num * (_FIXED_ONE // den)


def acceptance_rate(v: float, kappa: float) -> float:
    """min{2 e^v / (e^v + e^kappa), 1}, evaluated as min{2 / (1 + e^(kappa - v)), 1}."""
    d = kappa - v
    if d <= 0:
        return 1.0
    if d > 700.0:
        return 2.0 * math.exp(-d)
    # strictly below 1 whenever v < kappa, even when exp(d) rounds to 1
    return min(2.0 / (1.0 + math.exp(d)), _BELOW_ONE)


def acceptance_rate_array(v, kappa: float) -> np.ndarray:
    """Elementwise acceptance_rate, bitwise equal to the scalar version.

    Evaluated once per distinct value, which is cheap for running-max arrays.
    """
    arr = np.asarray(v, dtype=float)
    uniq, inverse = np.unique(arr, return_inverse=True)
    vals = np.array([acceptance_rate(float(x), kappa) for x in uniq])
    return vals[inverse].reshape(arr.shape)


def utility(v: float, kappa: float, B: float) -> float:
    if B <= 0:
        raise ValueError(f"B must be positive, got {B}")
    return B * acceptance_rate(v, kappa)


class StreamingTailStats:
    """Two-heap running median plus exact sums of exp(r) above the median.

    The low heap (negated, max-heap) holds the lower half and is never
    smaller than the high heap.  Exceedances are the high-heap entries
    strictly greater than the median; ties at the median are tracked
    through a value counter on the high heap.
    """

    def __init__(self):
        self._low: list[float] = []
        self._high: list[float] = []
        self._high_counts: Counter = Counter()
        self._high_exp_fixed = 0
        self.n = 0

    def _push_high(self, r: float) -> None:
        heapq.heappush(self._high, r)
        self._high_counts[r] += 1
        self._high_exp_fixed += _to_fixed(math.exp(r))

    def _pop_high(self) -> float:
        r = heapq.heappop(self._high)
        self._high_counts[r] -= 1
        if not self._high_counts[r]:
            del self._high_counts[r]
        self._high_exp_fixed -= _to_fixed(math.exp(r))
        return r

    def add(self, r: float) -> None:
        r = float(r)
        if not math.isfinite(r):
            raise ValueError(f"reward must be finite, got {r}")
        if not self._low or r <= -self._low[0]:
            heapq.heappush(self._low, -r)
        else:
            self._push_high(r)
        if len(self._low) > len(self._high) + 1:
            self._push_high(-heapq.heappop(self._low))
        elif len(self._high) > len(self._low):
            heapq.heappush(self._low, -self._pop_high())
        self.n += 1

    @property
    def median(self) -> float:
        if not self.n:
            raise ValueError("no observations")
        if len(self._low) > len(self._high):
            return -self._low[0]
        return (-self._low[0] + self._high[0]) / 2

    def _exceedances(self) -> tuple[int, int]:
        count, total = len(self._high), self._high_exp_fixed
        if count and self._high[0] == self.median:
            ties = self._high_counts[self._high[0]]
            count -= ties
            total -= ties * _to_fixed(math.exp(self._high[0]))
        return count, total

    @property
    def exceedance_count(self) -> int:
        return self._exceedances()[0]

    def exceedance_mean(self) -> float:
        """Mean of e^r - e^median over rewards strictly above the median."""
        count, total = self._exceedances()
        if not count:
            raise InsufficientTailData("no rewards strictly above the median")
        theta = _to_fixed(math.exp(self.median))
        return (total - count * theta) / (count * _FIXED_ONE)

    def heap_sizes(self) -> tuple[int, int]:
        return len(self._low), len(self._high)


@dataclass(frozen=True)
class TailFit:
    theta_hat: float
    mu_hat: float
    mu_ucb: float
    mu_lcb: float
    n: int = 0
    scaler: float = 0.0

    @property
    def d_ucb(self) -> ShiftedExponential:
        return ShiftedExponential(self.theta_hat, self.mu_ucb)

    @property
    def d_lcb(self) -> ShiftedExponential:
        return ShiftedExponential(self.theta_hat, self.mu_lcb)


def confidence_scaler(n: int, delta: float) -> float:
    """sqrt(log n * log(1/delta) / n)."""
    return math.sqrt(math.log(n) * math.log(1.0 / delta) / n)


def fit_tail(stats: StreamingTailStats, delta: float) -> TailFit:
    """Shifted-exponential fit to exp(reward) above the median, with scaled bounds on the mean."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    mu_hat = stats.exceedance_mean()
    if not mu_hat > 0:
        raise InsufficientTailData("exceedances collapse onto the median")
    theta_hat = math.exp(stats.median)
    if not math.isfinite(theta_hat):
        raise OverflowError("exp(median reward) overflows; rewards are too large")
    s = confidence_scaler(stats.n, delta)
    mu_lcb = max(mu_hat * (1.0 - s), LCB_FLOOR * mu_hat)
    return TailFit(theta_hat, mu_hat, mu_hat * (1.0 + s), mu_lcb, stats.n, s)


def benchmark_estimate(fit: TailFit, alpha: float, bound: str = "lcb") -> float:
    """log of the alpha-percentile of the fitted shifted exponential (LCB mean by default)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    mu = {"lcb": fit.mu_lcb, "ucb": fit.mu_ucb, "point": fit.mu_hat}[bound]
    return math.log(fit.theta_hat - mu * math.log1p(-alpha))


@dataclass(frozen=True)
class UtilityFairCap:
    tau: float
    profitable: bool
    expected_utility: float


_GRID_CACHE: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _unit_grid(intervals: int):
    # midpoints and Riemann weights of Exp(1) on [0, log(1/TAIL_MASS)], reused for every fit
    if intervals not in _GRID_CACHE:
        z_max = math.log(1.0 / TAIL_MASS)
        h = z_max / intervals
        z = h * (np.arange(intervals) + 0.5)
        p = np.exp(-z) * h
        suffix_p = np.concatenate([np.cumsum(p[::-1])[::-1], [0.0]])
        _GRID_CACHE[intervals] = (z, p, suffix_p)
    return _GRID_CACHE[intervals]


def fair_cap_of_utility(
    fit: TailFit, kappa: float, B: float, cost: float, intervals: int = DEFAULT_INTERVALS
) -> UtilityFairCap:
    """Fair cap of u_kappa(log w) for w ~ ShiftedExp(theta_hat, mean mu_ucb).

    The expectation is a midpoint Riemann sum over the fitted law.  Because
    the utility is nondecreasing along the grid, E[(u - tau)+] is piecewise
    linear in tau and is inverted exactly on the bracket [0, B].  When the
    expected utility does not exceed the cost, tau = 0 and ``profitable`` is
    False, so any maximum stops the search.
    """
    if B <= 0:
        raise ValueError(f"B must be positive, got {B}")
    if cost < 0:
        raise ValueError(f"cost must be nonnegative, got {cost}")
    z, p, suffix_p = _unit_grid(intervals)
    w = fit.theta_hat + fit.mu_ucb * z
    with np.errstate(over="ignore"):
        k = math.exp(kappa) if kappa < 709.0 else math.inf
    u = B * np.minimum(2.0 * w / (w + k), 1.0)
    pu = p * u
    suffix_pu = np.concatenate([np.cumsum(pu[::-1])[::-1], [0.0]])
    expected = float(suffix_pu[0])
    if expected <= cost:
        return UtilityFairCap(0.0, False, expected)
    # E[(u - u_j)+] at each grid node, nonincreasing in j
    at_nodes = suffix_pu[1:] - u * suffix_p[1:]
    hits = np.flatnonzero(at_nodes >= cost)
    if hits.size == 0:
        tau = (expected - cost) / suffix_p[0]
    else:
        j = hits[-1] + 1
        tau = (suffix_pu[j] - cost) / suffix_p[j] if suffix_p[j] > 0 else float(u[-1])
    return UtilityFairCap(float(min(max(tau, 0.0), B)), True, expected)


@dataclass(frozen=True)
class UtilityConfig:
    cost: float
    B: float = 1.0
    alpha: float = 0.99
    min_samples: int = 8
    delta: float = 0.1
    intervals: int = DEFAULT_INTERVALS

    def __post_init__(self):
        if not self.B > 0:
            raise ValueError(f"B must be positive, got {self.B}")
        if not 0 <= self.cost <= self.B:
            raise ValueError(f"cost must lie in [0, B], got {self.cost}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.min_samples < 2:
            raise ValueError(f"min_samples must be >= 2, got {self.min_samples}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class AdaptiveOutcome:
    stopping_time: int
    max_reward: float
    kappa_estimate: float | None
    acceptance_of_max: float | None
    utility_payoff: float | None
    stopped_by_cap: bool
    threshold: float | None = None


def _run(stream: RewardStream, cfg: UtilityConfig, target: float | None) -> AdaptiveOutcome:
    stats = StreamingTailStats()
    m = -math.inf
    kappa = threshold = None
    t = 0
    while True:
        if stream.at_cap or stream.exhausted:
            return _outcome(t, m, kappa, threshold, cfg, capped=True)
        r = stream.draw()
        t += 1
        if r > m:
            m = r
        stats.add(r)
        if t < cfg.min_samples:
            continue
        try:
            fit = fit_tail(stats, cfg.delta)
        except InsufficientTailData:
            continue
        if target is None:
            kappa = benchmark_estimate(fit, cfg.alpha, "lcb")
            threshold = fair_cap_of_utility(fit, kappa, cfg.B, cfg.cost, cfg.intervals).tau
            if utility(m, kappa, cfg.B) >= threshold:
                return _outcome(t, m, kappa, threshold, cfg, capped=False)
        else:
            kappa = benchmark_estimate(fit, cfg.alpha, "ucb")
            threshold = target
            if acceptance_rate(m, kappa) >= target:
                return _outcome(t, m, kappa, threshold, cfg, capped=False)


def _outcome(t, m, kappa, threshold, cfg, capped) -> AdaptiveOutcome:
    if t == 0:
        raise ValueError("stream yielded no rewards")
    if kappa is None:
        return AdaptiveOutcome(t, m, None, None, None, capped, threshold)
    ar = acceptance_rate(m, kappa)
    return AdaptiveOutcome(t, m, kappa, ar, cfg.B * ar - cfg.cost * t, capped, threshold)


def run_adaptive(stream: RewardStream, cfg: UtilityConfig) -> AdaptiveOutcome:
    """Adaptive Best-of-N: stop once u_kappa(M) reaches the fitted fair cap.

    kappa is the log alpha-percentile of the LCB tail fit; the fair cap is
    computed over the UCB tail fit.  Trace exhaustion counts as a cap stop.
    """
    return _run(stream, cfg, None)


def run_target_ar(stream: RewardStream, cfg: UtilityConfig, target: float) -> AdaptiveOutcome:
    """Stop once AR_kappa(M) >= target, with kappa taken from the UCB tail fit."""
    if not 0.0 <= target <= 1.0:
        raise ValueError(f"target must lie in [0, 1], got {target}")
    return _run(stream, cfg, target)
