"""Reward distributions and fair-cap solvers.

Every distribution exposes the same small surface: ``cdf``, ``percentile``,
``partial_expectation`` (the closed-form E[(v - tau)+]), inverse-CDF sampling
and scaling.  ``fair_cap`` solves E[(v - tau)+] = c either in closed form or
by bisection on a midpoint Riemann sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_INTERVALS = 5000
TAIL_MASS = 1e-7

_BISECT_MAX_ITER = 200
_BISECT_REL_RESIDUAL = 1e-3
_BISECT_REL_WIDTH = 1e-9


class InvalidDistribution(ValueError):
    """Raised for non-finite or out-of-range distribution parameters."""


class NoFiniteSolution(ValueError):
    """Raised when E[(v - tau)+] = c has no admissible solution."""


def _check_finite(**params: float) -> None:
    for name, value in params.items():
        if not math.isfinite(value):
            raise InvalidDistribution(f"{name} must be finite, got {value!r}")


class RewardDistribution:
    """Base class; concrete laws are frozen dataclasses below."""

    kind: str = "abstract"
    continuous: bool = True

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def essinf(self) -> float:
        raise NotImplementedError

    def cdf(self, x: float) -> float:
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError(f"{self.kind} has no density")

    def inverse_cdf(self, u):
        raise NotImplementedError

    def percentile(self, alpha: float) -> float:
        raise NotImplementedError

    def partial_expectation(self, tau: float) -> float:
        raise NotImplementedError

    def scaled(self, factor: float) -> "RewardDistribution":
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.inverse_cdf(rng.random()))

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Vectorised draws; yields the same sequence as repeated ``sample``."""
        return np.asarray(self.inverse_cdf(rng.random(size)), dtype=float)


@dataclass(frozen=True)
class Exponential(RewardDistribution):
    rate: float
    kind = "exponential"

    def __post_init__(self):
        _check_finite(rate=self.rate)
        if self.rate <= 0:
            raise InvalidDistribution(f"rate must be positive, got {self.rate}")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    @property
    def essinf(self) -> float:
        return 0.0

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < 0, 0.0, -np.expm1(-self.rate * np.maximum(x, 0.0)))
        return out.item() if out.ndim == 0 else out

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < 0, 0.0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)))
        return out.item() if out.ndim == 0 else out

    def inverse_cdf(self, u):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    def percentile(self, alpha: float) -> float:
        _check_alpha(alpha)
        return -math.log1p(-alpha) / self.rate

    def partial_expectation(self, tau: float) -> float:
        if tau <= 0:
            return self.mean - tau
        return math.exp(-self.rate * tau) / self.rate

    def scaled(self, factor: float) -> "Exponential":
        return Exponential(self.rate / factor)


@dataclass(frozen=True)
class ShiftedExponential(RewardDistribution):
    """theta + Exp(mean=mean); the scale parameter is the mean, not the rate."""

    shift: float
    mean_excess: float
    kind = "shifted_exponential"

    def __post_init__(self):
        _check_finite(shift=self.shift, mean_excess=self.mean_excess)
        if self.mean_excess <= 0:
            raise InvalidDistribution(f"mean must be positive, got {self.mean_excess}")

    @property
    def mean(self) -> float:
        return self.shift + self.mean_excess

    @property
    def essinf(self) -> float:
        return self.shift

    def cdf(self, x):
        z = (np.asarray(x, dtype=float) - self.shift) / self.mean_excess
        out = np.where(z < 0, 0.0, -np.expm1(-np.maximum(z, 0.0)))
        return out.item() if out.ndim == 0 else out

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.shift) / self.mean_excess
        out = np.where(z < 0, 0.0, np.exp(-np.maximum(z, 0.0)) / self.mean_excess)
        return out.item() if out.ndim == 0 else out

    def inverse_cdf(self, u):
        return self.shift - self.mean_excess * np.log1p(-np.asarray(u, dtype=float))

    def percentile(self, alpha: float) -> float:
        _check_alpha(alpha)
        return self.shift - self.mean_excess * math.log1p(-alpha)

    def partial_expectation(self, tau: float) -> float:
        if tau <= self.shift:
            return self.mean - tau
        return self.mean_excess * math.exp(-(tau - self.shift) / self.mean_excess)

    def scaled(self, factor: float) -> "ShiftedExponential":
        return ShiftedExponential(self.shift * factor, self.mean_excess * factor)


@dataclass(frozen=True)
class Uniform(RewardDistribution):
    lo: float
    hi: float
    kind = "uniform"

    def __post_init__(self):
        _check_finite(lo=self.lo, hi=self.hi)
        if not self.lo < self.hi:
            raise InvalidDistribution(f"need lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def essinf(self) -> float:
        return self.lo

    def cdf(self, x):
        out = np.clip((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        return out.item() if out.ndim == 0 else out

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where((x >= self.lo) & (x <= self.hi), 1.0 / (self.hi - self.lo), 0.0)
        return out.item() if out.ndim == 0 else out

    def inverse_cdf(self, u):
        return self.lo + (self.hi - self.lo) * np.asarray(u, dtype=float)

    def percentile(self, alpha: float) -> float:
        _check_alpha(alpha)
        return self.lo + alpha * (self.hi - self.lo)

    def partial_expectation(self, tau: float) -> float:
        if tau <= self.lo:
            return self.mean - tau
        if tau >= self.hi:
            return 0.0
        return (self.hi - tau) ** 2 / (2.0 * (self.hi - self.lo))

    def scaled(self, factor: float) -> "Uniform":
        return Uniform(self.lo * factor, self.hi * factor)


@dataclass(frozen=True)
class PointMass(RewardDistribution):
    value: float
    kind = "point"
    continuous = False

    def __post_init__(self):
        _check_finite(value=self.value)

    @property
    def mean(self) -> float:
        return self.value

    @property
    def essinf(self) -> float:
        return self.value

    def cdf(self, x):
        out = np.where(np.asarray(x, dtype=float) >= self.value, 1.0, 0.0)
        return out.item() if out.ndim == 0 else out

    def inverse_cdf(self, u):
        u = np.asarray(u, dtype=float)
        return np.full(u.shape, self.value) if u.ndim else self.value

    def percentile(self, alpha: float) -> float:
        _check_alpha(alpha)
        return self.value

    def partial_expectation(self, tau: float) -> float:
        return max(self.value - tau, 0.0)

    def scaled(self, factor: float) -> "PointMass":
        return PointMass(self.value * factor)


@dataclass(frozen=True)
class Empirical(RewardDistribution):
    """Uniform law over a sorted, nonempty list of observations."""

    values: tuple[float, ...]
    kind = "empirical"
    continuous = False
    _arr: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidDistribution("empirical sample must be a nonempty list")
        if not np.all(np.isfinite(arr)):
            raise InvalidDistribution("empirical sample contains non-finite values")
        if np.any(np.diff(arr) < 0):
            raise InvalidDistribution("empirical sample must be sorted ascending")
        object.__setattr__(self, "_arr", arr)

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "Empirical":
        return cls(tuple(sorted(float(s) for s in samples)))

    @property
    def mean(self) -> float:
        return math.fsum(self.values) / len(self.values)

    @property
    def essinf(self) -> float:
        return self.values[0]

    def cdf(self, x):
        out = np.searchsorted(self._arr, np.asarray(x, dtype=float), side="right") / self._arr.size
        return out.item() if np.ndim(out) == 0 else out

    def inverse_cdf(self, u):
        n = self._arr.size
        idx = np.minimum((np.asarray(u, dtype=float) * n).astype(np.int64), n - 1)
        out = self._arr[idx]
        return out.item() if np.ndim(out) == 0 else out

    def percentile(self, alpha: float) -> float:
        _check_alpha(alpha)
        n = len(self.values)
        # lower order statistic at ceil(alpha * n); the guard absorbs float noise in alpha * n
        k = max(1, math.ceil(alpha * n - 1e-9))
        return self.values[k - 1]

    def partial_expectation(self, tau: float) -> float:
        return float(np.maximum(self._arr - tau, 0.0).sum()) / self._arr.size

    def scaled(self, factor: float) -> "Empirical":
        return Empirical(tuple(v * factor for v in self.values))


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def partial_expectation(d: RewardDistribution, tau: float) -> float:
    """E[(v - tau)+] for v ~ d, in closed form."""
    return d.partial_expectation(tau)


def percentile(d: RewardDistribution, alpha: float) -> float:
    """inf{x : cdf(x) >= alpha}."""
    return d.percentile(alpha)


def sample(d: RewardDistribution, rng: np.random.Generator) -> float:
    return d.sample(rng)


def _upper_limit(d: RewardDistribution, cost: float) -> float:
    spread = d.mean - d.essinf
    tail = TAIL_MASS
    if spread > 0:
        # very small costs push tau past the 1 - 1e-7 quantile; keep the truncated mass negligible
        tail = min(TAIL_MASS, 1e-4 * cost / spread)
    return d.percentile(1.0 - tail)


def riemann_partial_expectation(
    d: RewardDistribution, tau: float, intervals: int = DEFAULT_INTERVALS, upper: float | None = None
) -> float:
    """Midpoint Riemann approximation of the integral of (x - tau) f(x) over [max(tau, essinf), upper]."""
    if upper is None:
        upper = d.percentile(1.0 - TAIL_MASS)
    lo = max(tau, d.essinf)
    if upper <= lo:
        return 0.0
    h = (upper - lo) / intervals
    mids = lo + h * (np.arange(intervals) + 0.5)
    return float(np.sum((mids - tau) * d.pdf(mids)) * h)


@dataclass(frozen=True)
class FairCapResult:
    tau: float
    method: str
    intervals_used: int
    residual: float


@dataclass(frozen=True)
class FairCapProblem:
    distribution: RewardDistribution
    cost: float

    def __post_init__(self):
        if not (math.isfinite(self.cost) and self.cost > 0):
            raise ValueError(f"cost must be positive and finite, got {self.cost}")

    def solve(self, **kwargs) -> FairCapResult:
        return fair_cap(self.distribution, self.cost, **kwargs)


def fair_cap(
    d: RewardDistribution,
    cost: float,
    *,
    method: str = "auto",
    intervals: int = DEFAULT_INTERVALS,
) -> FairCapResult:
    """Solve E[(v - tau)+] = cost for tau.

    ``method="auto"`` uses the closed form for exponential, point-mass and
    empirical laws and the Riemann/bisection solver otherwise.  Pass
    ``method="riemann"`` to force the numeric path on a continuous law.

    Raises NoFiniteSolution when cost exceeds mean - essinf, i.e. when not
    even one draw pays for itself.  A point mass is exempt: its fair cap is
    v - cost by definition.
    """
    FairCapProblem(d, cost)
    if method not in ("auto", "analytic", "riemann"):
        raise ValueError(f"unknown method {method!r}")

    if isinstance(d, PointMass):
        if method == "riemann":
            raise ValueError("a point mass has no density to integrate")
        return FairCapResult(d.value - cost, "analytic", 0, 0.0)

    spread = d.mean - d.essinf
    if cost > spread * (1 + 1e-12):
        raise NoFiniteSolution(
            f"cost {cost} exceeds mean minus essential infimum ({spread}); no draw is profitable"
        )

    if method == "auto":
        method = "analytic" if isinstance(d, (Exponential, Empirical)) else "riemann"

    if method == "analytic":
        if isinstance(d, Exponential):
            tau = math.log(1.0 / (d.rate * cost)) / d.rate
        elif isinstance(d, Empirical):
            tau = _empirical_fair_cap(d._arr, cost)
        else:
            raise ValueError(f"no closed form for {d.kind}")
        return FairCapResult(tau, "analytic", 0, abs(d.partial_expectation(tau) - cost))

    if not d.continuous:
        raise ValueError(f"riemann solver needs a density; {d.kind} has none")
    tau = _bisect_riemann(d, cost, intervals)
    return FairCapResult(tau, "riemann", intervals, abs(d.partial_expectation(tau) - cost))


def _empirical_fair_cap(xs: np.ndarray, cost: float) -> float:
    n = xs.size
    suffix = np.concatenate([np.cumsum(xs[::-1])[::-1], [0.0]])
    counts = n - np.arange(n + 1)
    # value of E[(v - x_j)+] at every support point; nonincreasing in j
    at_nodes = (suffix[1:] - counts[1:] * xs) / n
    hits = np.nonzero(at_nodes >= cost)[0]
    if hits.size == 0:
        return float(suffix[0] / n - cost)
    j = int(hits[-1])
    return float((suffix[j + 1] - n * cost) / counts[j + 1])


def _bisect_riemann(d: RewardDistribution, cost: float, intervals: int) -> float:
    upper = _upper_limit(d, cost)
    lo, hi = d.essinf, upper
    mid = 0.5 * (lo + hi)
    for _ in range(_BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        value = riemann_partial_expectation(d, mid, intervals, upper)
        if abs(value - cost) / cost <= _BISECT_REL_RESIDUAL:
            break
        if value > cost:
            lo = mid
        else:
            hi = mid
        if hi - lo <= _BISECT_REL_WIDTH * (1.0 + abs(mid)):
            break
    return mid
