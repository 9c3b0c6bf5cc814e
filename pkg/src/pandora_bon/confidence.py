"""Anytime-valid confidence sequences for exponential rewards.

The mean bound is mu_hat * (1 -/+ r(n)) with

    r(n) = min(1/2, sqrt((6/n) * log(2 n (n+1) / delta)))

and the fair-cap upper bound pushes the upper mean bound through
mu -> mu * log(mu / c), the exponential fair cap written in terms of the mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Returned when mu_ucb <= cost: the log term is nonpositive and would stop
# the UCB policy on its first draw.  Also serves as the initial bound.
UNINFORMATIVE = math.inf


@dataclass(frozen=True)
class ConfidenceParams:
    delta: float
    cost: float

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not (math.isfinite(self.cost) and self.cost > 0):
            raise ValueError(f"cost must be positive, got {self.cost}")


def radius(n, delta: float):
    """r(n); accepts an int or an integer array."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    n_arr = np.asarray(n, dtype=float)
    if np.any(n_arr < 1):
        raise ValueError("n must be >= 1")
    r = np.minimum(0.5, np.sqrt(6.0 / n_arr * np.log(2.0 * n_arr * (n_arr + 1.0) / delta)))
    return float(r) if r.ndim == 0 else r


def width(n, delta: float, tau: float):
    """sigma(n) = 16 * tau * r(n)."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    return 16.0 * tau * radius(n, delta)


def faircap_ucb(mu_hat, r, cost: float):
    """mu_hat (1 + r) log(mu_hat (1 + r) / c), or +inf where that is not informative."""
    upper = np.asarray(mu_hat, dtype=float) * (1.0 + np.asarray(r, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(upper > cost, upper * np.log(upper / cost), UNINFORMATIVE)
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class ConfidenceState:
    n: int = 0
    total: float = 0.0
    mu_hat: float = 0.0
    r_n: float = 0.5
    mean_lcb: float = 0.0
    mean_ucb: float = math.inf
    faircap_ucb: float = UNINFORMATIVE

    @property
    def informative(self) -> bool:
        return math.isfinite(self.faircap_ucb)

    def update(self, v: float, params: ConfidenceParams) -> "ConfidenceState":
        return update(self, v, params)


def update(state: ConfidenceState, v: float, params: ConfidenceParams) -> ConfidenceState:
    if not v >= 0:
        raise ValueError(f"exponential-family rewards must be nonnegative, got {v}")
    n = state.n + 1
    total = state.total + v
    mu_hat = total / n
    r = radius(n, params.delta)
    return ConfidenceState(
        n=n,
        total=total,
        mu_hat=mu_hat,
        r_n=r,
        mean_lcb=mu_hat * (1.0 - r),
        mean_ucb=mu_hat * (1.0 + r),
        faircap_ucb=faircap_ucb(mu_hat, r, params.cost),
    )


def admissible_rate(lam: float, cost: float) -> bool:
    """True when 0 < lam <= 1/(c e), with a relative slack for the boundary c = 1/(e lam)."""
    return lam > 0 and cost > 0 and lam * cost * math.e <= 1.0 + 1e-12


@dataclass(frozen=True)
class SeriesBound:
    value: float
    n_terms: int
    last_term: float
    truncated: bool


def regret_bound_series(lam: float, cost: float, delta: float, n_max: int) -> SeriesBound:
    """Partial sum of the UCB-vs-Weitzman regret bound for Exponential(lam).

    Sums sigma(n) (1 - F(tau)) (F(tau + sigma(n))^(n-1) - F(tau)^(n-1)) for
    n = 1..n_max with tau = log(1/(lam c))/lam.  ``truncated`` is set when the
    last term still exceeds 1e-9 of the running sum.
    """
    if not admissible_rate(lam, cost):
        raise ValueError(f"rate {lam} outside (0, 1/(c e)] for cost {cost}")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    tau = math.log(1.0 / (lam * cost)) / lam
    n = np.arange(1, n_max + 1, dtype=float)
    sigma = width(n, delta, tau)
    survival = math.exp(-lam * tau)
    log_f_tau = math.log(-math.expm1(-lam * tau))
    log_f_hi = np.log(-np.expm1(-lam * (tau + sigma)))
    terms = sigma * survival * (np.exp((n - 1) * log_f_hi) - np.exp((n - 1) * log_f_tau))
    value = math.fsum(terms)
    last = float(terms[-1])
    return SeriesBound(value, n_max, last, last > 1e-9 * value)
