"""Stopping policies over i.i.d. reward streams."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .confidence import ConfidenceParams, ConfidenceState, update
from .distributions import RewardDistribution

_BLOCK = 64


class StreamExhausted(RuntimeError):
    """A finite trace ran out before the policy stopped."""


class RewardStream:
    """An i.i.d. reward source: a seeded distribution or a replayed trace.

    ``cap`` bounds the number of draws a policy may take; policies check
    ``at_cap`` before drawing and report cap-stopping instead of raising.
    Generator-backed streams pull uniforms in fixed blocks, so a seed
    always maps to the same reward sequence.
    """

    def __init__(self, *, distribution=None, rng=None, trace=None, cap=None):
        if (distribution is None) == (trace is None):
            raise ValueError("give exactly one of distribution or trace")
        if cap is not None and cap < 1:
            raise ValueError(f"cap must be >= 1, got {cap}")
        self.distribution = distribution
        self.rng = rng
        self.trace = None if trace is None else np.asarray(trace, dtype=float)
        self.cap = cap
        self.position = 0
        self._buffer = np.empty(0)
        self._buffer_pos = 0

    @classmethod
    def from_distribution(cls, d: RewardDistribution, seed, cap: int | None = None) -> "RewardStream":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return cls(distribution=d, rng=rng, cap=cap)

    @classmethod
    def from_trace(cls, rewards: Sequence[float], cap: int | None = None) -> "RewardStream":
        return cls(trace=rewards, cap=cap)

    @property
    def at_cap(self) -> bool:
        return self.cap is not None and self.position >= self.cap

    @property
    def exhausted(self) -> bool:
        return self.trace is not None and self.position >= self.trace.size

    def draw(self) -> float:
        if self.at_cap:
            raise StreamExhausted(f"cap of {self.cap} draws reached")
        if self.trace is not None:
            if self.position >= self.trace.size:
                raise StreamExhausted(f"trace of length {self.trace.size} exhausted")
            v = float(self.trace[self.position])
        else:
            if self._buffer_pos >= self._buffer.size:
                self._buffer = self.distribution.draw(self.rng, _BLOCK)
                self._buffer_pos = 0
            v = float(self._buffer[self._buffer_pos])
            self._buffer_pos += 1
        self.position += 1
        return v


@dataclass(frozen=True)
class PolicyOutcome:
    stopping_time: int
    max_reward: float
    payoff: float
    stopped_by_cap: bool = False


def _finish(t: int, m: float, cost: float, capped: bool) -> PolicyOutcome:
    if t == 0:
        raise ValueError("policy stopped before drawing anything")
    return PolicyOutcome(t, m, m - cost * t, capped)


def run_weitzman(stream: RewardStream, tau: float, cost: float) -> PolicyOutcome:
    """Draw until the running max reaches the fair cap tau (ties stop)."""
    if not math.isfinite(tau):
        raise ValueError(f"tau must be finite, got {tau}")
    t, m = 0, -math.inf
    while True:
        if stream.at_cap:
            return _finish(t, m, cost, True)
        m = max(m, stream.draw())
        t += 1
        if m >= tau:
            return _finish(t, m, cost, False)


def run_ucb_pandora(stream: RewardStream, params: ConfidenceParams) -> PolicyOutcome:
    """UCB Pandora's Box for exponential-family rewards.

    The fair-cap bound starts uninformative (+inf) and is refreshed after
    every draw; the policy stops at the first n with max v_i >= tau_plus(n).
    """
    state = ConfidenceState()
    m = -math.inf
    while m < state.faircap_ucb:
        if stream.at_cap:
            return _finish(state.n, m, params.cost, True)
        v = stream.draw()
        m = max(m, v)
        state = update(state, v, params)
    return _finish(state.n, m, params.cost, False)


def run_fixed_n(stream: RewardStream, n: int, cost: float) -> PolicyOutcome:
    """Best-of-n: draw n rewards (fewer if the cap binds) and keep the max."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    t, m = 0, -math.inf
    while t < n:
        if stream.at_cap:
            return _finish(t, m, cost, True)
        m = max(m, stream.draw())
        t += 1
    return _finish(t, m, cost, False)
