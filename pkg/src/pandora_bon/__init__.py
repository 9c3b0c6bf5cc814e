"""Pandora's-box stopping rules and adaptive Best-of-N sampling."""

__version__ = "0.1.0"

from .distributions import (  # noqa: E402
    Empirical,
    Exponential,
    FairCapResult,
    NoFiniteSolution,
    PointMass,
    ShiftedExponential,
    Uniform,
    fair_cap,
)
from .confidence import ConfidenceParams, ConfidenceState, regret_bound_series  # noqa: E402
from .policies import PolicyOutcome, RewardStream, StreamExhausted, run_fixed_n, run_ucb_pandora, run_weitzman  # noqa: E402
from .adaptive import (  # noqa: E402
    AdaptiveOutcome,
    StreamingTailStats,
    UtilityConfig,
    acceptance_rate,
    fair_cap_of_utility,
    fit_tail,
    run_adaptive,
    run_target_ar,
)

__all__ = [
    "AdaptiveOutcome", "ConfidenceParams", "ConfidenceState", "Empirical", "Exponential", "FairCapResult",
    "NoFiniteSolution", "PointMass", "PolicyOutcome", "RewardStream", "ShiftedExponential", "StreamExhausted",
    "StreamingTailStats", "Uniform", "UtilityConfig", "acceptance_rate", "fair_cap", "fair_cap_of_utility",
    "fit_tail", "regret_bound_series", "run_adaptive", "run_fixed_n", "run_target_ar", "run_ucb_pandora",
    "run_weitzman",
]
