"""Trace ingestion, deterministic orderings and the experiment drivers."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .adaptive import UtilityConfig, acceptance_rate_array, run_adaptive, run_target_ar
from .confidence import ConfidenceParams, admissible_rate, regret_bound_series
from .distributions import Empirical, Exponential, fair_cap
from .policies import RewardStream, run_ucb_pandora, run_weitzman

SCHEMA = "pandora-bon/report/v1"
TRACE_SCHEMA = "pandora-bon/traces/v1"

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


# ---- seeding -------------------------------------------------------------

def splitmix64(x: int) -> int:
    """The SplitMix64 finaliser applied to x + golden-ratio increment."""
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def hash64(*parts: int | str) -> int:
    """Fold integers and strings into a 64-bit seed.

    Integers are absorbed as h = splitmix64(h ^ (x mod 2**64)); a string is
    absorbed as its UTF-8 byte length followed by each byte.  The fold
    starts from h = 0.
    """
    h = 0
    for part in parts:
        if isinstance(part, str):
            data = part.encode("utf-8")
            h = splitmix64(h ^ len(data))
            for b in data:
                h = splitmix64(h ^ b)
        else:
            h = splitmix64(h ^ (int(part) & _MASK64))
    return h


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


def permutation(n: int, seed: int) -> list[int]:
    """Fisher-Yates from the top: for i = n-1..1 swap i with next_u64() mod (i+1)."""
    idx = list(range(n))
    gen = SplitMix64(seed)
    for i in range(n - 1, 0, -1):
        j = gen.next_u64() % (i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    return idx


# ---- traces --------------------------------------------------------------

class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RewardTrace:
    prompt_id: str
    rewards: tuple[float, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.rewards:
            raise TraceFormatError(f"trace {self.prompt_id!r} has no rewards")
        if not all(math.isfinite(r) for r in self.rewards):
            raise TraceFormatError(f"trace {self.prompt_id!r} has non-finite rewards")

    @property
    def group(self) -> str:
        if "generator" in self.meta:
            return str(self.meta["generator"])
        keys = [self.meta[k] for k in ("dataset", "llm", "reward_model") if k in self.meta]
        return "/".join(str(k) for k in keys) if keys else "all"

    def to_json(self) -> str:
        obj: dict[str, Any] = {"prompt_id": self.prompt_id, "rewards": list(self.rewards)}
        if self.meta:
            obj["meta"] = dict(sorted(self.meta.items()))
        return json.dumps(obj, ensure_ascii=False)


def load_traces(path: str | Path) -> list[RewardTrace]:
    """Parse a JSON Lines trace file; blank lines are skipped."""
    traces = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise TypeError("expected a JSON object")
                prompt_id = obj["prompt_id"]
                if not isinstance(prompt_id, str):
                    raise TypeError("prompt_id must be a string")
                rewards = obj["rewards"]
                if not isinstance(rewards, list):
                    raise TypeError("rewards must be a list")
                values = tuple(float(r) for r in rewards)
                meta = obj.get("meta") or {}
                if not isinstance(meta, dict):
                    raise TypeError("meta must be an object")
                traces.append(RewardTrace(prompt_id, values, {str(k): str(v) for k, v in meta.items()}))
            except TraceFormatError as exc:
                raise TraceFormatError(f"line {lineno}: {exc}") from None
            except (ValueError, KeyError, TypeError) as exc:
                raise TraceFormatError(f"line {lineno}: {type(exc).__name__}: {exc}") from None
    return traces


def write_traces(path: str | Path, traces: Iterable[RewardTrace]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for trace in traces:
            fh.write(trace.to_json() + "\n")


def permute(trace: RewardTrace, ordering_index: int, base_seed: int) -> RewardTrace:
    if ordering_index < 0:
        raise ValueError("ordering_index must be >= 0")
    idx = permutation(len(trace.rewards), hash64(base_seed, trace.prompt_id, ordering_index))
    return RewardTrace(trace.prompt_id, tuple(trace.rewards[i] for i in idx), trace.meta)


def ground_truth_kappa(trace: RewardTrace, alpha: float) -> float:
    return Empirical.from_samples(trace.rewards).percentile(alpha)


def reward_scale_summary(traces: Sequence[RewardTrace]) -> list[tuple[str, float]]:
    if not traces:
        raise ValueError("no traces")
    return [(t.prompt_id, statistics.median(t.rewards)) for t in traces]


# ---- fixture -------------------------------------------------------------

def parse_layout(layout: str) -> tuple[int, int, int, int, int]:
    """'DxLxRxPxN' = datasets x llms x reward models x prompts x rewards per trace."""
    parts = layout.lower().split("x")
    if len(parts) != 5:
        raise ValueError(f"layout must have five 'x'-separated counts, got {layout!r}")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise ValueError(f"layout counts must be integers, got {layout!r}") from None
    if any(d < 1 for d in dims):
        raise ValueError(f"layout counts must be positive, got {layout!r}")
    return dims  # type: ignore[return-value]


# Fixture law: r = a + log(theta + E), E ~ Exp(1), so e^r = e^a (theta + E) is an
# exact shifted exponential.  Per prompt, a ~ U[0.5, 4] sets the reward scale and
# theta ~ log-U[0.05, 2] sets how heavy the tail is relative to the median.
FIXTURE_LOCATION = (0.5, 4.0)
FIXTURE_SHIFT = (0.05, 2.0)


def fixture_law(seed: int, prompt_id: str) -> tuple[float, float]:
    """Per-prompt (location a, relative shift theta) of the fixture reward law."""
    rng = np.random.default_rng(hash64(seed, "law", prompt_id))
    location = float(rng.uniform(*FIXTURE_LOCATION))
    theta = math.exp(rng.uniform(math.log(FIXTURE_SHIFT[0]), math.log(FIXTURE_SHIFT[1])))
    return location, theta


def fixture_rewards(location: float, theta: float, n: int, rng: np.random.Generator) -> np.ndarray:
    return location + np.log(theta + rng.standard_exponential(n))


def generate_fixture(layout: str, seed: int) -> list[RewardTrace]:
    n_data, n_llm, n_rm, n_prompt, length = parse_layout(layout)
    traces = []
    for d in range(n_data):
        for m in range(n_llm):
            for r in range(n_rm):
                for p in range(n_prompt):
                    pid = f"d{d}-m{m}-r{r}-p{p}"
                    loc, theta = fixture_law(seed, pid)
                    rng = np.random.default_rng(hash64(seed, "rewards", pid))
                    rewards = fixture_rewards(loc, theta, length, rng)
                    meta = {"dataset": f"d{d}", "llm": f"m{m}", "reward_model": f"r{r}", "prompt": f"p{p}"}
                    traces.append(RewardTrace(pid, tuple(float(x) for x in rewards), meta))
    return traces


# ---- config & report -----------------------------------------------------

EXPERIMENTS = ("profit", "winrate", "saveratio", "regret")

DEFAULT_GRIDS = {
    "profit": (0.002, 0.001, 0.0004, 0.0002),
    "winrate": tuple(float(x) for x in np.logspace(-5, -3, 9)),
    "saveratio": (0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 1.00),
    "regret": (0.25, 0.5, 1.0, 2.0, 4.0),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    grid: tuple[float, ...] = ()
    orderings: int = 100
    base_seed: int = 0
    B: float = 1.0
    alpha: float = 0.99
    min_samples: int = 8
    delta: float = 0.1
    cap: int | None = None
    intervals: int = 5000
    replicas: int = 10000
    cost_scale: float = math.exp(-1.0)
    n_max: int = 100000
    jobs: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: must be one of {EXPERIMENTS}, got {self.experiment!r}")
        grid = tuple(float(g) for g in self.grid) or DEFAULT_GRIDS[self.experiment]
        object.__setattr__(self, "grid", grid)
        if self.orderings < 1:
            raise ConfigError("orderings: must be >= 1")
        if self.replicas < 2:
            raise ConfigError("replicas: must be >= 2")
        if self.cap is not None and self.cap < 1:
            raise ConfigError("cap: must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs: must be >= 1")
        if self.experiment in ("profit", "winrate") and not all(0 <= g <= self.B for g in grid):
            raise ConfigError("grid: costs must lie in [0, B]")
        if self.experiment == "saveratio" and not all(0 <= g <= 1 for g in grid):
            raise ConfigError("grid: targets must lie in [0, 1]")
        if self.experiment == "regret":
            for lam in grid:
                if not admissible_rate(lam, self.cost_scale / lam):
                    raise ConfigError(f"grid: rate {lam} inadmissible for cost_scale {self.cost_scale}")
        try:
            self.utility(self.grid[0] if self.experiment in ("profit", "winrate") else 0.0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown config key")
        kwargs = dict(data)
        if "grid" in kwargs:
            grid = kwargs["grid"]
            if isinstance(grid, str):
                grid = [g for g in grid.replace(",", " ").split()]
            try:
                kwargs["grid"] = tuple(float(g) for g in grid)
            except ValueError:
                raise ConfigError(f"grid: not a list of numbers: {grid!r}") from None
            if not kwargs["grid"]:
                raise ConfigError("grid: must be nonempty")
        for name, typ in (("orderings", int), ("base_seed", int), ("min_samples", int), ("intervals", int),
                          ("replicas", int), ("n_max", int), ("jobs", int), ("B", float), ("alpha", float),
                          ("delta", float), ("cost_scale", float)):
            if name in kwargs:
                try:
                    kwargs[name] = typ(kwargs[name])
                except (TypeError, ValueError):
                    raise ConfigError(f"{name}: expected {typ.__name__}, got {kwargs[name]!r}") from None
        if "cap" in kwargs:
            cap = kwargs["cap"]
            kwargs["cap"] = None if cap in (None, "", "none", "None") else int(cap)
        return cls(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["grid"] = list(self.grid)
        del d["jobs"]  # results do not depend on the worker count
        return d

    def utility(self, cost: float) -> UtilityConfig:
        return UtilityConfig(cost=cost, B=self.B, alpha=self.alpha, min_samples=self.min_samples,
                             delta=self.delta, intervals=self.intervals)


COLUMNS = {
    "profit": ["prompt_id", "group", "cost", "n_bar", "cap_rate", "adaptive_profit", "best_fixed_n",
               "best_fixed_profit", "profit_ratio", "degenerate"],
    "winrate": ["prompt_id", "group", "cost", "n_bar", "fixed_n", "wins", "ties", "losses", "win_rate",
                "adaptive_mean_max", "fixed_mean_max"],
    "saveratio": ["prompt_id", "group", "target", "n_bar", "cap_rate", "achieved_ar", "n_star",
                  "save_ratio", "unattainable"],
    "regret": ["lambda", "cost", "tau", "gap", "se", "bound", "bound_truncated", "gap_x_lambda",
               "weitzman_mean_t", "ucb_mean_t"],
}


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    rows: list[dict]
    summary: dict

    @property
    def columns(self) -> list[str]:
        return COLUMNS[self.experiment]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in self.columns])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"schema": SCHEMA, "version": f"v{__version__}", "experiment": self.experiment,
               "config": self.config, "summary": self.summary}
        return json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n"

    def write(self, output_dir: str | Path) -> tuple[Path, Path]:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.experiment}.csv"
        json_path = out / f"{self.experiment}.json"
        csv_path.write_text(self.to_csv(), encoding="utf-8")
        json_path.write_text(self.to_json(), encoding="utf-8")
        return csv_path, json_path


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _median(values: Sequence[float]) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return statistics.median(vals) if vals else math.nan


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


# ---- per-trace machinery -------------------------------------------------

def _orderings(trace: RewardTrace, cfg: ExperimentConfig) -> tuple[np.ndarray, int]:
    cap = min(cfg.cap or len(trace.rewards), len(trace.rewards))
    rows = [permute(trace, o, cfg.base_seed).rewards[:cap] for o in range(cfg.orderings)]
    return np.asarray(rows, dtype=float), cap


def _dyadic(cap: int) -> list[int]:
    grid, n = [], 1
    while n < cap:
        grid.append(n)
        n *= 2
    grid.append(cap)
    return grid


def _profit_trace(trace: RewardTrace, cfg: ExperimentConfig):
    perms, cap = _orderings(trace, cfg)
    prefix = np.maximum.accumulate(perms, axis=1)
    kappa = ground_truth_kappa(trace, cfg.alpha)
    ar = acceptance_rate_array(prefix, kappa)
    grid_n = _dyadic(cap)
    rows, curves = [], []
    for cost in cfg.grid:
        ucfg = cfg.utility(cost)
        ts, profits, capped = [], [], 0
        for o in range(cfg.orderings):
            out = run_adaptive(RewardStream.from_trace(perms[o], cap=cap), ucfg)
            t = out.stopping_time
            ts.append(t)
            capped += out.stopped_by_cap
            profits.append(cfg.B * ar[o, t - 1] - cost * t)
        fixed = [float(cfg.B * ar[:, n - 1].mean() - cost * n) for n in grid_n]
        best = int(np.argmax(fixed))
        adaptive = float(np.mean(profits))
        degenerate = fixed[best] <= 0
        rows.append({
            "prompt_id": trace.prompt_id, "group": trace.group, "cost": cost,
            "n_bar": float(np.mean(ts)), "cap_rate": capped / cfg.orderings,
            "adaptive_profit": adaptive, "best_fixed_n": grid_n[best],
            "best_fixed_profit": fixed[best],
            "profit_ratio": math.nan if degenerate else adaptive / fixed[best],
            "degenerate": degenerate,
        })
        curves.append(fixed)
    return rows, curves


def _winrate_trace(trace: RewardTrace, cfg: ExperimentConfig):
    perms, cap = _orderings(trace, cfg)
    prefix = np.maximum.accumulate(perms, axis=1)
    rows = []
    for cost in cfg.grid:
        ucfg = cfg.utility(cost)
        ts, maxes = [], []
        for o in range(cfg.orderings):
            out = run_adaptive(RewardStream.from_trace(perms[o], cap=cap), ucfg)
            ts.append(out.stopping_time)
            maxes.append(out.max_reward)
        n_bar = float(np.mean(ts))
        n_fixed = min(cap, max(1, round(n_bar)))  # round half to even
        fixed_max = prefix[:, n_fixed - 1]
        # budgets agree on average: |sum T - orderings * N| <= orderings / 2
        assert abs(sum(ts) - cfg.orderings * n_fixed) <= cfg.orderings / 2 + 1e-9
        a = np.asarray(maxes)
        wins, ties = int(np.sum(a > fixed_max)), int(np.sum(a == fixed_max))
        losses = cfg.orderings - wins - ties
        rows.append({
            "prompt_id": trace.prompt_id, "group": trace.group, "cost": cost, "n_bar": n_bar,
            "fixed_n": n_fixed, "wins": wins, "ties": ties, "losses": losses,
            "win_rate": (wins + 0.5 * ties) / cfg.orderings,
            "adaptive_mean_max": float(a.mean()), "fixed_mean_max": float(fixed_max.mean()),
        })
    return rows


def _saveratio_trace(trace: RewardTrace, cfg: ExperimentConfig):
    perms, cap = _orderings(trace, cfg)
    prefix = np.maximum.accumulate(perms, axis=1)
    kappa = ground_truth_kappa(trace, cfg.alpha)
    ar = acceptance_rate_array(prefix, kappa)
    curve = ar.mean(axis=0)
    ucfg = cfg.utility(0.0)
    rows = []
    for target in cfg.grid:
        ts, capped = [], 0
        for o in range(cfg.orderings):
            out = run_target_ar(RewardStream.from_trace(perms[o], cap=cap), ucfg, target)
            ts.append(out.stopping_time)
            capped += out.stopped_by_cap
        t_idx = np.asarray(ts) - 1
        achieved = float(ar[np.arange(cfg.orderings), t_idx].mean())
        n_bar = float(np.mean(ts))
        hits = np.flatnonzero(curve >= achieved)
        if hits.size:
            n_star = int(hits[0]) + 1
            save = (n_star - n_bar) / n_star
        else:
            n_star, save = -1, math.nan
        rows.append({
            "prompt_id": trace.prompt_id, "group": trace.group, "target": target, "n_bar": n_bar,
            "cap_rate": capped / cfg.orderings, "achieved_ar": achieved, "n_star": n_star,
            "save_ratio": save, "unattainable": not hits.size,
        })
    return rows


# ---- experiments ---------------------------------------------------------

def _require(cfg: ExperimentConfig, name: str) -> None:
    if cfg.experiment != name:
        raise ConfigError(f"experiment: expected {name!r}, got {cfg.experiment!r}")


def run_profit_experiment(traces: Sequence[RewardTrace], cfg: ExperimentConfig) -> ExperimentReport:
    _require(cfg, "profit")
    results = _map(partial(_profit_trace, cfg=cfg), list(traces), cfg.jobs)
    rows = [r for res, _ in results for r in res]
    summary: dict[str, Any] = {"per_cost": []}
    groups: dict[str, list[int]] = {}
    for i, t in enumerate(traces):
        groups.setdefault(t.group, []).append(i)
    for k, cost in enumerate(cfg.grid):
        cost_rows = [res[k] for res, _ in results]
        group_ratios = {}
        for g, members in groups.items():
            adaptive = float(np.mean([cost_rows[i]["adaptive_profit"] for i in members]))
            curve = np.mean([results[i][1][k] for i in members], axis=0)
            best = float(curve.max())
            group_ratios[g] = math.nan if best <= 0 else adaptive / best
        summary["per_cost"].append({
            "cost": cost,
            "median_group_profit_ratio": _median(list(group_ratios.values())),
            "median_prompt_profit_ratio": _median([r["profit_ratio"] for r in cost_rows]),
            "median_n_bar": _median([r["n_bar"] for r in cost_rows]),
            "degenerate": all(r["degenerate"] for r in cost_rows),
            "group_profit_ratios": dict(sorted(group_ratios.items())),
        })
    return ExperimentReport("profit", cfg.to_dict(), rows, summary)


def run_winrate_experiment(traces: Sequence[RewardTrace], cfg: ExperimentConfig) -> ExperimentReport:
    _require(cfg, "winrate")
    results = _map(partial(_winrate_trace, cfg=cfg), list(traces), cfg.jobs)
    rows = [r for res in results for r in res]
    summary = {"per_cost": [
        {"cost": cost,
         "median_win_rate": _median([res[k]["win_rate"] for res in results]),
         "median_n_bar": _median([res[k]["n_bar"] for res in results])}
        for k, cost in enumerate(cfg.grid)
    ]}
    return ExperimentReport("winrate", cfg.to_dict(), rows, summary)


def run_saveratio_experiment(traces: Sequence[RewardTrace], cfg: ExperimentConfig) -> ExperimentReport:
    _require(cfg, "saveratio")
    results = _map(partial(_saveratio_trace, cfg=cfg), list(traces), cfg.jobs)
    rows = [r for res in results for r in res]
    summary = {"per_target": [
        {"target": target,
         "median_save_ratio": _median([res[k]["save_ratio"] for res in results]),
         "median_achieved_ar": _median([res[k]["achieved_ar"] for res in results]),
         "median_n_bar": _median([res[k]["n_bar"] for res in results]),
         "unattainable": sum(res[k]["unattainable"] for res in results)}
        for k, target in enumerate(cfg.grid)
    ]}
    return ExperimentReport("saveratio", cfg.to_dict(), rows, summary)


def _regret_point(args) -> dict:
    index, lam, cfg = args
    cost = cfg.cost_scale / lam
    tau = fair_cap(Exponential(lam), cost).tau
    params = ConfidenceParams(cfg.delta, cost)
    d = Exponential(lam)
    cap = cfg.cap or 10**7
    diffs, tw, tu = [], [], []
    for rep in range(cfg.replicas):
        seed = hash64(cfg.base_seed, "regret", index, rep)
        w = run_weitzman(RewardStream.from_distribution(d, seed, cap=cap), tau, cost)
        u = run_ucb_pandora(RewardStream.from_distribution(d, seed, cap=cap), params)
        diffs.append(w.payoff - u.payoff)
        tw.append(w.stopping_time)
        tu.append(u.stopping_time)
    diffs_arr = np.asarray(diffs)
    gap = float(diffs_arr.mean())
    se = float(diffs_arr.std(ddof=1) / math.sqrt(cfg.replicas))
    bound = regret_bound_series(lam, cost, cfg.delta, cfg.n_max)
    return {"lambda": lam, "cost": cost, "tau": tau, "gap": gap, "se": se, "bound": bound.value,
            "bound_truncated": bound.truncated, "gap_x_lambda": gap * lam,
            "weitzman_mean_t": float(np.mean(tw)), "ucb_mean_t": float(np.mean(tu))}


def loglog_slope(x: Sequence[float], y: Sequence[float], level: float = 0.95) -> dict:
    """OLS slope of log y on log x with a two-sided t confidence interval."""
    from scipy import stats

    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    res = stats.linregress(lx, ly)
    dof = len(lx) - 2
    half = float(stats.t.ppf(0.5 + level / 2, dof) * res.stderr) if dof > 0 else math.inf
    return {"slope": float(res.slope), "stderr": float(res.stderr),
            "ci_low": float(res.slope - half), "ci_high": float(res.slope + half)}


def run_regret_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    _require(cfg, "regret")
    items = [(i, lam, cfg) for i, lam in enumerate(cfg.grid)]
    rows = _map(_regret_point, items, cfg.jobs)
    summary: dict[str, Any] = {
        "all_within_bound": all(r["gap"] <= r["bound"] + 2 * r["se"] for r in rows),
    }
    positive = [r for r in rows if r["gap_x_lambda"] > 0]
    if len(positive) >= 3:
        summary["gap_x_lambda_trend"] = loglog_slope([r["lambda"] for r in positive],
                                                     [r["gap_x_lambda"] for r in positive])
    return ExperimentReport("regret", cfg.to_dict(), rows, summary)


def run_experiment(cfg: ExperimentConfig, traces: Sequence[RewardTrace] | None = None) -> ExperimentReport:
    if cfg.experiment == "regret":
        return run_regret_experiment(cfg)
    if not traces:
        raise ConfigError("traces: experiment needs a nonempty trace file")
    runner = {"profit": run_profit_experiment, "winrate": run_winrate_experiment,
              "saveratio": run_saveratio_experiment}[cfg.experiment]
    return runner(traces, cfg)
