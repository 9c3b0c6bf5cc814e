"""Command-line entry point.

Exit codes: 0 ok, 2 bad arguments or config, 3 no finite fair cap,
4 stream exhausted, 5 output could not be written.  Data goes to stdout,
diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import UtilityConfig, run_adaptive, run_target_ar
from .confidence import ConfidenceParams
from .distributions import (
    Empirical,
    Exponential,
    InvalidDistribution,
    NoFiniteSolution,
    PointMass,
    ShiftedExponential,
    Uniform,
    fair_cap,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    TraceFormatError,
    generate_fixture,
    hash64,
    load_traces,
    permute,
    reward_scale_summary,
    run_experiment,
    write_traces,
)
from .policies import RewardStream, StreamExhausted, run_fixed_n, run_ucb_pandora, run_weitzman

EXIT_OK, EXIT_USAGE, EXIT_NO_SOLUTION, EXIT_EXHAUSTED, EXIT_WRITE = 0, 2, 3, 4, 5
OUTPUT_DIR_ENV = "PANDORA_OUTPUT_DIR"
CONFIG_SECTION = "experiment"
POLICIES = ("weitzman", "ucb", "fixed-n", "adaptive", "target-ar")


class UsageError(Exception):
    pass


class OutputError(Exception):
    pass


def parse_distribution(spec: str):
    """'exp:1.0', 'shiftexp:theta,mean', 'uniform:lo,hi', 'point:v' or 'empirical:v1,v2,...'."""
    name, _, args = spec.partition(":")
    try:
        values = [float(a) for a in args.split(",")] if args else []
    except ValueError:
        raise UsageError(f"distribution {spec!r}: parameters must be numbers") from None
    arity = {"exp": 1, "shiftexp": 2, "uniform": 2, "point": 1}
    if name == "empirical":
        if not values:
            raise UsageError(f"distribution {spec!r}: empirical needs at least one value")
        return Empirical.from_samples(values)
    if name not in arity:
        raise UsageError(f"distribution {spec!r}: unknown family {name!r}")
    if len(values) != arity[name]:
        raise UsageError(f"distribution {spec!r}: {name} takes {arity[name]} parameter(s)")
    try:
        return {"exp": Exponential, "shiftexp": ShiftedExponential, "uniform": Uniform,
                "point": PointMass}[name](*values)
    except (InvalidDistribution, ValueError) as exc:
        raise UsageError(f"distribution {spec!r}: {exc}") from None


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


# ---- faircap -------------------------------------------------------------

def cmd_faircap(args) -> int:
    d = parse_distribution(args.distribution)
    res = fair_cap(d, args.cost, method=args.method, intervals=args.intervals)
    _emit({"distribution": args.distribution, "cost": args.cost, "tau": res.tau, "method": res.method,
           "intervals": res.intervals_used, "residual": res.residual, "version": f"v{__version__}"})
    return EXIT_OK


# ---- simulate ------------------------------------------------------------

def _streams(args):
    cap = args.cap
    if args.trace:
        traces = load_traces(args.trace)
        if args.prompt_id is not None:
            traces = [t for t in traces if t.prompt_id == args.prompt_id]
            if not traces:
                raise UsageError(f"prompt-id {args.prompt_id!r} not found in {args.trace}")
        trace = traces[0]
        dist = Empirical.from_samples(trace.rewards)
        for i in range(args.replicas):
            rewards = permute(trace, i, args.seed).rewards if args.permute else trace.rewards
            yield dist, RewardStream.from_trace(rewards, cap=cap)
    else:
        dist = parse_distribution(args.distribution)
        for i in range(args.replicas):
            yield dist, RewardStream.from_distribution(dist, hash64(args.seed, "simulate", i), cap=cap)


def cmd_simulate(args) -> int:
    if bool(args.trace) == bool(args.distribution):
        raise UsageError("simulate needs exactly one of --dist or --trace")
    if args.replicas < 1:
        raise UsageError("replicas: must be >= 1")
    if args.policy == "fixed-n" and args.n is None:
        raise UsageError("fixed-n needs --n")
    if args.policy == "target-ar" and args.target is None:
        raise UsageError("target-ar needs --target")
    try:
        ucfg = UtilityConfig(cost=args.cost, B=args.B, alpha=args.alpha, min_samples=args.min_samples,
                             delta=args.delta, intervals=args.intervals) \
            if args.policy in ("adaptive", "target-ar") else None
        params = ConfidenceParams(args.delta, args.cost) if args.policy == "ucb" else None
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    tau = args.tau
    lines, stops, payoffs, maxes = [], [], [], []
    for i, (dist, stream) in enumerate(_streams(args)):
        if args.policy == "weitzman":
            if tau is None:
                tau = fair_cap(dist, args.cost).tau
            out = run_weitzman(stream, tau, args.cost)
            payoff = out.payoff
        elif args.policy == "ucb":
            out = run_ucb_pandora(stream, params)
            payoff = out.payoff
        elif args.policy == "fixed-n":
            out = run_fixed_n(stream, args.n, args.cost)
            payoff = out.payoff
        elif args.policy == "adaptive":
            out = run_adaptive(stream, ucfg)
            payoff = out.utility_payoff
        else:
            out = run_target_ar(stream, ucfg, args.target)
            payoff = out.utility_payoff
        row = {"replica": i, **vars(out)}
        lines.append(row)
        stops.append(out.stopping_time)
        maxes.append(out.max_reward)
        payoffs.append(payoff)
    for row in lines:
        _emit(row)
    valid = [p for p in payoffs if p is not None]
    _emit({
        "aggregate": True, "policy": args.policy, "replicas": len(lines),
        "mean_stopping_time": float(np.mean(stops)), "mean_max_reward": float(np.mean(maxes)),
        "mean_payoff": float(np.mean(valid)) if valid else None, "tau": tau,
        "config": _echo(args), "version": f"v{__version__}",
    })
    return EXIT_OK


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}


# ---- experiment ----------------------------------------------------------

_FLAG_KEYS = ("experiment", "grid", "orderings", "base_seed", "B", "alpha", "min_samples", "delta", "cap",
              "intervals", "replicas", "cost_scale", "n_max", "jobs")


def load_config_file(path: str) -> dict:
    """Read an INI file's [experiment] section, or the config echo of a JSON report."""
    if path.endswith(".json"):
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise UsageError(f"config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path}: {exc}") from None
        if not isinstance(doc, dict) or not isinstance(doc.get("config"), dict):
            raise UsageError(f"config {path}: no 'config' object")
        return dict(doc["config"])
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case (B)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise UsageError(f"config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise UsageError(f"config {path}: {exc}") from None
    if not parser.has_section(CONFIG_SECTION):
        raise UsageError(f"config {path}: missing [{CONFIG_SECTION}] section")
    return dict(parser.items(CONFIG_SECTION))


def effective_experiment_settings(args) -> tuple[ExperimentConfig, str | None, str]:
    settings = load_config_file(args.config) if args.config else {}
    for key in _FLAG_KEYS + ("traces", "output_dir"):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    traces = settings.pop("traces", None)
    output_dir = settings.pop("output_dir", None) or os.environ.get(OUTPUT_DIR_ENV) or "reports"
    if "experiment" not in settings:
        raise UsageError("experiment: required (flag or config file)")
    if "jobs" not in settings:
        settings["jobs"] = os.cpu_count() or 1
    try:
        cfg = ExperimentConfig.from_mapping(settings)
    except TypeError as exc:
        raise UsageError(str(exc)) from None
    return cfg, traces, output_dir


def cmd_experiment(args) -> int:
    cfg, traces_path, output_dir = effective_experiment_settings(args)
    traces = None
    if cfg.experiment != "regret":
        if not traces_path:
            raise UsageError("traces: required for this experiment")
        traces = load_traces(traces_path)
    report = run_experiment(cfg, traces)
    # the echo deliberately omits the trace path and output dir: reports
    # depend only on the trace contents and the config
    try:
        csv_path, json_path = report.write(output_dir)
    except OSError as exc:
        raise OutputError(f"cannot write reports to {output_dir}: {exc.strerror or exc}") from None
    print(f"wrote {csv_path} and {json_path}", file=sys.stderr)
    sys.stdout.write(report.to_json())
    return EXIT_OK


# ---- fixture & summary ---------------------------------------------------

def cmd_gen_fixture(args) -> int:
    try:
        traces = generate_fixture(args.layout, args.seed)
    except ValueError as exc:
        raise UsageError(f"layout: {exc}") from None
    if args.output == "-":
        for t in traces:
            sys.stdout.write(t.to_json() + "\n")
    else:
        try:
            Path(args.output).parent.mkdir(parents=True, exist_ok=True)
            write_traces(args.output, traces)
        except OSError as exc:
            raise OutputError(f"cannot write {args.output}: {exc.strerror or exc}") from None
        print(f"wrote {len(traces)} traces to {args.output}", file=sys.stderr)
    return EXIT_OK


def cmd_summary(args) -> int:
    rows = reward_scale_summary(load_traces(args.traces))
    sys.stdout.write("prompt_id,median_reward\n")
    for pid, med in rows:
        sys.stdout.write(f"{pid},{med!r}\n")
    return EXIT_OK


# ---- parser --------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _grid(text: str) -> list[str]:
    return [g for g in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pandora-bon", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"pandora-bon {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("faircap", help="solve E[(v - tau)+] = c for a reward law")
    f.add_argument("distribution", help="exp:RATE | shiftexp:THETA,MEAN | uniform:LO,HI | point:V | empirical:V1,V2,...")
    f.add_argument("--cost", type=float, required=True)
    f.add_argument("--method", choices=("auto", "analytic", "riemann"), default="auto")
    f.add_argument("--intervals", type=int, default=5000)
    f.set_defaults(func=cmd_faircap)

    s = sub.add_parser("simulate", help="run a stopping policy on seeded streams or a trace")
    s.add_argument("policy", choices=POLICIES)
    s.add_argument("--dist", dest="distribution")
    s.add_argument("--trace")
    s.add_argument("--prompt-id")
    s.add_argument("--permute", action="store_true", help="replay ordering i of the trace on replica i")
    s.add_argument("--cost", type=float, default=0.001)
    s.add_argument("--tau", type=float, help="weitzman threshold (default: fair cap of the law)")
    s.add_argument("--n", type=int)
    s.add_argument("--target", type=float)
    s.add_argument("--delta", type=float, default=0.1)
    s.add_argument("--alpha", type=float, default=0.99)
    s.add_argument("--B", type=float, default=1.0)
    s.add_argument("--min-samples", type=int, default=8)
    s.add_argument("--intervals", type=int, default=5000)
    s.add_argument("--replicas", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--cap", type=int)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("experiment", help="run profit / winrate / saveratio / regret and write reports")
    e.add_argument("experiment", nargs="?", choices=("profit", "winrate", "saveratio", "regret"))
    e.add_argument("--config", help=f"INI file with a [{CONFIG_SECTION}] section; flags override it")
    e.add_argument("--traces")
    e.add_argument("--grid", type=_grid, help="costs, targets or rates, comma or space separated")
    e.add_argument("--orderings", type=int)
    e.add_argument("--seed", dest="base_seed", type=int)
    e.add_argument("--B", type=float)
    e.add_argument("--alpha", type=float)
    e.add_argument("--min-samples", type=int)
    e.add_argument("--delta", type=float)
    e.add_argument("--cap", type=int)
    e.add_argument("--intervals", type=int)
    e.add_argument("--replicas", type=int)
    e.add_argument("--cost-scale", type=float)
    e.add_argument("--n-max", type=int)
    e.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")
    e.add_argument("--output-dir", help=f"report directory (default: ${OUTPUT_DIR_ENV} or ./reports)")
    e.set_defaults(func=cmd_experiment)

    g = sub.add_parser("gen-fixture", help="write a synthetic JSONL trace file")
    g.add_argument("--layout", default="2x4x2x10x960", help="DATASETSxLLMSxRMSxPROMPTSxREWARDS")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--output", default="-", help="file path, or - for stdout")
    g.set_defaults(func=cmd_gen_fixture)

    m = sub.add_parser("summary", help="per-prompt median reward table")
    m.add_argument("traces")
    m.set_defaults(func=cmd_summary)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoFiniteSolution as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    except StreamExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXHAUSTED
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_WRITE
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
