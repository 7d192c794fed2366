"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 infeasible target or
constraint too tight, 4 I/O error. Diagnostics go to stderr; stdout only
carries machine-readable output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

from . import bench
from .design_space import PRESETS, get_space
from .errors import ConfigurationError, SearchError
from .estimators import brute_force_best, default_latency_model
from .multi_target import MultiTargetPlan, StrategyKind, run_strategy
from .search import evolutionary_search, with_iterations

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4
OUTPUT_ENV = "OFA_MT_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"


def _targets(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _formats(text: str) -> tuple[str, ...]:
    out = tuple(f.strip() for f in text.split(",") if f.strip())
    bad = set(out) - set(bench.ALL_FORMATS)
    if bad:
        raise argparse.ArgumentTypeError(f"unknown formats {sorted(bad)}; choose from {list(bench.ALL_FORMATS)}")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ofa-multitarget", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser, space: bool = True) -> None:
        sp.add_argument("--config", help="experiment config JSON; flags override its values")
        if space:
            sp.add_argument("--space", help="design space preset name")
            sp.add_argument("--latency-seed", type=int, help="seed of the synthesized latency table")

    def search_flags(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--seed", type=int)
        sp.add_argument("--iterations", type=int, help="iterations of a full-budget search")
        sp.add_argument("--population", type=int, help="population size")

    s = sub.add_parser("search", help="one constrained search; prints the outcome as JSON")
    common(s)
    search_flags(s)
    s.add_argument("--target", type=float, help="latency target in ms")
    s.add_argument("--log", help="write the per-iteration log (JSONL) to this file")

    m = sub.add_parser("multi", help="multi-target run; writes JSON and prints a TSV summary")
    common(m)
    search_flags(m)
    m.add_argument("--strategy", help="vanilla, top-down, or bottom-up")
    m.add_argument("--targets", type=_targets, help="comma-separated latency targets in ms")
    m.add_argument("--n-rest", help="iterations after the first target (integer or 'sqrt')")
    m.add_argument("--output-dir", help=f"output directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT_DIR})")
    m.add_argument("--out", help="output file (default: <output-dir>/multi_<strategy>.json)")

    o = sub.add_parser("oracle", help="exhaustive best config for a target (small spaces only)")
    common(o)
    o.add_argument("--target", type=float, required=True)

    b = sub.add_parser("bench", help="run the benchmark pipeline from a config file")
    common(b, space=False)
    b.add_argument("--output-dir", help=f"output directory (default: config, ${OUTPUT_ENV}, or ./{DEFAULT_OUTPUT_DIR})")
    b.add_argument("--repetitions", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--jobs", type=int, help="worker processes (default: logical CPU count)")
    b.add_argument("--format", type=_formats, default=bench.ALL_FORMATS, help="comma-separated: csv,json,jsonl,svg")

    sp = sub.add_parser("spaces", help="list the design space presets")
    sp.add_argument("--format", choices=("text", "json"), default="text")
    return p


def _load_config(args: argparse.Namespace) -> bench.ExperimentConfig:
    cfg = bench.ExperimentConfig.load(args.config) if args.config else bench.ExperimentConfig()
    over: dict = {}
    if getattr(args, "space", None):
        over["space_name"] = args.space
    for flag, name in (("latency_seed", "latency_seed"), ("seed", "seed"), ("repetitions", "repetitions"), ("jobs", "jobs")):
        if getattr(args, flag, None) is not None:
            over[name] = getattr(args, flag)
    if getattr(args, "targets", None):
        over["targets_ms"] = args.targets
    if getattr(args, "iterations", None) is not None:
        over["n_first"] = args.iterations
    if getattr(args, "n_rest", None) is not None:
        over["n_rest"] = args.n_rest if args.n_rest == "sqrt" else _int_flag("--n-rest", args.n_rest)
    if getattr(args, "population", None) is not None:
        over["search"] = replace(cfg.search, population_size=args.population)
    if getattr(args, "strategy", None):
        over["strategies"] = (args.strategy,)
    if getattr(args, "output_dir", None):
        over["output_dir"] = args.output_dir
    try:
        return replace(cfg, **over)
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from exc


def _int_flag(flag: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigurationError(f"{flag} must be an integer or 'sqrt', got {text!r}") from None


def _output_dir(cfg: bench.ExperimentConfig) -> str:
    return cfg.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT_DIR


def _emit_json(data: object) -> None:
    sys.stdout.write(json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_search(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if args.target is not None:
        target = args.target
    elif len(cfg.targets_ms) == 1:
        target = cfg.targets_ms[0]
    else:
        raise ConfigurationError("search needs a single target: pass --target")
    space = get_space(cfg.space_name)
    lat = default_latency_model(space, cfg.latency_seed)
    params = with_iterations(cfg.search, cfg.n_first)
    out = evolutionary_search(space, lat, cfg.accuracy, target, params, rng=cfg.seed, record_log=bool(args.log))
    if args.log:
        out.write_log(args.log)
    _emit_json(out.to_dict() | {"space": space.name})
    return EXIT_OK


def cmd_multi(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if len(cfg.strategies) != 1:
        raise ConfigurationError("multi needs exactly one strategy: pass --strategy")
    kind = StrategyKind.parse(cfg.strategies[0])
    space = get_space(cfg.space_name)
    lat = default_latency_model(space, cfg.latency_seed)
    plan = MultiTargetPlan(cfg.targets_ms, cfg.n_first, cfg.n_rest_value, cfg.search, cfg.seed)
    out = run_strategy(kind, plan, space, lat, cfg.accuracy)
    path = Path(args.out) if args.out else Path(_output_dir(cfg)) / f"multi_{kind.value}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(out.to_dict() | {"space": space.name}, indent=2, sort_keys=True) + "\n")

    rows = [("target_ms", "accuracy", "latency_ms", "evaluations", "rejections", "iterations")]
    for t in out.order_processed:
        o = out.per_target[t]
        rows.append((t, o.best.accuracy, o.best.latency, o.evaluations, o.rejections, o.iterations_run))
    rows.append(("total", "", "", out.total_evaluations, out.total_rejections, out.total_iterations))
    sys.stdout.write("".join("\t".join(str(x) for x in r) + "\n" for r in rows))
    print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    space = get_space(cfg.space_name)
    lat = default_latency_model(space, cfg.latency_seed)
    res = brute_force_best(space, lat, cfg.accuracy, args.target)
    _emit_json(res.to_dict() | {"space": space.name, "target_ms": args.target})
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    if not args.config:
        raise ConfigurationError("bench needs --config")
    cfg = _load_config(args)
    out_dir = _output_dir(cfg)
    report = bench.run_bench(replace(cfg, output_dir=None))
    for path in bench.emit_report(report, out_dir, args.format):
        print(path)
    for cell in report.incomplete:
        print(f"incomplete cell: {cell.sweep} {cell.space} {cell.strategy} {cell.value} "
              f"({cell.failed} failed runs)", file=sys.stderr)
    return EXIT_OK


def cmd_spaces(args: argparse.Namespace) -> int:
    if args.format == "json":
        _emit_json({name: get_space(name).to_dict() for name in PRESETS})
    else:
        sys.stdout.write("".join(name + "\n" for name in PRESETS))
    return EXIT_OK


COMMANDS = {"search": cmd_search, "multi": cmd_multi, "oracle": cmd_oracle, "bench": cmd_bench, "spaces": cmd_spaces}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except SearchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, LookupError) as exc:
        # ConfigurationError, invalid configs and params, oversize enumeration, missing table entries.
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
