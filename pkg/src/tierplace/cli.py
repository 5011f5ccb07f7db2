"""``tierplace`` command line: gen, train, simulate, sweep, report.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

from .econ import CostModel, crossover_density, load_cost_model
from .placement import PlacementError, PolicyKind
from .predictor import PredictorError, load_store, save_store, train
from .report import rows_to_csv, scatter_svg, shuffle_rows, summary, summary_to_csv
from .sim import DeviceFleet, SimulationError, compare_policies, comparison_csv, run_simulation
from .trace_model import TraceError, load_trace, save_trace, split_trace
from .workload_gen import ConfigError, density_scatter, generate, load_generator_config

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fixture_names() -> list[str]:
    root = resources.files("tierplace") / "fixtures"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def resolve_input(path: str | os.PathLike, base: Path | None = None) -> Path:
    """Return ``path`` if it exists, else the bundled fixture of the same name.

    A missing path that names no fixture is returned unchanged so the caller's
    open() reports it.
    """
    p = Path(path)
    if base is not None and not p.is_absolute():
        p = base / p
    if p.exists():
        return p
    name = p.name if p.name.endswith(".json") else p.name + ".json"
    if name in fixture_names():
        with resources.as_file(resources.files("tierplace") / "fixtures" / name) as fp:
            return Path(fp)
    return p


def _write_text(path: str | os.PathLike, text: str) -> None:
    p = Path(path)
    if p.parent != Path(""):
        p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _capacity(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if math.isnan(v) or v < 0:
        raise argparse.ArgumentTypeError(f"capacity must be >= 0 or inf, got {text!r}")
    return v


def _policy(name: str) -> PolicyKind:
    try:
        return PolicyKind.parse(name)
    except PlacementError as exc:
        raise UsageError(str(exc)) from None


# --- commands -------------------------------------------------------------------


def cmd_gen(args) -> None:
    config = load_generator_config(resolve_input(args.config))
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    trace = generate(config)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_trace(trace, out)


def cmd_train(args) -> None:
    trace = load_trace(args.trace)
    store = train(trace, min_samples=args.min_samples)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_store(store, out)


def cmd_simulate(args) -> None:
    policy = _policy(args.policy)
    if policy.needs_predictions and args.model is None:
        raise UsageError(f"policy {policy.value} requires --model")
    model = load_cost_model(args.cost_model)
    trace = load_trace(args.trace)
    store = load_store(args.model) if policy.needs_predictions else None
    fleet = DeviceFleet(args.hdd_count, args.ssd_capacity_tb)
    report = run_simulation(trace, policy, fleet, model, store, seed=args.seed)
    if args.format == "csv":
        _write_text(args.out, comparison_csv([report]))
    else:
        _write_text(args.out, report.to_json(with_placements=args.placements))


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    generator_config: Path
    cost_model: CostModel
    fleet: DeviceFleet
    policies: tuple[PolicyKind, ...]
    seeds: tuple[int, ...]
    train_fraction: float
    output_dir: Path


_SPEC_FIELDS = {"generator_config", "cost_model", "hdd_count", "ssd_capacity_tb",
                "policies", "seeds", "train_fraction", "output_dir"}


def load_experiment_spec(path: str | os.PathLike) -> ExperimentSpec:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ValueError("experiment file must be a JSON object")
    unknown = set(obj) - _SPEC_FIELDS
    if unknown:
        raise ValueError(f"experiment file: unknown field(s) {sorted(unknown)}")
    if "generator_config" not in obj:
        raise ValueError("experiment file: generator_config is required")
    base = path.parent
    gen_path = resolve_input(obj["generator_config"], base)
    if not gen_path.exists():
        raise FileNotFoundError(2, "generator config not found", str(gen_path))
    cm = obj.get("cost_model")
    if cm is None:
        cost_model = CostModel()
    elif isinstance(cm, dict):
        cost_model = CostModel.from_dict(cm)
    else:
        cost_model = load_cost_model(resolve_input(cm, base))
    cap = obj.get("ssd_capacity_tb")
    fleet = DeviceFleet(int(obj.get("hdd_count", 1)), math.inf if cap is None else float(cap))
    policies = obj.get("policies", [p.value for p in PolicyKind])
    seeds = obj.get("seeds", [0])
    if not isinstance(seeds, list) or not all(isinstance(s, int) and not isinstance(s, bool)
                                              for s in seeds):
        raise ValueError("experiment file: seeds must be a list of integers")
    frac = float(obj.get("train_fraction", 0.5))
    if not 0.0 <= frac < 1.0:
        raise ValueError("experiment file: train_fraction must be in [0, 1)")
    # output_dir is relative to the working directory, not the experiment file
    return ExperimentSpec(gen_path, cost_model, fleet,
                          tuple(PolicyKind.parse(p) for p in policies), tuple(seeds), frac,
                          Path(obj.get("output_dir", "sweep_out")))


def run_sweep(spec: ExperimentSpec) -> str:
    """Policy x seed grid; returns the merged CSV text."""
    base_config = load_generator_config(spec.generator_config)
    predictive = any(p.needs_predictions for p in spec.policies)
    rows_by_seed = []
    for seed in spec.seeds:
        trace = generate(dataclasses.replace(base_config, seed=seed))
        store = None
        if spec.train_fraction > 0:
            history, trace = split_trace(trace, spec.train_fraction)
            if predictive:
                store = train(history)
        elif predictive:
            raise ValueError("predictive policies need train_fraction > 0")
        for r in compare_policies(trace, spec.policies, spec.fleet, spec.cost_model, store, seed):
            rows_by_seed.append((r.policy, seed, r))
    rows_by_seed.sort(key=lambda t: (t[0], t[1]))
    return comparison_csv([r for _, _, r in rows_by_seed],
                          extra=[("seed", [s for _, s, _ in rows_by_seed])])


def cmd_sweep(args) -> None:
    spec = load_experiment_spec(resolve_input(args.config))
    out_dir = Path(args.out) if args.out else spec.output_dir
    text = run_sweep(spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_text(out_dir / "sweep.csv", text)


def cmd_report(args) -> None:
    model = load_cost_model(args.cost_model)
    trace = load_trace(args.trace)
    c = crossover_density(model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = shuffle_rows(trace, c)
    info = summary(trace, model)
    if args.format == "json":
        _write_text(out / "shuffles.json", json.dumps(rows, indent=1) + "\n")
        _write_text(out / "summary.json", json.dumps(info, indent=1) + "\n")
    else:
        _write_text(out / "shuffles.csv", rows_to_csv(rows))
        _write_text(out / "summary.csv", summary_to_csv(info))
    _write_text(out / "scatter.svg", scatter_svg(density_scatter(trace), c))
    print(f"cost model: {json.dumps(model.to_dict(), sort_keys=True)}; "
          f"crossover {c:g} IOPS/TB; {info['n_shuffles']} shuffles, "
          f"{info['fraction_above_crossover']:.1%} above")


# --- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tierplace", description="SSD/HDD placement of temporary files.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic trace")
    p.add_argument("--config", required=True, help="generator config JSON (or fixture name)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="trace output path (JSONL)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="fit a model store from a history trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True, help="model store output path (JSON)")
    p.add_argument("--min-samples", type=int, default=3)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", help="replay a trace under one policy")
    p.add_argument("--trace", required=True)
    p.add_argument("--policy", required=True,
                   help="one of: " + ", ".join(k.value for k in PolicyKind))
    p.add_argument("--model", default=None, help="model store (predicted, capacity-score)")
    p.add_argument("--ssd-capacity-tb", type=_capacity, default=math.inf)
    p.add_argument("--hdd-count", type=int, default=1)
    p.add_argument("--cost-model", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--placements", action="store_true", help="include per-file tiers (json)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a policy x seed grid from an experiment file")
    p.add_argument("--config", required=True, help="experiment JSON (or fixture name)")
    p.add_argument("--out", default=None, help="output directory (overrides the file)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="density tables and scatter plot for a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--cost-model", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"tierplace: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        where = exc.filename if exc.filename is not None else ""
        print(f"tierplace: I/O error: {where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"tierplace: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TraceError, ConfigError, PredictorError, PlacementError, SimulationError,
            ValueError) as exc:
        print(f"tierplace: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
