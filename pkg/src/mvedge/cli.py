"""Command-line interface.

Subcommands:
  generate   render a synthetic dataset to disk (PPM rasters + manifest)
  run        execute an experiment sweep and write a CSV of metrics
  sweep      threshold grid over the selective schemes
  inspect    print the message trace of a single inference round

Settings come from an optional flat ``key = value`` config file; any key
can also be overridden on the command line with ``--set key=value``, and
the most common ones have dedicated flags.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .dataset import SyntheticSpec, generate_synthetic, write_dataset
from .errors import MVEdgeError
from .harness import (
    ExperimentConfig,
    build_config,
    build_models,
    collect_round_outcomes,
    emit_csv,
    load_manifest,
    parse_config_text,
    parse_n_values,
    run_experiment,
    sweep_threshold,
)
from .network import round_flops, round_overhead, wire_bytes
from .schemes import SELECTIVE_SCHEMES, SchemeId
from .types import CONTROLLER


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvedge",
        description="Collaborative multi-view inference simulator",
    )
    parser.add_argument("--version", action="version", version=f"mvedge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="render a synthetic dataset to disk")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--classes", type=int, default=4)
    gen.add_argument("--per-class", type=int, default=3, dest="per_class")
    gen.add_argument("--views", type=int, default=12)
    gen.add_argument("--size", type=int, default=24, help="view width and height")
    gen.add_argument("--spread", type=float, default=52.0)
    gen.add_argument("--noise", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=7)
    gen.add_argument(
        "--with-sidecars",
        action="store_true",
        help="also export toy-backbone embedding sidecars",
    )

    def experiment_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat key=value configuration file")
        p.add_argument("--dataset", help="manifest path (omit for synthetic)")
        p.add_argument("--synthetic", action="store_true",
                       help="force the synthetic dataset even if config names one")
        p.add_argument("--scheme", help="comma-separated scheme list")
        p.add_argument("--n", help="node counts: '3', '1,3,5', or '1..6'")
        p.add_argument("--gamma", help="comma-separated similarity thresholds")
        p.add_argument("--seed", type=int)
        p.add_argument("--snr", help="comma-separated noise SNR levels in dB")
        p.add_argument("--repeats", type=int)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any configuration key")

    run = sub.add_parser("run", help="run an experiment sweep")
    experiment_flags(run)
    run.add_argument("--out", required=True, help="output CSV path")

    sweep = sub.add_parser("sweep", help="threshold grid for selective schemes")
    experiment_flags(sweep)
    sweep.add_argument("--gammas", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9",
                       help="comma-separated threshold grid")
    sweep.add_argument("--out", required=True, help="output CSV path")

    inspect = sub.add_parser("inspect", help="print one round's message trace")
    experiment_flags(inspect)
    inspect.add_argument("--instance", type=int, default=0,
                         help="instance index to run")
    return parser


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    settings: dict[str, str] = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise MVEdgeError(f"config file not found: {path}")
        settings.update(parse_config_text(path.read_text()))
    for pair in args.set:
        if "=" not in pair:
            raise MVEdgeError(f"--set expects KEY=VALUE, got {pair!r}")
        key, _, value = pair.partition("=")
        settings[key.strip()] = value.strip()
    if args.dataset:
        settings["dataset"] = args.dataset
    if getattr(args, "synthetic", False):
        settings.pop("dataset", None)
    if args.scheme:
        settings["schemes"] = args.scheme
    if args.n:
        settings["n"] = args.n
    if args.gamma:
        settings["gamma"] = args.gamma
    if args.seed is not None:
        settings["seed"] = str(args.seed)
    if args.snr:
        settings["snr"] = args.snr
    if args.repeats is not None:
        settings["repeats"] = str(args.repeats)
    return build_config(settings)


def _cmd_generate(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        classes=args.classes,
        instances_per_class=args.per_class,
        views_per_instance=args.views,
        width=args.size,
        height=args.size,
        centroid_spread=args.spread,
        within_class_noise=args.noise,
        seed=args.seed,
    )
    manifest = generate_synthetic(spec)
    sidecars = None
    if args.with_sidecars:
        from .models import toy_models

        backbone, _ = toy_models(spec.model_params())
        import numpy as np

        sidecars = {
            record.instance_id: np.array(
                [backbone.extract(v) for v in manifest.views(record)],
                dtype=np.float32,
            )
            for record in manifest.instances
        }
    path = write_dataset(manifest, args.out, sidecars)
    total_views = sum(r.view_count for r in manifest.instances)
    print(f"wrote {len(manifest.instances)} instances ({total_views} views) to {path}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    rows = run_experiment(config)
    path = emit_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    gammas = [float(g) for g in args.gammas.split(",") if g.strip()]
    rows = sweep_threshold(config, gammas)
    path = emit_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def _cmd_inspect(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    manifest = load_manifest(config)
    backbone, head = build_models(config, manifest)
    scheme = config.schemes[0]
    n = config.n_values[0]
    gamma = config.gammas[0] if config.gammas and scheme in SELECTIVE_SCHEMES else None
    snr = config.snr_values[0]
    index = args.instance
    if not 0 <= index < len(manifest.instances):
        raise MVEdgeError(f"instance index {index} out of range")
    outcomes = collect_round_outcomes(
        config, manifest, backbone, head, scheme, n, gamma, snr, config.seed
    )
    instance, outcome = outcomes[index]

    def node_name(node: int) -> str:
        return "ctrl" if node == CONTROLLER else f"n{node}"

    print(f"scheme={scheme.value} instance={instance.instance_id} "
          f"label={instance.true_label} n={n}"
          + (f" gamma={gamma}" if gamma is not None else ""))
    print(f"{'#':>3} {'phase':<22} {'kind':<17} {'from':>5} {'to':>5} "
          f"{'payload_B':>10} {'wire_B':>10}")
    for i, entry in enumerate(outcome.trace):
        m = entry.message
        print(
            f"{i:>3} {entry.phase.value:<22} {m.kind.value:<17} "
            f"{node_name(m.sender):>5} {node_name(m.receiver):>5} "
            f"{m.payload_bytes:>10} {wire_bytes(m, config.transport):>10}"
        )
    ops = ", ".join(f"{node_name(op.node)}:{op.stage}" for op in outcome.trace.ops)
    print(f"compute: {ops}")
    per_source, controller = round_flops(outcome, config.cost)
    print(
        f"outcome: prediction={'dropped' if outcome.dropped else outcome.prediction} "
        f"transmitted={outcome.transmitted_views}/{outcome.available_views} "
        f"overhead={round_overhead(outcome.trace, config.transport)}B "
        f"flops[src={sum(per_source.values()):.3e} ctrl={controller:.3e}]"
    )
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    handlers = {
        "generate": _cmd_generate,
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "inspect": _cmd_inspect,
    }
    try:
        return handlers[args.command](args)
    except MVEdgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
