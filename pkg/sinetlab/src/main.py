"""Command-line entry point: analyze, gradcheck, train, ablate and trace."""

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace

import pandas as pd

from sinetlab.src.analyzer import analyze, analyze_widths
from sinetlab.src.arch import ModelSpec, build_desk_sinet, build_sinet, shape_trace
from sinetlab.src.config import (
    load_dataset_descriptor,
    load_model_spec,
    load_train_config,
    resolve_seed,
)
from sinetlab.src.gradcheck import DEFAULT_TOLERANCE, run_suite
from sinetlab.src.storage import (
    save_ablation,
    save_cost_report,
    save_frame,
    save_history,
    save_model_spec,
)
from sinetlab.src.train import (
    linear_oracle_accuracy,
    make_dataset,
    run_ablation,
    train,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


def _add_spec_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--spec", help="Model spec JSON file (overrides the width flags)")
    parser.add_argument("--width", type=float, default=1.0, help="Width multiplier w")
    parser.add_argument("--classes", type=int, default=1000, help="Number of classes")
    parser.add_argument("--input", type=int, default=224, help="Square input resolution")
    parser.add_argument("--groups", type=int, default=2, help="Channel groups per SI Unit")
    parser.add_argument(
        "--no-exchange", dest="exchange", action="store_false", help="Disable exchange shortcut"
    )
    parser.add_argument(
        "--no-attention",
        dest="attention",
        action="store_false",
        help="Use the plain head on the last block",
    )


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--spec", help="Model spec JSON file (desk preset by default)")
    parser.add_argument(
        "--data", default="blobs", help="Dataset descriptor file or preset name (blobs)"
    )
    parser.add_argument(
        "--config",
        default="desk",
        help="Training config file or preset name (imagenet, cifar, desk)",
    )


def _add_format_argument(parser: argparse.ArgumentParser, choices: list[str]) -> None:
    parser.add_argument("--format", choices=choices, default=choices[0], help="Output format")


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse CLI arguments."""

    parser = argparse.ArgumentParser(
        prog="sinetlab", description="SI Unit network analysis, verification and training"
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Diagnostics level on stderr",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    analyze_parser = commands.add_parser("analyze", help="Parameter and multiply-add report")
    _add_spec_arguments(analyze_parser)
    _add_format_argument(analyze_parser, ["table", "json"])
    analyze_parser.add_argument(
        "--sweep",
        type=float,
        nargs="+",
        metavar="W",
        help="Report totals for several width multipliers instead of one model",
    )
    analyze_parser.add_argument("--out", help="Also write the report (or sweep) files here")

    grad_parser = commands.add_parser("gradcheck", help="Finite-difference gradient checks")
    grad_parser.add_argument("--seed", type=int, default=0, help="Seed of the first run")
    grad_parser.add_argument("--seeds", type=int, default=1, help="Number of consecutive seeds")
    grad_parser.add_argument(
        "--tol", type=float, default=DEFAULT_TOLERANCE, help="Max relative error"
    )
    _add_format_argument(grad_parser, ["table", "json"])

    train_parser = commands.add_parser("train", help="Train a model on a synthetic dataset")
    _add_run_arguments(train_parser)
    train_parser.add_argument("--out", required=True, help="Output directory for artefacts")

    ablate_parser = commands.add_parser("ablate", help="SI Unit and attention ablation study")
    _add_run_arguments(ablate_parser)
    _add_format_argument(ablate_parser, ["table", "json"])
    ablate_parser.add_argument("--out", help="Also write ablation.csv/.json/.parquet here")

    trace_parser = commands.add_parser("trace", help="Per-layer output shapes")
    _add_spec_arguments(trace_parser)
    _add_format_argument(trace_parser, ["table", "json"])

    return parser.parse_args(argv)


def _spec_from_args(args: argparse.Namespace) -> ModelSpec:
    if args.spec:
        return load_model_spec(args.spec)
    return build_sinet(
        args.width,
        args.classes,
        args.input,
        groups=args.groups,
        exchange=args.exchange,
        attention=args.attention,
    )


def _run_setup(args: argparse.Namespace):
    cfg = load_train_config(args.config)
    cfg = replace(cfg, seed=resolve_seed(cfg.seed))
    descriptor = load_dataset_descriptor(args.data)
    descriptor = replace(descriptor, seed=resolve_seed(descriptor.seed))
    data = make_dataset(descriptor)
    if args.spec:
        spec = load_model_spec(args.spec)
    else:
        spec = build_desk_sinet(classes=descriptor.classes, input_hw=descriptor.size)
    return spec, data, cfg


def _cmd_analyze(args: argparse.Namespace) -> int:
    if args.sweep:
        frame = analyze_widths(args.sweep, args.classes, args.input)
        if args.format == "json":
            print(frame.to_json(orient="records", indent=2))
        else:
            print(frame.to_string(index=False))
        if args.out:
            save_frame(frame, args.out, "width_sweep")
        return EXIT_OK
    report = analyze(_spec_from_args(args))
    print(report.to_json() if args.format == "json" else report.to_table())
    if args.out:
        save_cost_report(report, args.out)
    return EXIT_OK


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    first = resolve_seed(args.seed)
    rows = []
    for seed in range(first, first + args.seeds):
        for result in run_suite(seed, args.tol):
            rows.append(
                {
                    "seed": seed,
                    "case": result.name,
                    "max_rel_error": result.max_rel_error,
                    "passed": result.passed,
                }
            )
    if args.format == "json":
        print(json.dumps(rows, indent=2))
    else:
        frame = pd.DataFrame(rows)
        frame["status"] = frame["passed"].map({True: "PASS", False: "FAIL"})
        print(frame.drop(columns=["passed"]).to_string(index=False))
    failed = [row for row in rows if not row["passed"]]
    if failed:
        logger.error("%d of %d gradient checks failed", len(failed), len(rows))
        return EXIT_CHECK_FAILED
    return EXIT_OK


def _cmd_train(args: argparse.Namespace) -> int:
    spec, data, cfg = _run_setup(args)
    logger.info("Linear oracle accuracy on this dataset: %.3f", linear_oracle_accuracy(data))
    history = train(spec, data, cfg)
    save_model_spec(spec, args.out)
    save_history(history, args.out)
    print(
        f"epochs={len(history.records)} final_loss={history.final_loss:.4f} "
        f"final_accuracy={history.final_accuracy:.3f} out={args.out}"
    )
    return EXIT_OK


def _cmd_ablate(args: argparse.Namespace) -> int:
    spec, data, cfg = _run_setup(args)
    table = run_ablation(spec, data, cfg)
    if args.out:
        save_ablation(table, args.out)
    if args.format == "json":
        print(table.to_json(orient="records", indent=2))
    else:
        print(table.to_string(index=False))
    return EXIT_OK


def _cmd_trace(args: argparse.Namespace) -> int:
    trace = shape_trace(_spec_from_args(args))
    if args.format == "json":
        print(json.dumps([asdict(layer) for layer in trace], indent=2))
    else:
        print(pd.DataFrame([asdict(layer) for layer in trace]).to_string(index=False))
    return EXIT_OK


COMMANDS = {
    "analyze": _cmd_analyze,
    "gradcheck": _cmd_gradcheck,
    "train": _cmd_train,
    "ablate": _cmd_ablate,
    "trace": _cmd_trace,
}


def main(argv: list[str] | None = None) -> int:
    """Entry point for the CLI.

    Returns:
        int: 0 on success, 1 when a check fails, 2 for usage, file, spec or config errors.
    """

    args = _parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as e:
        logger.error("File not found: %s", e)
        return EXIT_USAGE
    except (OSError, ValueError) as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
