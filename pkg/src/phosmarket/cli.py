"""Command-line interface: pipeline, calibrate, simulate, verify."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .auction import AuctionError
from .bootstrap import CalibrationError
from .config import ConfigError, load_config
from .experiment import (
    ExperimentError,
    emit_tables,
    load_context,
    run_experiment,
    verify_run,
)
from .pipeline import PipelineError, run_pipeline, write_csv


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phosmarket",
        description="Bootstrap scenario simulator for the distributed DAP/MAP market",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_pipe = sub.add_parser("pipeline", help="compile raw CSV inputs into harmonized tables")
    p_pipe.add_argument("--raw-dir", type=Path, required=True)
    p_pipe.add_argument("--out-dir", type=Path, required=True)

    p_cal = sub.add_parser("calibrate", help="fit the demand and trade-cost regressions")
    p_cal.add_argument("--config", type=Path, required=True)
    p_cal.add_argument("--out", type=Path, help="fit summary CSV (default: stdout)")

    p_sim = sub.add_parser("simulate", help="run the bootstrap experiment")
    p_sim.add_argument("--config", type=Path, required=True)
    p_sim.add_argument("--seed", type=int, help="override the master seed")
    p_sim.add_argument("--replications", type=int, help="override the replication count")
    p_sim.add_argument("--output-dir", type=Path, help="override the output directory")
    p_sim.add_argument("--workers", type=int, help="override the worker count")

    p_ver = sub.add_parser("verify", help="re-check sampled replications against the oracle")
    p_ver.add_argument("--config", type=Path, required=True)
    p_ver.add_argument("--sample", type=int, default=20)
    return parser


def _cmd_pipeline(args: argparse.Namespace) -> int:
    outputs = run_pipeline(args.raw_dir, args.out_dir)
    for name, path in sorted(outputs.items()):
        print(f"{name}: {path}")
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    from .bootstrap import fit_two_stage

    config = load_config(args.config)
    context = load_context(config)
    rows: list[list[object]] = []
    for series in context.series:
        fit = fit_two_stage(series)
        rows.append(
            [
                "demand",
                series.region,
                f"{fit.alpha:.6f}",
                f"{fit.beta:.6f}",
                len(fit.u1),
            ]
        )
    rows.append(
        [
            "trade_cost",
            context.cost_fit.reference_market,
            f"{context.cost_fit.gamma:.6f}",
            "",
            len(context.cost_fit.residuals),
        ]
    )
    header = ["fit", "key", "coef_1", "coef_2", "observations"]
    if args.out:
        write_csv(args.out, header, rows)
        print(f"fit summary: {args.out}")
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(str(cell) for cell in row))
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = load_config(args.config).with_overrides(
        seed=args.seed,
        replications=args.replications,
        output_dir=args.output_dir,
        workers=args.workers,
    )
    report = run_experiment(config)
    outputs = emit_tables(report, config.output_dir)
    print(f"scenario {config.scenario}: {config.replications} replications")
    print(f"rejected draws: {report.rejections}")
    for name, path in sorted(outputs.items()):
        print(f"{name}: {path}")
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    outcomes = verify_run(config, sample=args.sample)
    failures = 0
    for replication, verifier_ok, oracle_match in outcomes:
        status = "ok" if verifier_ok and oracle_match else "FAIL"
        if status == "FAIL":
            failures += 1
        print(f"replication {replication}: verifier={verifier_ok} oracle={oracle_match} {status}")
    if failures:
        print(f"{failures} of {len(outcomes)} sampled replications failed")
        return 2
    print(f"all {len(outcomes)} sampled replications verified")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "pipeline": _cmd_pipeline,
        "calibrate": _cmd_calibrate,
        "simulate": _cmd_simulate,
        "verify": _cmd_verify,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, PipelineError, CalibrationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ExperimentError, AuctionError, OSError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
