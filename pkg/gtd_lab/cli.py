"""
Command-line entry point: ``gtd-lab {validate,oracle,run,sweep,check}``.

Flags only control I/O and verbosity; every numeric setting comes from the
config file.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from . import __version__
from .config import (
    RuntimeSettings,
    build_setup,
    ensure_valid,
    load_config,
    validate_experiment,
)
from .exceptions import ConfigError, GtdLabError, ModelValidationError
from .harness import BatchRunner, build_oracle_reference, run_sweep, write_sweep_summary
from .schemas import ExperimentConfig
from .telemetry import MetricRecorder, print_summary
from .verification import run_checks

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2
EXIT_CHECK_FAILED = 3


def _parse_seeds(text: str) -> List[int]:
    try:
        seeds = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(
            f"seeds must be comma-separated integers: {text!r}"
        ) from e
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="gtd-lab",
        description="Off-policy GTD experiments checked against an exact matrix oracle.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, required=True, help="Experiment JSON file")
    common.add_argument("--out", type=Path, default=None, help="Output directory")
    common.add_argument(
        "--seeds", type=_parse_seeds, default=None, help="Comma-separated seed override"
    )
    common.add_argument("--workers", type=int, default=None, help="Worker processes")
    common.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG"
    )

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="Validate a config and its model")
    sub.add_parser("oracle", parents=[common], help="Write the oracle document")
    sub.add_parser("run", parents=[common], help="Run the experiment over its seeds")
    sub.add_parser("sweep", parents=[common], help="Run every cell of the sweep grid")
    sub.add_parser("check", parents=[common], help="Run the verification suite")
    return parser.parse_args(argv)


def _configure_logging(verbose: int, settings: RuntimeSettings) -> None:
    if verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = getattr(logging, settings.log_level, logging.WARNING)
    logging.basicConfig(
        level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )


def _write_json(path: Path, data: Dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, default=str)
        f.write("\n")


def cmd_validate(config: ExperimentConfig) -> int:
    problems = validate_experiment(config)
    if problems:
        print("Config is invalid:")
        for problem in problems:
            print(f"  - {problem}")
        return EXIT_INVALID
    print("Config is valid.")
    return EXIT_OK


def cmd_oracle(config: ExperimentConfig, out_dir: Path) -> int:
    setup = build_setup(config)
    reference = build_oracle_reference(config, setup, full=True)
    path = out_dir / "oracle.json"
    _write_json(path, reference.to_dict())
    print(f"Oracle ({reference.source}): J_p* = {reference.jp_star:.10g}")
    print(f"Wrote {path}")
    return EXIT_OK


def cmd_run(config: ExperimentConfig, out_dir: Path, workers: int) -> int:
    records = BatchRunner(max_workers=workers).run(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    recorder = MetricRecorder([m.value for m in config.recorded_metrics])
    summaries = []
    for record in records:
        if record.rows:
            record.to_csv(out_dir / f"run_seed{record.seed}.csv")
        if record.summary is not None:
            summary_path = out_dir / f"summary_seed{record.seed}.json"
            recorder.export(record.summary, str(summary_path))
            print_summary(record.summary)
            summaries.append(record.summary.model_dump(mode="json"))
        else:
            print(f"\nSeed {record.seed} failed: {record.error}")
            summaries.append({"seed": record.seed, "error": record.error})
    _write_json(out_dir / "summary.json", {"runs": summaries})
    failed = [r.seed for r in records if r.failed]
    if failed:
        logger.warning("seeds failed: %s", failed)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_sweep(config: ExperimentConfig, out_dir: Path, workers: int) -> int:
    if not config.sweep:
        raise ConfigError("config declares no sweep grid", ["sweep: empty"])
    metric_names = [m.value for m in config.recorded_metrics]

    def report(cell) -> None:
        if cell.skipped:
            print(f"{cell.overrides}: skipped ({cell.skipped})")
        else:
            diverged = sum(r.diverged for r in cell.records)
            print(f"{cell.overrides}: {len(cell.records)} runs, {diverged} diverged")

    cells = run_sweep(config, BatchRunner(max_workers=workers), on_cell=report)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "sweep_summary.csv"
    write_sweep_summary(cells, metric_names, path)
    print(f"Wrote {path}")
    return EXIT_OK


def cmd_check(config: ExperimentConfig, out_dir: Path, workers: int) -> int:
    report = run_checks(config, max_workers=workers)
    width = max((len(c.name) for c in report.checks), default=10)
    for c in report.checks:
        status = "PASS" if c.passed else "FAIL"
        print(
            f"{status}  {c.name:<{width}}  "
            f"margin={c.margin:.3e}  threshold={c.threshold:.3e}"
        )
    _write_json(out_dir / "check_report.json", report.to_dict())
    failed = report.failed()
    print(f"\n{len(report.checks) - len(failed)}/{len(report.checks)} checks passed")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def main(argv: Optional[List[str]] = None) -> int:
    args = _parse_args(argv)
    settings = RuntimeSettings.from_env()
    _configure_logging(args.verbose, settings)
    out_dir = args.out if args.out is not None else Path(settings.out_dir)
    workers = args.workers if args.workers is not None else settings.workers

    try:
        config = load_config(args.config)
        if args.seeds is not None:
            config = config.model_copy(update={"seeds": args.seeds})
        if args.command == "validate":
            return cmd_validate(config)
        if args.command != "check":
            ensure_valid(config)
        if args.command == "oracle":
            return cmd_oracle(config, out_dir)
        if args.command == "run":
            return cmd_run(config, out_dir, workers)
        if args.command == "sweep":
            return cmd_sweep(config, out_dir, workers)
        return cmd_check(config, out_dir, workers)
    except (ConfigError, ModelValidationError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except GtdLabError as e:
        print(f"Error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
