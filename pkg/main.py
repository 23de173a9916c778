"""
Main entry point for the satellite-ground collaborative inference simulator.
Runs single scenarios, the backlog experiment, and ablation sweeps.
python_file: main.py
"""

import argparse
import logging
import sys

from colorama import Fore, Style, just_fix_windows_console

from config.settings import (
    BACKLOG_CAPTURE_INTERVAL,
    BACKLOG_IMAGES,
    BACKLOG_RATE,
    BACKLOG_WINDOW_DURATION,
    BACKLOG_WINDOW_PERIOD,
    OUTPUT_DIR,
    SWEEP_WORKERS,
)
from skyrag.errors import InvariantViolation, SkyragError
from skyrag.experiments import ablation_sweep, backlog_experiment, resolve_dimension, sweep_csv
from skyrag.sim import run
from utils.logging_setup import configure_logging
from utils.storage import RunStorage, load_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_INVARIANT = 2


def summary_line(summary, label=""):
    """One coloured line per run."""
    prefix = f"{label}: " if label else ""
    return (
        f"{Fore.CYAN}{prefix}{Style.RESET_ALL}"
        f"queries={summary.queries} answered={summary.answered} "
        f"accuracy={summary.accuracy:.4f} onboard={summary.onboard_fraction:.4f} "
        f"mean_latency={summary.mean_latency:.3f}s max_latency={summary.max_latency:.3f}s"
    )


def parse_values(raw):
    """Comma-separated sweep values; blanks are dropped."""
    return [v.strip() for v in (raw or "").split(",") if v.strip()]


def parse_size_range(raw):
    """`N` or `MIN:MAX` image sizes in bytes."""
    parts = raw.split(":")
    if len(parts) == 1:
        return int(parts[0]), int(parts[0])
    if len(parts) == 2:
        return int(parts[0]), int(parts[1])
    raise ValueError(f"bad image size range: {raw}")


def cmd_simulate(args):
    scenario = load_scenario(args.scenario, seed=args.seed)
    result = run(scenario)
    RunStorage(args.out).save_run(result)
    print(summary_line(result.summary))
    return EXIT_OK


def cmd_backlog(args):
    result = backlog_experiment(
        n_images=args.images,
        image_bytes=parse_size_range(args.image_bytes),
        capture_interval=args.capture_interval,
        window_period=args.window_period,
        window_duration=args.window_duration,
        rate=args.rate,
        seed=args.seed or 0,
    )
    RunStorage(args.out).save_text("backlog.csv", result.to_csv())
    print(f"{Fore.CYAN}backlog:{Style.RESET_ALL} images={len(result.rows)} "
          f"mean_latency={result.mean_latency:.3f}s max_latency={result.max_latency:.3f}s "
          f"slope={result.slope:.6g}s/index")
    return EXIT_OK


def cmd_sweep(args):
    values = parse_values(args.values)
    if not values:
        raise SkyragError("--values must list at least one value")
    resolve_dimension(args.dimension)
    scenario = load_scenario(args.scenario, seed=args.seed)
    points = ablation_sweep(scenario, args.dimension, values, workers=args.workers, progress=True)
    storage = RunStorage(args.out)
    for point in points:
        label = f"{args.dimension}={point.value}"
        storage.save_summary(point.summary, prefix=label)
        print(summary_line(point.summary, label))
    storage.save_text("sweep.csv", sweep_csv(points))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(description="Satellite-ground collaborative inference simulator")
    parser.add_argument("--log-level", default=None, help="Logging level (default from SKYRAG_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Run one scenario")
    simulate.add_argument("--scenario", required=True)
    simulate.add_argument("--out", default=OUTPUT_DIR)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.set_defaults(handler=cmd_simulate)

    backlog = sub.add_parser("backlog", help="Store-and-forward backlog experiment")
    backlog.add_argument("--out", default=OUTPUT_DIR)
    backlog.add_argument("--seed", type=int, default=None)
    backlog.add_argument("--images", type=int, default=BACKLOG_IMAGES)
    backlog.add_argument("--image-bytes", default="300000", help="N or MIN:MAX")
    backlog.add_argument("--capture-interval", type=float, default=BACKLOG_CAPTURE_INTERVAL)
    backlog.add_argument("--window-period", type=float, default=BACKLOG_WINDOW_PERIOD)
    backlog.add_argument("--window-duration", type=float, default=BACKLOG_WINDOW_DURATION)
    backlog.add_argument("--rate", type=float, default=BACKLOG_RATE)
    backlog.set_defaults(handler=cmd_backlog)

    sweep = sub.add_parser("sweep", help="One run per value of a configuration dimension")
    sweep.add_argument("--scenario", required=True)
    sweep.add_argument("--dimension", required=True)
    sweep.add_argument("--values", required=True, help="Comma-separated values")
    sweep.add_argument("--out", default=OUTPUT_DIR)
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--workers", type=int, default=SWEEP_WORKERS)
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def main(argv=None):
    """Parse arguments, run the chosen command, and map failures to exit codes."""
    just_fix_windows_console()
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except InvariantViolation as e:
        logger.error("invariant violated: %s", e)
        print(f"{Fore.RED}internal error: {e}{Style.RESET_ALL}", file=sys.stderr)
        return EXIT_INVARIANT
    except FileNotFoundError as e:
        path = e.filename or str(e)
        logger.error("file not found: %s", path)
        print(f"{Fore.RED}error: file not found: {path}{Style.RESET_ALL}", file=sys.stderr)
        return EXIT_USER_ERROR
    except (SkyragError, ValueError, OSError) as e:
        logger.error("%s", e)
        print(f"{Fore.RED}error: {e}{Style.RESET_ALL}", file=sys.stderr)
        return EXIT_USER_ERROR


if __name__ == "__main__":
    sys.exit(main())
