import argparse
import logging
import sys
from typing import List, Optional

from app.config import settings
from app.exceptions import TrackingError, UsageError
from app.schemas import ABLATIONS, SimulationConfig, TrackingConfig
from app.services import PipelineService, load_config, report_table

logger = logging.getLogger(__name__)


def setup_logging(quiet: bool = False) -> None:
    if quiet:
        level = logging.WARNING
    elif settings.DEBUG:
        level = logging.DEBUG
    else:
        level = getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tensegrity", description=f"{settings.APP_NAME}: simulate, track, evaluate, plot")
    parser.add_argument("--quiet", action="store_true", help="warnings only, no progress bar")
    commands = parser.add_subparsers(dest="command", required=True)

    sim = commands.add_parser("simulate", help="render a synthetic dataset")
    sim.add_argument("--config", default=settings.DEFAULT_CONFIG, help="SimulationConfig JSON")
    sim.add_argument("--out", required=True, help="dataset root to create")
    sim.add_argument("--seed", type=int, default=None)

    track = commands.add_parser("track", help="track a dataset")
    track.add_argument("dataset")
    track.add_argument("--config", default=None, help="TrackingConfig JSON")
    track.add_argument("--out", required=True, help="run directory")
    track.add_argument("--seed", type=int, default=None)
    track.add_argument("--ablation", choices=sorted(ABLATIONS), default=None)
    track.add_argument("--max-frames", type=int, default=None)

    evaluate = commands.add_parser("evaluate", help="score a trajectory against ground truth")
    evaluate.add_argument("trajectory", help="trajectory.jsonl or its run directory")
    evaluate.add_argument("dataset")
    evaluate.add_argument("--out", default=None, help="report JSON path")

    plot = commands.add_parser("plot", help="cable and rod error plots")
    plot.add_argument("trajectory", help="trajectory.jsonl or its run directory")
    plot.add_argument("dataset")
    plot.add_argument("--out", required=True, help="output directory")
    return parser


def run(args: argparse.Namespace) -> int:
    service = PipelineService(progress=not args.quiet)

    if args.command == "simulate":
        overrides = {"seed": args.seed} if args.seed is not None else {}
        config = load_config(SimulationConfig, args.config, overrides)
        service.simulate(config, args.out)

    elif args.command == "track":
        if args.max_frames is not None and args.max_frames < 1:
            raise UsageError("--max-frames must be positive")
        overrides = {}
        if args.seed is not None:
            overrides["tracker.seed"] = args.seed
        if args.ablation is not None:
            overrides["ablation"] = args.ablation
        config = load_config(TrackingConfig, args.config, overrides)
        service.track(args.dataset, config, args.out, args.max_frames)

    elif args.command == "evaluate":
        report = service.evaluate(args.trajectory, args.dataset, args.out)
        print(report_table(report))

    elif args.command == "plot":
        written = service.plot(args.trajectory, args.dataset, args.out)
        for paths in written.values():
            for path in paths:
                print(path)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.quiet)
    try:
        return run(args)
    except TrackingError as exc:
        logger.error("%s", exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
