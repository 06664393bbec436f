"""Command-line entry point: calibrate, run, campaign, plot."""

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .config import ConfigError, load_config, with_trial
from .experiment import Direction, TrialLog
from .human_model import HumanModel, SupportRegion
from .plotting import plot_trial
from .robot_model import JointState, RobotModel
from .strategies import Strategy

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BAD_CONFIG = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="balance-assist",
        description="Simulate robot-assisted balance recovery trials.",
    )
    parser.add_argument("--config", type=Path, default=None, help="TOML config file")
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging verbosity (default: WARNING)",
    )
    parser.add_argument(
        "--out", type=Path, default=Path("."), help="output directory (default: .)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    cal = sub.add_parser("calibrate", help="compute the SP and DZ of a subject")
    cal.add_argument("--mass", type=float, default=None, help="body mass (kg)")
    cal.add_argument("--height", type=float, default=None, help="body height (m)")
    cal.add_argument("--fwd-lean", type=float, default=None, help="safe lean (rad)")
    cal.add_argument("--bwd-lean", type=float, default=None, help="safe lean (rad)")

    run = sub.add_parser("run", help="simulate one trial")
    run.add_argument(
        "--strategy", choices=[s.value for s in Strategy], default="mba"
    )
    run.add_argument(
        "--direction", choices=[d.value for d in Direction], default="fwd"
    )
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--region", type=Path, default=None, help="region JSON file")

    camp = sub.add_parser("campaign", help="run the population protocol")
    camp.add_argument("--workers", type=int, default=None, help="worker processes")

    plot = sub.add_parser("plot", help="draw a trial log as SVG")
    plot.add_argument("log", type=Path, help="trial log CSV")
    return parser


def cmd_calibrate(args: argparse.Namespace, config) -> int:
    trial = config.trial
    mass = args.mass if args.mass is not None else trial.human.mass
    height = args.height if args.height is not None else trial.human.height
    fwd = args.fwd_lean if args.fwd_lean is not None else trial.max_safe_lean_fwd
    bwd = args.bwd_lean if args.bwd_lean is not None else trial.max_safe_lean_bwd
    robot = RobotModel(config.kinematics)
    home = JointState.from_vector([0.0, 0.0, 0.0, *config.hqp.preferred_arm_config])
    human = HumanModel(config.subject(mass, height)).place_at_handle(
        robot.forward_kinematics(home).position
    )
    region = human.calibrate_dz(fwd, bwd)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "region.json"
    path.write_text(json.dumps(region.to_dict(), indent=2))
    print(json.dumps(region.to_dict()))
    logger.info("Region written to %s", path)
    return EXIT_OK


def cmd_run(args: argparse.Namespace, config) -> int:
    config = with_trial(
        config,
        strategy=Strategy(args.strategy),
        direction=Direction(args.direction),
        seed=args.seed,
    )
    region = None
    if args.region is not None:
        region = SupportRegion.from_dict(json.loads(args.region.read_text()))
    result, log = config.experiment().run_trial(config.trial, region)
    args.out.mkdir(parents=True, exist_ok=True)
    stem = f"{args.strategy}_{args.direction}_{args.seed}"
    log.to_csv(args.out / f"{stem}.csv")
    (args.out / f"{stem}.json").write_text(json.dumps(asdict(result), indent=2))
    print(json.dumps(asdict(result)))
    return EXIT_OK


def cmd_campaign(args: argparse.Namespace, config) -> int:
    campaign = config.campaign
    if args.workers is not None:
        campaign = replace(campaign, workers=args.workers or None)
    frames = config.experiment().run_campaign(campaign, args.out)
    print(frames["table"].to_string(index=False))
    return EXIT_OK


def cmd_plot(args: argparse.Namespace, config) -> int:
    log = TrialLog.from_csv(args.log)
    args.out.mkdir(parents=True, exist_ok=True)
    path = plot_trial(log, args.out / f"{args.log.stem}.svg", title=args.log.stem)
    print(path)
    return EXIT_OK


COMMANDS = {
    "calibrate": cmd_calibrate,
    "run": cmd_run,
    "campaign": cmd_campaign,
    "plot": cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        return COMMANDS[args.command](args, config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG if args.command == "calibrate" else EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
