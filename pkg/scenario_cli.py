"""perchsim command line.

    perchsim grip-capacity [--config NAME] [--grid N] [--out PATH]
    perchsim allocate --wrench FX FY FZ TX TY TZ [--config NAME]
    perchsim simulate --config NAME [--out PATH] [--sweep N]
    perchsim hand-close --profile A B C [--travel S] [--config NAME]

Exit codes: 0 success, 1 config error, 2 saturation, 3 rank error, 4 divergence.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import csv
import json
import logging
import os
from pathlib import Path
import sys
from typing import Optional, Sequence

from rigid_body_sim import EpisodeDivergedError, EpisodeLog, run_episode
from rotor_allocation import AllocationRankError, WrenchVector, allocate, default_geometry
from scenario_config import ScenarioConfig, ScenarioConfigError, load_scenario
from tendon_hand import (
    DOUBLE_CONTACT_ALPHA,
    HandParameterError,
    HandParams,
    PlateSaturationError,
    capacity_curve,
    close_on_profile,
    max_load_double,
    max_load_single,
    travel_for_angle,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SATURATED = 2
EXIT_RANK = 3
EXIT_DIVERGED = 4


def _fmt(value: float) -> str:
    return format(float(value), ".9g")


def _load_optional(name: Optional[str]) -> Optional[ScenarioConfig]:
    return None if name is None else load_scenario(name)


def _hand(config: Optional[ScenarioConfig]) -> HandParams:
    return HandParams() if config is None else config.hand_params()


def summary_path(out: Path) -> Path:
    return out.with_name(out.name + ".summary.json")


def cmd_grip_capacity(config: Optional[ScenarioConfig], grid: int, out: Path) -> int:
    """Write the capacity curve over `grid + 1` opening angles in [0, pi/10]."""
    if grid < 1:
        raise HandParameterError(f"grid must be at least 1, got {grid}")
    params = _hand(config)
    alphas = [DOUBLE_CONTACT_ALPHA * k / grid for k in range(grid + 1)]
    rows = capacity_curve(params, alphas)
    with open(out, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["alpha_rad", "regime", "m_max_kg"])
        for row in rows:
            writer.writerow([_fmt(row.alpha), row.regime, _fmt(row.m_max)])
    print(f"{_fmt(max_load_single(params, 0.0))},{_fmt(max_load_double(params))}")
    return EXIT_OK


def cmd_allocate(config: Optional[ScenarioConfig], wrench: Sequence[float]) -> int:
    geometry = default_geometry() if config is None else config.rotor_geometry()
    commands = allocate(geometry, WrenchVector.from_vector(wrench))
    writer = csv.writer(sys.stdout)
    writer.writerow(["rotor", "lambda_N", "beta_rad"])
    for i, command in enumerate(commands.commands, start=1):
        writer.writerow([i, _fmt(command.magnitude), _fmt(command.gimbal)])
    if commands.saturated:
        logger.warning("rotor thrust above %.3f N", geometry.max_thrust)
        return EXIT_SATURATED
    return EXIT_OK


def _write_episode(log: EpisodeLog, out: Path):
    log.write_csv(out)
    summary_path(out).write_text(json.dumps(log.summary, indent=2) + "\n", encoding="utf-8")


def _sweep_member(config: ScenarioConfig, index: int) -> tuple[int, EpisodeLog, bool]:
    member = config.with_payload(index * config.simulation.sweep_increment_kg)
    try:
        return index, run_episode(member), False
    except EpisodeDivergedError as e:
        return index, e.log, True


def cmd_simulate(config: ScenarioConfig, out: Path, sweep: Optional[int] = None) -> int:
    """Run one episode, or `sweep` episodes with growing payload, and write CSV plus summary."""
    if sweep is None:
        try:
            log = run_episode(config)
        except EpisodeDivergedError as e:
            _write_episode(e.log, out)
            print(f"episode diverged: {e}", file=sys.stderr)
            return EXIT_DIVERGED
        _write_episode(log, out)
        print(json.dumps({"scenario": config.name, "passed": log.summary["passed"]}))
        return EXIT_OK

    if sweep < 1:
        raise ScenarioConfigError(f"sweep needs at least one episode, got {sweep}")
    with ProcessPoolExecutor() as pool:
        results = list(pool.map(_sweep_member, [config] * sweep, range(sweep)))

    episodes = []
    diverged = False
    for index, log, failed in sorted(results, key=lambda r: r[0]):
        member_out = out.with_name(f"{out.stem}_{index}{out.suffix}")
        _write_episode(log, member_out)
        diverged = diverged or failed
        episodes.append({"index": index, "csv": member_out.name, "diverged": failed, **log.summary})
    merged = {"scenario": config.name, "episodes": episodes}
    summary_path(out).write_text(json.dumps(merged, indent=2) + "\n", encoding="utf-8")
    print(
        json.dumps(
            {
                "scenario": config.name,
                "hanging_mass_kg": [e.get("hanging_mass_kg") for e in episodes],
                "grip_holds": [e.get("grip_holds") for e in episodes],
            }
        )
    )
    return EXIT_DIVERGED if diverged else EXIT_OK


def _profile_entry(text: str) -> Optional[float]:
    if text.lower() == "none":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an angle in rad or 'none', got {text!r}")


def cmd_hand_close(
    config: Optional[ScenarioConfig],
    profile: Sequence[Optional[float]],
    travel: Optional[float] = None,
) -> int:
    params = _hand(config)
    if travel is None:
        travel = travel_for_angle(params, params.joint_limit)
    status = EXIT_OK
    try:
        result = close_on_profile(params, profile, travel)
    except PlateSaturationError as e:
        logger.warning("%s", e)
        result = e.result
        status = EXIT_SATURATED
    writer = csv.writer(sys.stdout)
    writer.writerow(["finger", "theta_rad", "contacted"])
    for i, finger in enumerate(result.fingers, start=1):
        writer.writerow([i, _fmt(finger.angles[0]), int(any(finger.contact_flags))])
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perchsim", description="Aerial hand and perching simulator"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    grip = sub.add_parser("grip-capacity", help="grasp capacity over the opening angle")
    grip.add_argument("--config", help="scenario name or JSON path for the hand parameters")
    grip.add_argument(
        "--grid",
        type=int,
        default=10,
        help="intervals in [0, pi/10]; writes grid+1 single-contact rows plus one double-contact row",
    )
    grip.add_argument("--out", type=Path, default=Path("grip_capacity.csv"))

    alloc = sub.add_parser("allocate", help="allocate a body wrench to the rotors")
    alloc.add_argument("--config", help="scenario name or JSON path for the rotor layout")
    alloc.add_argument(
        "--wrench", type=float, nargs=6, required=True, metavar=("FX", "FY", "FZ", "TX", "TY", "TZ")
    )

    sim = sub.add_parser("simulate", help="run a perching episode")
    sim.add_argument("--config", required=True, help="scenario name or JSON path")
    sim.add_argument("--out", type=Path, default=Path("episode.csv"))
    sim.add_argument("--sweep", type=int, help="run N episodes with payload k * increment")

    close = sub.add_parser("hand-close", help="close the fingers on an object profile")
    close.add_argument("--config", help="scenario name or JSON path for the hand parameters")
    close.add_argument(
        "--profile", type=_profile_entry, nargs=3, required=True, metavar=("A", "B", "C")
    )
    close.add_argument("--travel", type=float, help="actuator travel in m (default: full closure)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=os.getenv("PERCHSIM_LOG_LEVEL", "WARNING").upper(),
        stream=sys.stderr,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        if args.command == "grip-capacity":
            return cmd_grip_capacity(_load_optional(args.config), args.grid, args.out)
        if args.command == "allocate":
            return cmd_allocate(_load_optional(args.config), args.wrench)
        if args.command == "simulate":
            return cmd_simulate(load_scenario(args.config), args.out, args.sweep)
        return cmd_hand_close(_load_optional(args.config), args.profile, args.travel)
    except (ScenarioConfigError, HandParameterError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AllocationRankError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RANK
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
