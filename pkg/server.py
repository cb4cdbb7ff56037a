"""perchsim MCP Server.

Exposes the hand statics, wrench allocation, finger closure and perching
episodes as MCP tools.
"""

from contextlib import asynccontextmanager
from dataclasses import dataclass, field
import logging
import os
from pathlib import Path
from typing import AsyncIterator, Dict, List, Optional

from mcp.server.fastmcp import Context, FastMCP

import scenario_config
from rigid_body_sim import EpisodeDivergedError, run_episode
from rotor_allocation import WrenchVector, allocate, default_geometry
from tendon_hand import (
    DOUBLE_CONTACT_ALPHA,
    HandParams,
    PlateSaturationError,
    capacity_curve,
    close_on_profile,
    max_load_double,
    max_load_single,
    square_column_opening as column_opening,
    travel_for_angle,
)

project_root = Path(__file__).parent.parent.absolute()

LOG_FILE = project_root / "custom-mcp.log"

logger = logging.getLogger(__name__)


@dataclass
class AppContext:
    scenario_dir: Path
    scenarios: Dict[str, scenario_config.ScenarioConfig] = field(default_factory=dict)


def get_scenario(ctx: Context, name: str) -> scenario_config.ScenarioConfig:
    """Load a scenario, caching it in the lifespan context.

    Raises:
        ScenarioConfigError: If the scenario cannot be loaded
    """
    app_context = ctx.request_context.lifespan_context

    if name in app_context.scenarios:
        return app_context.scenarios[name]

    path = Path(name)
    if path.suffix != ".json":
        path = app_context.scenario_dir / f"{name}.json"
    config = scenario_config.load_scenario(path)
    app_context.scenarios[name] = config
    return config


def _hand_params(ctx: Context, scenario: Optional[str]) -> HandParams:
    return HandParams() if scenario is None else get_scenario(ctx, scenario).hand_params()


@asynccontextmanager
async def app_lifespan(server: FastMCP) -> AsyncIterator[AppContext]:
    """Manage application lifecycle with typed context.

    Args:
        server: The FastMCP server instance

    Yields:
        AppContext with the scenario directory and an empty scenario cache
    """
    directory = scenario_config.scenario_dir()
    logger.info("serving scenarios from %s", directory)
    try:
        yield AppContext(scenario_dir=directory)
    finally:
        logger.info("perchsim server stopped")


# Create MCP server
mcp = FastMCP(
    "perchsim",
    lifespan=app_lifespan,
    dependencies=["mcp", "numpy", "scipy", "pydantic"],
)


@mcp.tool()
def grip_capacity(ctx: Context, grid: int = 10, scenario: Optional[str] = None) -> Dict:
    """Hanging-load capacity of the hand over the opening angle.

    Args:
        ctx: MCP context
        grid: Number of intervals between 0 and pi/10
        scenario: Optional scenario name whose hand parameters are used

    Returns:
        Capacity rows and the single/double contact capacities in kg
    """
    try:
        if grid < 1:
            raise ValueError(f"grid must be at least 1, got {grid}")
        params = _hand_params(ctx, scenario)
        alphas = [DOUBLE_CONTACT_ALPHA * k / grid for k in range(grid + 1)]
        rows = [
            {"alpha_rad": row.alpha, "regime": row.regime, "m_max_kg": row.m_max}
            for row in capacity_curve(params, alphas)
        ]
        return {
            "status": "success",
            "rows": rows,
            "single_contact_kg": max_load_single(params, 0.0),
            "double_contact_kg": max_load_double(params),
        }
    except Exception as e:
        error_msg = f"Failed to compute grip capacity: {str(e)}"
        return {"status": "error", "message": error_msg}


@mcp.tool()
def allocate_wrench(ctx: Context, wrench: List[float], scenario: Optional[str] = None) -> Dict:
    """Split a body wrench into rotor thrusts and gimbal angles.

    Args:
        ctx: MCP context
        wrench: Six numbers, force (N) then torque (N m) in the CoG frame
        scenario: Optional scenario name whose rotor layout is used

    Returns:
        Per-rotor thrust and gimbal angle, the saturation flag and the map rank
    """
    try:
        if scenario is None:
            geometry = default_geometry()
        else:
            geometry = get_scenario(ctx, scenario).rotor_geometry()
        commands = allocate(geometry, WrenchVector.from_vector(wrench))
        return {
            "status": "success",
            "rotors": [
                {"rotor": i, "lambda_N": c.magnitude, "beta_rad": c.gimbal}
                for i, c in enumerate(commands.commands, start=1)
            ],
            "saturated": commands.saturated,
            "rank": commands.rank,
        }
    except Exception as e:
        error_msg = f"Failed to allocate wrench: {str(e)}"
        return {"status": "error", "message": error_msg}


@mcp.tool()
def hand_close(
    ctx: Context,
    profile: List[Optional[float]],
    actuator_travel: Optional[float] = None,
    scenario: Optional[str] = None,
) -> Dict:
    """Close the three fingers on an object profile.

    Args:
        ctx: MCP context
        profile: Contact angle in rad for each finger, or null for no contact
        actuator_travel: Actuator travel in m; defaults to full closure
        scenario: Optional scenario name whose hand parameters are used

    Returns:
        Final joint angles and contact flags. A saturated plate is reported as
        an error together with the partial closure.
    """
    try:
        params = _hand_params(ctx, scenario)
        if actuator_travel is None:
            actuator_travel = travel_for_angle(params, params.joint_limit)
        result = close_on_profile(params, profile, actuator_travel)
        return {
            "status": "success",
            "angles_rad": list(result.angles),
            "contacted": list(result.contacted),
            "grasp_success": result.success,
            "actuator_travel_used": result.actuator_travel_used,
        }
    except PlateSaturationError as e:
        return {
            "status": "error",
            "message": f"Plate saturated: {str(e)}",
            "angles_rad": list(e.result.angles),
            "contacted": list(e.result.contacted),
        }
    except Exception as e:
        error_msg = f"Failed to close hand: {str(e)}"
        return {"status": "error", "message": error_msg}


@mcp.tool()
def square_column_opening(ctx: Context, side: float) -> Dict:
    """Finger opening needed for a square column.

    Args:
        ctx: MCP context
        side: Column side length in m

    Returns:
        Circumscribed-circle diameter in m
    """
    try:
        return {"status": "success", "opening_m": column_opening(side)}
    except Exception as e:
        error_msg = f"Failed to compute opening: {str(e)}"
        return {"status": "error", "message": error_msg}


@mcp.tool()
def simulate_scenario(ctx: Context, scenario: str, payload_kg: Optional[float] = None) -> Dict:
    """Run a perching episode and return its summary.

    Args:
        ctx: MCP context
        scenario: Scenario name or JSON path
        payload_kg: Optional payload added to the airframe

    Returns:
        Episode summary: phase transitions, final errors, peak thrust and checks
    """
    try:
        config = get_scenario(ctx, scenario)
        if payload_kg is not None:
            config = config.with_payload(payload_kg)
        log = run_episode(config)
        return {"status": "success", "rows": len(log.rows), "summary": log.summary}
    except EpisodeDivergedError as e:
        return {
            "status": "error",
            "message": f"Episode diverged: {str(e)}",
            "summary": e.log.summary,
        }
    except Exception as e:
        error_msg = f"Failed to simulate scenario: {str(e)}"
        return {"status": "error", "message": error_msg}


@mcp.tool()
def list_scenarios(ctx: Context) -> Dict:
    """List the scenario names available to the other tools.

    Args:
        ctx: MCP context

    Returns:
        Scenario names and the directory they are read from
    """
    try:
        directory = ctx.request_context.lifespan_context.scenario_dir
        names = sorted(p.stem for p in directory.glob("*.json"))
        return {"status": "success", "directory": str(directory), "scenarios": names}
    except Exception as e:
        error_msg = f"Failed to list scenarios: {str(e)}"
        return {"status": "error", "message": error_msg}


@mcp.resource("info://perchsim-tools")
def get_perchsim_tools_info() -> Dict:
    """Get information about the available perchsim tools."""
    tools_info = {
        "description": "Aerial hand and pendulum-perching simulator",
        "config": "Scenario names resolve inside PERCHSIM_CONFIG_DIR, or the bundled scenarios",
        "categories": {
            "hand": ["grip_capacity", "hand_close", "square_column_opening"],
            "rotors": ["allocate_wrench"],
            "episodes": ["simulate_scenario", "list_scenarios"],
        },
        "units": {"length": "m", "angle": "rad", "force": "N", "mass": "kg"},
        "double_contact_alpha_rad": DOUBLE_CONTACT_ALPHA,
    }
    return tools_info


def main():
    """Main entry point for the script."""
    logging.basicConfig(
        filename=LOG_FILE,
        level=os.getenv("PERCHSIM_LOG_LEVEL", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    # Stdio is prefered for local execution.
    mcp.run(transport="stdio")


# Main entry point
if __name__ == "__main__":
    main()
