"""Scenario documents.

A scenario is one JSON document (`schema_version: 1`) describing the hand, the
rotor layout, the airframe, controller gains and thresholds, the beam, the
approach waypoints and the pass/fail tolerances of an episode. Sections are
validated with pydantic and converted into the library's value types.
"""

import json
import logging
import math
import os
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from attitude import quat_from_euler
from flight_controller import Maneuver, PidGains, Thresholds, Waypoint
from rigid_body_sim import BeamConstraint, BodyState, HandMount, InertialParams
from rotor_allocation import RotorGeometry, default_geometry
from tendon_hand import HandParams, calibrate_stall_torque

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
BUNDLED_DIR = Path(__file__).resolve().parent / "scenarios"

Vec3 = Annotated[list[float], Field(min_length=3, max_length=3)]
Vec6 = Annotated[list[float], Field(min_length=6, max_length=6)]
Matrix3 = Annotated[list[Vec3], Field(min_length=3, max_length=3)]
PhaseName = Literal[
    "FREE_FLIGHT", "APPROACH", "CONTACT", "GRASPED", "HANG", "TAKEOFF", "DETACHED"
]

_DEFAULT_GAINS = PidGains.default()


class ScenarioConfigError(ValueError):
    """A scenario document could not be read, parsed or validated."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class HandSection(_Section):
    joint_pulley_radius_m: float = 0.006
    link_length_m: float = 0.1
    friction_mu: float = 0.3
    wrap_base_rad: float = 2 * math.pi
    stall_torque_nm: float = 3.4
    gear_ratio: float = 2.0
    gear_pulley_radius_m: float = 0.012
    beam_radius_m: float = 0.012
    finger_offset_m: float = 0.008
    hand_mass_kg: float = 0.39
    joint_limit_deg: float = 100.0
    tilt_limit_m: float = 0.04
    phalanx_length_m: float = 0.044
    actuator_pulley_radius_m: float = 0.012
    # Rescale the stall torque so the single-contact capacity at zero opening matches.
    calibrate_max_load_kg: Optional[float] = None


class RotorSection(_Section):
    arm_length_m: float = 0.3
    counter_torque_coeff: float = 0.02
    spin_dirs: Annotated[list[int], Field(min_length=4, max_length=4)] = [1, -1, 1, -1]
    max_thrust_n: float = 8.0
    identity_frames: bool = False
    positions_m: Optional[Annotated[list[Vec3], Field(min_length=4, max_length=4)]] = None
    frames: Optional[Annotated[list[Matrix3], Field(min_length=4, max_length=4)]] = None


class InertialSection(_Section):
    mass_kg: float = 2.5
    inertia_kgm2: Matrix3 = [[0.08, 0.0, 0.0], [0.0, 0.08, 0.0], [0.0, 0.0, 0.12]]


class GainsSection(_Section):
    kp: Vec6 = _DEFAULT_GAINS.kp.tolist()
    ki: Vec6 = _DEFAULT_GAINS.ki.tolist()
    kd: Vec6 = _DEFAULT_GAINS.kd.tolist()
    integral_clamp: Vec6 = _DEFAULT_GAINS.integral_clamp.tolist()


class ThresholdsSection(_Section):
    v_thresh_mps: float = 0.05
    omega_thresh_radps: float = 0.1
    hold_s: float = 0.5
    detach_pitch_rad: float = 0.05


class ManeuverSection(_Section):
    hand_offset_m: float = 0.3
    swing_duration_s: float = 2.0
    hang_pitch_deg: float = 90.0
    takeoff_delay_s: Optional[float] = 1.0
    takeoff_ramp_s: float = 1.0
    takeoff_sweep_s: float = 3.0
    settle_time_s: float = 5.0
    landing_mode: Literal["cutoff", "ramp"] = "cutoff"
    landing_ramp_s: float = 0.5


class CaptureSection(_Section):
    radius_m: float = 0.05
    speed_mps: float = 1.0


class BeamSection(_Section):
    axis: Vec3 = [0.0, 1.0, 0.0]
    point_m: Vec3 = [0.0, 0.0, 2.0]
    shape: Literal["cylinder", "square"] = "cylinder"
    size_m: float = 0.024
    damping_nms: float = 0.05


class WaypointSection(_Section):
    time_s: float
    position_m: Vec3
    roll_deg: float = 0.0
    pitch_deg: float = 0.0
    yaw_deg: float = 0.0


class InitialSection(_Section):
    position_m: Vec3
    velocity_mps: Vec3 = [0.0, 0.0, 0.0]
    roll_deg: float = 0.0
    pitch_deg: float = 0.0
    yaw_deg: float = 0.0
    angular_velocity_radps: Vec3 = [0.0, 0.0, 0.0]


class SimulationSection(_Section):
    dt_s: float = Field(default=1e-3, gt=0)
    control_every: int = Field(default=10, ge=1)
    t_end_s: float = Field(default=30.0, gt=0)
    initial_phase: Literal["FREE_FLIGHT", "APPROACH", "HANG"] = "FREE_FLIGHT"
    approach_time_s: Optional[float] = None
    payload_kg: float = Field(default=0.0, ge=0)
    grasp_travel_m: Optional[float] = None
    sweep_increment_kg: float = Field(default=2.5, ge=0)

    # Short names used by the simulator loop.
    @property
    def dt(self) -> float:
        return self.dt_s

    @property
    def t_end(self) -> float:
        return self.t_end_s

    @property
    def approach_time(self) -> Optional[float]:
        return self.approach_time_s


class TolerancesSection(_Section):
    expected_phases: list[PhaseName] = []
    hang_pitch_deg: Optional[float] = None
    final_pitch_deg: Optional[float] = None
    final_position_m: Optional[float] = None
    grip_holds: Optional[bool] = None


class ScenarioConfig(_Section):
    schema_version: Literal[1] = SCHEMA_VERSION
    name: str
    description: str = ""
    hand: HandSection = HandSection()
    rotor: RotorSection = RotorSection()
    inertial: InertialSection = InertialSection()
    gains: GainsSection = GainsSection()
    thresholds: ThresholdsSection = ThresholdsSection()
    maneuver: ManeuverSection = ManeuverSection()
    capture: CaptureSection = CaptureSection()
    beam: BeamSection = BeamSection()
    waypoints: Annotated[list[WaypointSection], Field(min_length=1)]
    initial: InitialSection
    simulation: SimulationSection = SimulationSection()
    tolerances: TolerancesSection = TolerancesSection()

    def hand_params(self) -> HandParams:
        h = self.hand
        params = HandParams(
            joint_pulley_radius=h.joint_pulley_radius_m,
            link_length=h.link_length_m,
            friction_mu=h.friction_mu,
            wrap_base=h.wrap_base_rad,
            stall_torque=h.stall_torque_nm,
            gear_ratio=h.gear_ratio,
            gear_pulley_radius=h.gear_pulley_radius_m,
            beam_radius=h.beam_radius_m,
            finger_offset=h.finger_offset_m,
            hand_mass=h.hand_mass_kg,
            joint_limit=math.radians(h.joint_limit_deg),
            tilt_limit=h.tilt_limit_m,
            phalanx_length=h.phalanx_length_m,
            actuator_pulley_radius=h.actuator_pulley_radius_m,
        )
        if h.calibrate_max_load_kg is not None:
            params = calibrate_stall_torque(params, h.calibrate_max_load_kg)
        return params

    def rotor_geometry(self) -> RotorGeometry:
        r = self.rotor
        if r.positions_m is None and r.frames is None:
            return default_geometry(
                arm_length=r.arm_length_m,
                counter_torque_coeff=r.counter_torque_coeff,
                spin_dirs=r.spin_dirs,
                max_thrust=r.max_thrust_n,
                identity_frames=r.identity_frames,
            )
        base = default_geometry(arm_length=r.arm_length_m, identity_frames=r.identity_frames)
        return RotorGeometry(
            positions=base.positions if r.positions_m is None else r.positions_m,
            frames=base.frames if r.frames is None else r.frames,
            spin_dirs=r.spin_dirs,
            counter_torque_coeff=r.counter_torque_coeff,
            max_thrust=r.max_thrust_n,
        )

    def inertial_params(self) -> InertialParams:
        return InertialParams(mass=self.inertial.mass_kg, inertia=self.inertial.inertia_kgm2)

    def pid_gains(self) -> PidGains:
        g = self.gains
        return PidGains(kp=g.kp, ki=g.ki, kd=g.kd, integral_clamp=g.integral_clamp)

    def thresholds_params(self) -> Thresholds:
        t = self.thresholds
        return Thresholds(
            v_thresh=t.v_thresh_mps,
            omega_thresh=t.omega_thresh_radps,
            hold=t.hold_s,
            detach_pitch=t.detach_pitch_rad,
        )

    def maneuver_params(self) -> Maneuver:
        m = self.maneuver
        return Maneuver(
            hand_offset=m.hand_offset_m,
            swing_duration=m.swing_duration_s,
            hang_pitch=math.radians(m.hang_pitch_deg),
            takeoff_delay=m.takeoff_delay_s,
            takeoff_ramp=m.takeoff_ramp_s,
            takeoff_sweep=m.takeoff_sweep_s,
            settle_time=m.settle_time_s,
            landing_mode=m.landing_mode,
            landing_ramp=m.landing_ramp_s,
        )

    def hand_mount(self) -> HandMount:
        return HandMount(
            offset=self.maneuver.hand_offset_m,
            capture_radius=self.capture.radius_m,
            capture_speed=self.capture.speed_mps,
        )

    def beam_constraint(self) -> BeamConstraint:
        b = self.beam
        axis = np.asarray(b.axis, dtype=float)
        norm = np.linalg.norm(axis)
        if norm == 0:
            raise ScenarioConfigError("beam axis must be non-zero")
        return BeamConstraint(
            axis=axis / norm,
            point=b.point_m,
            shape=b.shape,
            size=b.size_m,
            hang_distance=self.maneuver.hand_offset_m,
            damping=b.damping_nms,
        )

    def waypoint_list(self) -> list[Waypoint]:
        return [
            Waypoint(
                time=w.time_s,
                position=np.asarray(w.position_m, dtype=float),
                roll=math.radians(w.roll_deg),
                pitch=math.radians(w.pitch_deg),
                yaw=math.radians(w.yaw_deg),
            )
            for w in sorted(self.waypoints, key=lambda w: w.time_s)
        ]

    def initial_state(self) -> BodyState:
        i = self.initial
        return BodyState(
            position=i.position_m,
            velocity=i.velocity_mps,
            orientation=quat_from_euler(
                math.radians(i.roll_deg), math.radians(i.pitch_deg), math.radians(i.yaw_deg)
            ),
            angular_velocity=i.angular_velocity_radps,
        )

    def check_components(self):
        """Convert every section once so sub-config invariants surface at load time."""
        try:
            self.hand_params()
            self.rotor_geometry()
            self.inertial_params()
            self.pid_gains()
            self.thresholds_params()
            self.maneuver_params()
            self.hand_mount()
            self.beam_constraint()
            self.initial_state()
        except ValueError as e:
            raise ScenarioConfigError(f"scenario {self.name!r}: {e}") from e
        times = [w.time_s for w in self.waypoints]
        if len(set(times)) != len(times):
            raise ScenarioConfigError(f"scenario {self.name!r}: waypoint times must be distinct")

    def with_payload(self, payload_kg: float) -> "ScenarioConfig":
        simulation = self.simulation.model_copy(update={"payload_kg": payload_kg})
        return self.model_copy(
            update={"simulation": simulation, "name": f"{self.name}+{payload_kg:g}kg"}
        )


def scenario_dir() -> Path:
    """Directory searched for bare scenario names."""
    configured = os.getenv("PERCHSIM_CONFIG_DIR")
    return Path(configured) if configured else BUNDLED_DIR


def resolve_scenario(name_or_path: Union[str, Path]) -> Path:
    path = Path(name_or_path)
    if path.suffix == ".json" or path.exists():
        return path
    return scenario_dir() / f"{name_or_path}.json"


def list_scenarios() -> list[str]:
    directory = scenario_dir()
    if not directory.is_dir():
        return []
    return sorted(p.stem for p in directory.glob("*.json"))


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse and validate a scenario document.

    Raises:
        ScenarioConfigError: On malformed JSON, schema violations or invalid
            sub-configs
    """
    try:
        config = ScenarioConfig.model_validate_json(text)
    except ValidationError as e:
        raise ScenarioConfigError(f"invalid scenario document: {e}") from e
    config.check_components()
    return config


def serialize_scenario(config: ScenarioConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), indent=2) + "\n"


def load_scenario(name_or_path: Union[str, Path]) -> ScenarioConfig:
    path = resolve_scenario(name_or_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioConfigError(f"cannot read scenario {path}: {e}") from e
    logger.debug("loading scenario from %s", path)
    return parse_scenario(text)
