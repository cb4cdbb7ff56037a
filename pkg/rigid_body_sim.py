"""Rigid-body simulation of the perching quadrotor.

Free flight is a 6-DoF Newton-Euler model; while the hand holds the beam the
body becomes a one-DoF pendulum pinned at the hand point. `run_episode` closes
the loop between the controller, the allocator, the hand and the dynamics.
"""

from collections import deque
import csv
from dataclasses import dataclass, field, replace
import logging
import math
from pathlib import Path
from typing import TYPE_CHECKING, Any, Optional, Sequence, Union

import numpy as np

from attitude import (
    axis_angle_quat,
    body_x_axis,
    euler_angles,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
)
from flight_controller import (
    ATTACHED_PHASES,
    PHASE_ORDER,
    ControllerState,
    PerchEvent,
    PerchPhase,
    PhaseTransition,
    TargetPose,
    commanded_wrench,
    landing_trigger,
    maneuver_target,
    phase_step,
    pid_wrench,
    waypoint_target,
)
from rotor_allocation import WrenchVector, allocate, reconstruct, saturate
from tendon_hand import (
    GraspResult,
    PlateSaturationError,
    close_on_profile,
    grip_capacity,
    profile_for_beam,
    square_column_opening,
    travel_for_angle,
)

if TYPE_CHECKING:
    from scenario_config import ScenarioConfig

logger = logging.getLogger(__name__)

GRAVITY = 9.81
E_X = np.array([1.0, 0.0, 0.0])
DIVERGENCE_BOUND = 1e3

COLUMNS = (
    ("t", "x", "y", "z", "roll", "pitch", "yaw", "phase")
    + tuple(f"lambda{i}" for i in range(1, 5))
    + tuple(f"beta{i}" for i in range(1, 5))
    + ("target_x", "target_y", "target_z", "target_pitch")
)


class IntegrationError(RuntimeError):
    """The integrated state stopped being finite."""


class EpisodeDivergedError(RuntimeError):
    def __init__(self, message: str, log: "EpisodeLog"):
        super().__init__(message)
        self.log = log


def _vector(values, size) -> np.ndarray:
    array = np.array(values, dtype=float).reshape(size)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class BodyState:
    """Position and velocity in the world frame (z up); angular velocity in the
    body frame; orientation as a scalar-last unit quaternion, body to world."""

    position: np.ndarray
    velocity: np.ndarray
    orientation: np.ndarray
    angular_velocity: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _vector(self.position, 3))
        object.__setattr__(self, "velocity", _vector(self.velocity, 3))
        object.__setattr__(self, "orientation", _vector(self.orientation, 4))
        object.__setattr__(self, "angular_velocity", _vector(self.angular_velocity, 3))

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def is_finite(self) -> bool:
        return all(
            np.all(np.isfinite(v))
            for v in (self.position, self.velocity, self.orientation, self.angular_velocity)
        )


@dataclass(frozen=True)
class InertialParams:
    mass: float = 2.5
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.08, 0.08, 0.12]))

    def __post_init__(self):
        inertia = _vector(self.inertia, (3, 3))
        if self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not np.allclose(inertia, inertia.T, atol=1e-12):
            raise ValueError("inertia tensor must be symmetric")
        if np.min(np.linalg.eigvalsh(inertia)) <= 0:
            raise ValueError("inertia tensor must be positive definite")
        object.__setattr__(self, "inertia", inertia)

    def with_payload(self, payload: float) -> "InertialParams":
        """Adds a point payload at the CoG."""
        if payload < 0:
            raise ValueError(f"payload must be non-negative, got {payload}")
        return replace(self, mass=self.mass + payload)


@dataclass(frozen=True)
class HandMount:
    offset: float = 0.3
    capture_radius: float = 0.05
    capture_speed: float = 1.0

    def __post_init__(self):
        if self.offset <= 0 or self.capture_radius <= 0 or self.capture_speed <= 0:
            raise ValueError("hand offset, capture radius and capture speed must be positive")


@dataclass(frozen=True)
class BeamConstraint:
    axis: np.ndarray
    point: np.ndarray
    shape: str = "cylinder"
    size: float = 0.024
    hang_distance: float = 0.3
    attached: bool = False
    damping: float = 0.05
    pivot: Optional[np.ndarray] = None
    reference_orientation: Optional[np.ndarray] = None
    capture_armed: bool = False

    def __post_init__(self):
        axis = _vector(self.axis, 3)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError(f"beam axis must be unit length, got {axis}")
        if abs(axis[2]) > 1e-9:
            raise ValueError("beam axis must be horizontal")
        if self.shape not in ("cylinder", "square"):
            raise ValueError(f"beam shape must be 'cylinder' or 'square', got {self.shape!r}")
        if self.size <= 0 or self.hang_distance <= 0:
            raise ValueError("beam size and hang distance must be positive")
        if self.damping < 0:
            raise ValueError("joint damping must be non-negative")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "point", _vector(self.point, 3))
        if self.pivot is not None:
            object.__setattr__(self, "pivot", _vector(self.pivot, 3))
        if self.reference_orientation is not None:
            object.__setattr__(
                self, "reference_orientation", _vector(self.reference_orientation, 4)
            )

    @property
    def radius(self) -> float:
        if self.shape == "square":
            return square_column_opening(self.size) / 2.0
        return self.size / 2.0


def hand_point(state: BodyState, l_h: float) -> np.ndarray:
    return state.position + l_h * body_x_axis(state.orientation)


def _hand_velocity(state: BodyState, l_h: float) -> np.ndarray:
    return state.velocity + state.rotation_matrix @ np.cross(state.angular_velocity, l_h * E_X)


def _distance_to_line(point, line_point, axis) -> float:
    offset = point - line_point
    return float(np.linalg.norm(offset - (offset @ axis) * axis))


def attach(state: BodyState, constraint: BeamConstraint) -> tuple[BodyState, BeamConstraint]:
    """Pin the body to the beam at its hand point.

    The hand is drawn onto the beam axis and the velocity is projected onto the
    single rotation the pin allows.
    """
    l_h = constraint.hang_distance
    axis = constraint.axis
    hand = hand_point(state, l_h)
    pivot = constraint.point + ((hand - constraint.point) @ axis) * axis
    position = state.position + (pivot - hand)

    axis_body = state.rotation_matrix.T @ axis
    rate = float(state.angular_velocity @ axis_body)
    pinned = BodyState(
        position=position,
        velocity=rate * np.cross(axis, position - pivot),
        orientation=state.orientation,
        angular_velocity=rate * axis_body,
        time=state.time,
    )
    logger.info("t=%.3f attached at %s", state.time, np.round(pivot, 4))
    return pinned, replace(
        constraint,
        attached=True,
        pivot=pivot,
        reference_orientation=state.orientation,
        capture_armed=False,
    )


def detach(constraint: BeamConstraint) -> BeamConstraint:
    return replace(constraint, attached=False, pivot=None, reference_orientation=None)


@dataclass(frozen=True)
class _PinGeometry:
    axis_body: np.ndarray
    lever: np.ndarray
    lever_perp: np.ndarray
    gravity_cos: float
    gravity_sin: float
    inertia: float


def _pin_geometry(inertial: InertialParams, constraint: BeamConstraint) -> _PinGeometry:
    if not constraint.attached or constraint.pivot is None:
        raise ValueError("constraint is not attached")
    axis = constraint.axis
    reference = quat_to_matrix(constraint.reference_orientation)
    axis_body = reference.T @ axis
    lever = -constraint.hang_distance * reference[:, 0]
    lever_perp = lever - (axis @ lever) * axis
    return _PinGeometry(
        axis_body=axis_body,
        lever=lever,
        lever_perp=lever_perp,
        gravity_cos=float(np.cross(axis, lever)[2]),
        gravity_sin=float(lever_perp[2]),
        inertia=float(axis_body @ inertial.inertia @ axis_body + inertial.mass * lever_perp @ lever_perp),
    )


def _pin_angle(state: BodyState, constraint: BeamConstraint, pin: _PinGeometry) -> float:
    axis = constraint.axis
    lever = state.position - constraint.pivot
    lever_perp = lever - (axis @ lever) * axis
    return math.atan2(np.cross(pin.lever_perp, lever_perp) @ axis, pin.lever_perp @ lever_perp)


def pendulum_energy(
    state: BodyState, inertial: InertialParams, constraint: BeamConstraint
) -> float:
    """Kinetic plus potential energy of the pinned body, zero when hanging at rest."""
    pin = _pin_geometry(inertial, constraint)
    rate = float(state.angular_velocity @ pin.axis_body)
    height = state.position[2] - constraint.pivot[2] + math.sqrt(pin.lever_perp @ pin.lever_perp)
    return 0.5 * pin.inertia * rate**2 + inertial.mass * GRAVITY * height


def _check_finite(state: BodyState):
    if not state.is_finite():
        raise IntegrationError(f"non-finite state at t={state.time:.6f}")


def step_attached(
    state: BodyState,
    inertial: InertialParams,
    constraint: BeamConstraint,
    wrench: WrenchVector,
    dt: float,
) -> BodyState:
    """One RK4 step of the pendulum about the beam axis through the pivot."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    pin = _pin_geometry(inertial, constraint)
    l_h = constraint.hang_distance
    drive = float(
        pin.axis_body @ wrench.torque - l_h * pin.axis_body @ np.cross(E_X, wrench.force)
    )
    weight = inertial.mass * GRAVITY

    def acceleration(phi, rate):
        gravity = -weight * (pin.gravity_cos * math.cos(phi) - pin.gravity_sin * math.sin(phi))
        return (drive + gravity - constraint.damping * rate) / pin.inertia

    phi = _pin_angle(state, constraint, pin)
    rate = float(state.angular_velocity @ pin.axis_body)
    k1 = (rate, acceleration(phi, rate))
    k2 = (rate + 0.5 * dt * k1[1], acceleration(phi + 0.5 * dt * k1[0], rate + 0.5 * dt * k1[1]))
    k3 = (rate + 0.5 * dt * k2[1], acceleration(phi + 0.5 * dt * k2[0], rate + 0.5 * dt * k2[1]))
    k4 = (rate + dt * k3[1], acceleration(phi + dt * k3[0], rate + dt * k3[1]))
    phi += dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    rate += dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])

    turn = axis_angle_quat(constraint.axis, phi)
    lever = quat_to_matrix(turn) @ pin.lever
    result = BodyState(
        position=constraint.pivot + lever,
        velocity=rate * np.cross(constraint.axis, lever),
        orientation=quat_normalize(quat_multiply(turn, constraint.reference_orientation)),
        angular_velocity=rate * pin.axis_body,
        time=state.time + dt,
    )
    _check_finite(result)
    return result


def _free_derivative(x, force, torque, mass, inertia, inertia_inv):
    q = x[6:10]
    omega = x[10:13]
    rotation = quat_to_matrix(q / math.sqrt(q @ q))
    acceleration = rotation @ force / mass - np.array([0.0, 0.0, GRAVITY])
    q_dot = 0.5 * quat_multiply(q, np.append(omega, 0.0))
    omega_dot = inertia_inv @ (torque - np.cross(omega, inertia @ omega))
    return np.concatenate([x[3:6], acceleration, q_dot, omega_dot])


def step_free(
    state: BodyState, inertial: InertialParams, wrench: WrenchVector, dt: float
) -> BodyState:
    """One RK4 step of 6-DoF free flight under a body-frame wrench held over the step.

    Raises:
        IntegrationError: If the new state is not finite
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.concatenate(
        [state.position, state.velocity, state.orientation, state.angular_velocity]
    )
    args = (wrench.force, wrench.torque, inertial.mass, inertial.inertia, np.linalg.inv(inertial.inertia))
    k1 = _free_derivative(x, *args)
    k2 = _free_derivative(x + 0.5 * dt * k1, *args)
    k3 = _free_derivative(x + 0.5 * dt * k2, *args)
    k4 = _free_derivative(x + dt * k3, *args)
    x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    q = x[6:10]
    norm = math.sqrt(q @ q)
    if not math.isfinite(norm) or norm == 0.0:
        raise IntegrationError(f"quaternion collapsed at t={state.time + dt:.6f}")
    result = BodyState(x[0:3], x[3:6], q / norm, x[10:13], state.time + dt)
    _check_finite(result)
    return result


def detect_events(
    state: BodyState,
    constraint: BeamConstraint,
    mount: HandMount,
    fingers_open: bool = False,
) -> set[PerchEvent]:
    events = set()
    if constraint.capture_armed and not constraint.attached:
        hand = hand_point(state, mount.offset)
        near = _distance_to_line(hand, constraint.point, constraint.axis) < mount.capture_radius
        slow = np.linalg.norm(_hand_velocity(state, mount.offset)) < mount.capture_speed
        if near and slow:
            events.add(PerchEvent.CAPTURE)
    if constraint.attached and fingers_open:
        events.add(PerchEvent.RELEASE)
    return events


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    return format(float(value), ".9g")


@dataclass
class EpisodeLog:
    scenario: str
    rows: list[tuple] = field(default_factory=list)
    transitions: list[PhaseTransition] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)

    def append(self, state: BodyState, phase: PerchPhase, commands, target: TargetPose):
        roll, pitch, yaw = euler_angles(state.orientation)
        self.rows.append(
            (state.time, *state.position, roll, pitch, yaw, phase.value)
            + commands.magnitudes
            + commands.gimbals
            + (*target.position, target.pitch)
        )

    def column(self, name: str) -> list:
        index = COLUMNS.index(name)
        return [row[index] for row in self.rows]

    @property
    def phases_visited(self) -> list[str]:
        seen = []
        for phase in self.column("phase"):
            if not seen or seen[-1] != phase:
                seen.append(phase)
        return seen

    def write_csv(self, path: Union[str, Path]):
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(COLUMNS)
            for row in self.rows:
                writer.writerow([_fmt(v) for v in row])


@dataclass
class _Episode:
    """Mutable bookkeeping for one closed-loop run."""

    state: BodyState
    constraint: BeamConstraint
    ctrl: ControllerState
    log: EpisodeLog
    history: deque
    grasp: Optional[GraspResult] = None
    grasp_pending: bool = False
    hang_pitch: Optional[float] = None
    peak_thrust: float = 0.0
    saturated_ticks: int = 0


def _close_hand(config: "ScenarioConfig", hand, constraint: BeamConstraint) -> GraspResult:
    profile = profile_for_beam(hand, constraint.shape, constraint.size)
    travel = config.simulation.grasp_travel_m
    if travel is None:
        travel = travel_for_angle(hand, hand.joint_limit)
    try:
        result = close_on_profile(hand, profile, travel)
    except PlateSaturationError as e:
        logger.warning("grasp closure saturated the plate: %s", e)
        return e.result
    logger.info("grasp closed at %s rad, success=%s", np.round(result.angles, 4), result.success)
    return result


def _summarize(
    config: "ScenarioConfig",
    episode: _Episode,
    hand,
    maneuver,
    mass: float,
    target: TargetPose,
) -> dict[str, Any]:
    log = episode.log
    ctrl = episode.ctrl
    _, final_pitch, _ = euler_angles(episode.state.orientation)
    goal = ctrl.detach_target if ctrl.detach_target is not None else target.position
    position_error = float(np.linalg.norm(episode.state.position - goal))

    hang_pitches = [
        row[COLUMNS.index("pitch")] for row in log.rows if row[COLUMNS.index("phase")] == "HANG"
    ]
    amplitude = max((abs(p - math.pi / 2) for p in hang_pitches), default=None)
    capacity = grip_capacity(hand)

    summary: dict[str, Any] = {
        "scenario": log.scenario,
        "transitions": [
            {"time": tr.time, "from": tr.source.value, "to": tr.target.value, "trigger": tr.trigger}
            for tr in log.transitions
        ],
        "phases_visited": log.phases_visited,
        "monotone": is_monotone(log.phases_visited),
        "final_phase": ctrl.phase.value,
        "thrust_cutoff": any(tr.trigger == PerchEvent.LANDING.value for tr in log.transitions)
        and maneuver.landing_mode == "cutoff",
        "hang_pitch_deg": None if episode.hang_pitch is None else math.degrees(episode.hang_pitch),
        "max_pendulum_amplitude_deg": None if amplitude is None else math.degrees(amplitude),
        "final_pitch_deg": math.degrees(final_pitch),
        "final_position": episode.state.position.tolist(),
        "target_position": np.asarray(goal).tolist(),
        "final_position_error_m": position_error,
        "peak_thrust_n": episode.peak_thrust,
        "saturated_ticks": episode.saturated_ticks,
        "grasp": None
        if episode.grasp is None
        else {
            "angles_rad": list(episode.grasp.angles),
            "contacted": list(episode.grasp.contacted),
            "success": episode.grasp.success,
            "opening_m": 2.0 * episode.constraint.radius,
            "hand_mass_kg": hand.hand_mass,
        },
        "hanging_mass_kg": mass,
        "grip_capacity_kg": capacity,
        "grip_holds": mass <= capacity,
    }

    tol = config.tolerances
    checks: dict[str, bool] = {}
    if tol.expected_phases:
        checks["phases"] = all(p in summary["phases_visited"] for p in tol.expected_phases)
    if tol.hang_pitch_deg is not None:
        checks["hang_pitch"] = (
            summary["hang_pitch_deg"] is not None
            and abs(summary["hang_pitch_deg"] - 90.0) <= tol.hang_pitch_deg
        )
    if tol.final_pitch_deg is not None:
        checks["final_pitch"] = abs(summary["final_pitch_deg"]) <= tol.final_pitch_deg
    if tol.final_position_m is not None:
        checks["final_position"] = position_error <= tol.final_position_m
    if tol.grip_holds is not None:
        checks["grip_holds"] = summary["grip_holds"] == tol.grip_holds
    summary["checks"] = checks
    summary["passed"] = all(checks.values())
    return summary


def run_episode(config: "ScenarioConfig") -> EpisodeLog:
    """Run one closed-loop episode.

    Each control tick: target pose, PID wrench, thrust cutoff or ramp,
    allocation with per-rotor clipping, then the physics sub-steps on the
    clipped wrench, event detection and the phase machine.

    Raises:
        EpisodeDivergedError: If the state leaves the divergence bound; the
            partial log is attached.
        AllocationRankError: If the rotor geometry cannot produce every wrench
    """
    sim = config.simulation
    hand = config.hand_params()
    geometry = config.rotor_geometry()
    inertial = config.inertial_params().with_payload(sim.payload_kg)
    gains = config.pid_gains()
    thresholds = config.thresholds_params()
    maneuver = config.maneuver_params()
    mount = config.hand_mount()
    waypoints = config.waypoint_list()
    dt = sim.dt
    control_dt = dt * sim.control_every

    start = config.initial_state()
    _, start_pitch, start_yaw = euler_angles(start.orientation)
    ctrl = ControllerState(phase=PerchPhase(sim.initial_phase), l_h=mount.offset, yaw_ref=start_yaw)
    log = EpisodeLog(scenario=config.name, transitions=ctrl.transitions)
    history_len = int(math.ceil(thresholds.hold / control_dt)) + 2
    episode = _Episode(
        state=start,
        constraint=config.beam_constraint(),
        ctrl=ctrl,
        log=log,
        history=deque(maxlen=history_len),
    )
    if ctrl.phase is PerchPhase.APPROACH:
        episode.constraint = replace(episode.constraint, capture_armed=True)
    if ctrl.phase in ATTACHED_PHASES:
        episode.state, episode.constraint = attach(episode.state, episode.constraint)
        ctrl.reference_position = np.array(episode.state.position)
        ctrl.reference_pitch = start_pitch
        ctrl.grasped_at = ctrl.landed_at = 0.0
        if ctrl.phase is PerchPhase.HANG:
            episode.hang_pitch = start_pitch

    logger.info("episode %s start in %s, mass %.3f kg", config.name, ctrl.phase.value, inertial.mass)
    step = 0
    while True:
        t = step * dt
        state = episode.state
        target = maneuver_target(ctrl, t, maneuver, waypoint_target(waypoints, t))

        if ctrl.phase is PerchPhase.HANG and maneuver.landing_mode == "cutoff":
            wrench = WrenchVector.zero()
        else:
            wrench = pid_wrench(gains, ctrl, state, target, control_dt, inertial.mass, GRAVITY)
        wrench = commanded_wrench(ctrl, wrench, t, maneuver)
        commands = allocate(geometry, wrench)
        if commands.saturated:
            episode.saturated_ticks += 1
        commands = saturate(commands, geometry.max_thrust)
        applied = reconstruct(geometry, commands)
        episode.peak_thrust = max(episode.peak_thrust, max(commands.magnitudes))
        log.append(state, ctrl.phase, commands, target)

        try:
            for _ in range(sim.control_every):
                if ctrl.phase in ATTACHED_PHASES:
                    state = step_attached(state, inertial, episode.constraint, applied, dt)
                else:
                    state = step_free(state, inertial, applied, dt)
        except IntegrationError as e:
            log.summary = _summarize(config, episode, hand, maneuver, inertial.mass, target)
            raise EpisodeDivergedError(str(e), log) from e
        step += sim.control_every
        state = replace(state, time=step * dt)
        episode.state = state
        if (
            np.linalg.norm(state.position) > DIVERGENCE_BOUND
            or np.linalg.norm(state.velocity) > DIVERGENCE_BOUND
        ):
            log.summary = _summarize(config, episode, hand, maneuver, inertial.mass, target)
            raise EpisodeDivergedError(f"state left the bound at t={state.time:.3f}", log)

        events = _collect_events(config, episode, hand, maneuver, thresholds, mount)
        previous = ctrl.phase
        result = phase_step(ctrl, state, events, thresholds, maneuver)
        _apply_effects(config, episode, hand, result.effects, previous)
        if ctrl.phase is PerchPhase.HANG and previous is not PerchPhase.HANG:
            _, episode.hang_pitch, _ = euler_angles(state.orientation)

        if state.time >= sim.t_end - 1e-9:
            break
        if ctrl.phase is PerchPhase.DETACHED and state.time >= ctrl.detached_at + maneuver.settle_time:
            break

    log.summary = _summarize(config, episode, hand, maneuver, inertial.mass, target)
    logger.info(
        "episode %s finished at t=%.3f in %s, passed=%s",
        config.name,
        episode.state.time,
        ctrl.phase.value,
        log.summary["passed"],
    )
    return log


def _collect_events(config, episode: _Episode, hand, maneuver, thresholds, mount) -> set[PerchEvent]:
    ctrl = episode.ctrl
    state = episode.state
    t = state.time
    sim = config.simulation
    events = detect_events(state, episode.constraint, mount, ctrl.fingers_open_commanded)

    if ctrl.phase is PerchPhase.FREE_FLIGHT and sim.approach_time is not None:
        if t >= sim.approach_time - 1e-9:
            events.add(PerchEvent.APPROACH_COMMAND)
    elif ctrl.phase is PerchPhase.CONTACT and episode.grasp_pending:
        events.add(PerchEvent.GRASP_SUCCESS)
        episode.grasp_pending = False
    elif ctrl.phase is PerchPhase.GRASPED:
        if t >= ctrl.grasped_at + maneuver.swing_duration - 1e-9:
            episode.history.append(state)
            if landing_trigger(
                list(episode.history),
                thresholds.v_thresh,
                thresholds.omega_thresh,
                thresholds.hold,
                ctrl.phase,
            ):
                events.add(PerchEvent.LANDING)
    elif ctrl.phase is PerchPhase.HANG and maneuver.takeoff_delay is not None:
        if t >= ctrl.landed_at + maneuver.takeoff_delay - 1e-9:
            events.add(PerchEvent.TAKEOFF_COMMAND)
    return events


def _apply_effects(config, episode: _Episode, hand, effects, previous: PerchPhase):
    ctrl = episode.ctrl
    if ctrl.phase is PerchPhase.APPROACH and previous is not PerchPhase.APPROACH:
        episode.constraint = replace(episode.constraint, capture_armed=True)
    if ctrl.phase is PerchPhase.CONTACT and previous is not PerchPhase.CONTACT:
        episode.constraint = replace(episode.constraint, capture_armed=False)
        episode.grasp = _close_hand(config, hand, episode.constraint)
        episode.grasp_pending = episode.grasp.success
        if not episode.grasp.success:
            logger.warning("t=%.3f grasp failed, staying in CONTACT", episode.state.time)
    if effects.attach:
        episode.state, episode.constraint = attach(episode.state, episode.constraint)
        ctrl.reference_position = np.array(episode.state.position)
        episode.history.clear()
    if effects.detach:
        episode.constraint = detach(episode.constraint)


def phase_index(phase: Union[str, PerchPhase]) -> int:
    return PHASE_ORDER.index(PerchPhase(phase))


def is_monotone(phases: Sequence[str]) -> bool:
    indices = [phase_index(p) for p in phases]
    return all(a <= b for a, b in zip(indices, indices[1:]))
