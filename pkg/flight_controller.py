"""Flight control for pendulum perching.

PID wrench computation, the perch phase machine with its landing trigger,
thrust cutoff and takeoff ramp, the integral-reset policy used while the
hand is still on the beam, and the detachment target that keeps the grasped
hand point fixed while the body swings back to level.
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum
import logging
import math
from typing import TYPE_CHECKING, Optional

import numpy as np

from attitude import attitude_error, euler_angles, rotation_from_euler
from rotor_allocation import WrenchVector

if TYPE_CHECKING:
    from rigid_body_sim import BodyState

logger = logging.getLogger(__name__)

AXES = ("x", "y", "z", "roll", "pitch", "yaw")
Z_AXIS = AXES.index("z")


class PerchPhase(Enum):
    FREE_FLIGHT = "FREE_FLIGHT"
    APPROACH = "APPROACH"
    CONTACT = "CONTACT"
    GRASPED = "GRASPED"
    HANG = "HANG"
    TAKEOFF = "TAKEOFF"
    DETACHED = "DETACHED"


class PerchEvent(Enum):
    APPROACH_COMMAND = "APPROACH_COMMAND"
    CAPTURE = "CAPTURE"
    GRASP_SUCCESS = "GRASP_SUCCESS"
    LANDING = "LANDING"
    TAKEOFF_COMMAND = "TAKEOFF_COMMAND"
    RELEASE = "RELEASE"


# phase -> (accepted event, next phase)
TRANSITIONS = {
    PerchPhase.FREE_FLIGHT: (PerchEvent.APPROACH_COMMAND, PerchPhase.APPROACH),
    PerchPhase.APPROACH: (PerchEvent.CAPTURE, PerchPhase.CONTACT),
    PerchPhase.CONTACT: (PerchEvent.GRASP_SUCCESS, PerchPhase.GRASPED),
    PerchPhase.GRASPED: (PerchEvent.LANDING, PerchPhase.HANG),
    PerchPhase.HANG: (PerchEvent.TAKEOFF_COMMAND, PerchPhase.TAKEOFF),
    PerchPhase.TAKEOFF: (PerchEvent.RELEASE, PerchPhase.DETACHED),
}

PHASE_ORDER = (
    PerchPhase.FREE_FLIGHT,
    PerchPhase.APPROACH,
    PerchPhase.CONTACT,
    PerchPhase.GRASPED,
    PerchPhase.HANG,
    PerchPhase.TAKEOFF,
    PerchPhase.DETACHED,
)

ATTACHED_PHASES = frozenset({PerchPhase.GRASPED, PerchPhase.HANG, PerchPhase.TAKEOFF})


class PhaseViolationError(RuntimeError):
    def __init__(self, phase: PerchPhase, event: PerchEvent, reason: str = "out of order"):
        super().__init__(f"event {event.value} rejected in phase {phase.value}: {reason}")
        self.phase = phase
        self.event = event


def _axis_array(values, name):
    array = np.array(values, dtype=float).reshape(6)
    if np.any(array < 0):
        raise ValueError(f"{name} gains must be non-negative, got {array}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PidGains:
    kp: np.ndarray
    ki: np.ndarray
    kd: np.ndarray
    integral_clamp: np.ndarray

    def __post_init__(self):
        for name in ("kp", "ki", "kd"):
            object.__setattr__(self, name, _axis_array(getattr(self, name), name))
        clamp = _axis_array(self.integral_clamp, "integral_clamp")
        if np.any(clamp <= 0):
            raise ValueError("integral clamp must be positive on every axis")
        object.__setattr__(self, "integral_clamp", clamp)

    @classmethod
    def default(cls) -> "PidGains":
        return cls(
            kp=[8.0, 8.0, 8.0, 20.0, 20.0, 20.0],
            ki=[1.0, 1.0, 1.0, 0.5, 0.5, 0.5],
            kd=[5.0, 5.0, 5.0, 4.0, 4.0, 4.0],
            integral_clamp=[2.0, 2.0, 2.0, 1.0, 1.0, 1.0],
        )


@dataclass(frozen=True)
class Thresholds:
    v_thresh: float = 0.05
    omega_thresh: float = 0.1
    hold: float = 0.5
    detach_pitch: float = 0.05


@dataclass(frozen=True)
class Maneuver:
    """Timing of the perch and detach maneuvers.

    `takeoff_delay` is the hang time before the takeoff command; None keeps
    the robot hanging until the episode ends.
    """

    hand_offset: float = 0.3
    swing_duration: float = 2.0
    hang_pitch: float = math.pi / 2
    takeoff_delay: Optional[float] = 1.0
    takeoff_ramp: float = 1.0
    takeoff_sweep: float = 3.0
    settle_time: float = 5.0
    landing_mode: str = "cutoff"
    landing_ramp: float = 0.5

    def __post_init__(self):
        if self.hand_offset <= 0:
            raise ValueError("hand offset must be positive")
        if self.landing_mode not in ("cutoff", "ramp"):
            raise ValueError(f"landing mode must be 'cutoff' or 'ramp', got {self.landing_mode!r}")


@dataclass(frozen=True)
class TargetPose:
    position: np.ndarray
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def rotation(self):
        return rotation_from_euler(self.roll, self.pitch, self.yaw)


@dataclass(frozen=True)
class Waypoint:
    time: float
    position: np.ndarray
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0


def waypoint_target(waypoints: Sequence[Waypoint], t: float) -> TargetPose:
    """Linear interpolation between timed waypoints, holding the ends."""
    if not waypoints:
        raise ValueError("at least one waypoint is required")
    if t <= waypoints[0].time:
        w = waypoints[0]
        return TargetPose(np.asarray(w.position, dtype=float), w.roll, w.pitch, w.yaw)
    for a, b in zip(waypoints, waypoints[1:]):
        if t < b.time:
            u = (t - a.time) / (b.time - a.time)
            position = (1 - u) * np.asarray(a.position) + u * np.asarray(b.position)
            return TargetPose(
                position,
                roll=(1 - u) * a.roll + u * b.roll,
                pitch=(1 - u) * a.pitch + u * b.pitch,
                yaw=(1 - u) * a.yaw + u * b.yaw,
            )
    w = waypoints[-1]
    return TargetPose(np.asarray(w.position, dtype=float), w.roll, w.pitch, w.yaw)


@dataclass(frozen=True)
class PhaseTransition:
    time: float
    source: PerchPhase
    target: PerchPhase
    trigger: str


@dataclass
class ControllerState:
    phase: PerchPhase = PerchPhase.FREE_FLIGHT
    l_h: float = 0.3
    integral: np.ndarray = field(default_factory=lambda: np.zeros(6))
    prev_error: Optional[np.ndarray] = None
    yaw_ref: float = 0.0
    # Body pose when the hand closed on the beam.
    reference_position: Optional[np.ndarray] = None
    reference_pitch: float = 0.0
    # CoG at the lowest hang point, recorded on the takeoff command.
    r_bottom: Optional[np.ndarray] = None
    bottom_pitch: float = 0.0
    detach_target: Optional[np.ndarray] = None
    fingers_open_commanded: bool = False
    grasped_at: Optional[float] = None
    landed_at: Optional[float] = None
    takeoff_at: Optional[float] = None
    detached_at: Optional[float] = None
    transitions: list[PhaseTransition] = field(default_factory=list)


@dataclass(frozen=True)
class PhaseEffects:
    attach: bool = False
    detach: bool = False
    thrust_cutoff: bool = False
    open_fingers: bool = False


def integral_policy(phase: PerchPhase) -> np.ndarray:
    """Per-axis integral enable mask. Only z integrates while taking off from the beam."""
    if phase is PerchPhase.TAKEOFF:
        mask = np.zeros(6, dtype=bool)
        mask[Z_AXIS] = True
        return mask
    return np.ones(6, dtype=bool)


def pid_wrench(
    gains: PidGains,
    ctrl: ControllerState,
    state: "BodyState",
    target: TargetPose,
    dt: float,
    mass: float,
    gravity: float = 9.81,
) -> WrenchVector:
    """Per-axis PID on position (world frame) and attitude (body frame) error.

    Position terms are forces with a gravity feedforward on world z; the total
    force is rotated into the CoG frame. Accumulators on axes disabled by the
    integral policy are held at zero.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    position_error = np.asarray(target.position, dtype=float) - state.position
    error = np.concatenate(
        [position_error, attitude_error(state.orientation, target.rotation())]
    )

    mask = integral_policy(ctrl.phase)
    integral = np.clip(ctrl.integral + error * dt, -gains.integral_clamp, gains.integral_clamp)
    ctrl.integral = np.where(mask, integral, 0.0)
    if ctrl.prev_error is None:
        derivative = np.zeros(6)
    else:
        derivative = (error - ctrl.prev_error) / dt
    ctrl.prev_error = error

    output = gains.kp * error + gains.ki * ctrl.integral + gains.kd * derivative
    force_world = output[:3] + np.array([0.0, 0.0, mass * gravity])
    rotation = np.asarray(state.rotation_matrix)
    return WrenchVector(force=rotation.T @ force_world, torque=output[3:])


def landing_trigger(
    history: Sequence["BodyState"],
    v_thresh: float,
    omega_thresh: float,
    hold: float,
    phase: PerchPhase = PerchPhase.GRASPED,
) -> bool:
    """True once speed and angular speed stayed under their thresholds for `hold` seconds.

    A history shorter than `hold` never triggers.
    """
    if phase is not PerchPhase.GRASPED or not history:
        return False
    latest = history[-1].time
    if latest - history[0].time < hold - 1e-9:
        return False
    for sample in reversed(history):
        if sample.time < latest - hold - 1e-9:
            break
        if np.linalg.norm(sample.velocity) >= v_thresh:
            return False
        if np.linalg.norm(sample.angular_velocity) >= omega_thresh:
            return False
    return True


def detachment_target(
    r_bottom: Sequence[float],
    pitch: float,
    pitch_des: float,
    yaw: float,
    l_h: float,
) -> np.ndarray:
    """CoG target that keeps the hand point on the beam while pitch goes to `pitch_des`.

    Angles follow the hand-direction convention u = (cos p cos y, cos p sin y, -sin p).
    """
    delta_cos = math.cos(pitch_des) - math.cos(pitch)
    delta_sin = math.sin(pitch_des) - math.sin(pitch)
    offset = np.array(
        [
            l_h * delta_cos * math.cos(yaw),
            l_h * delta_cos * math.sin(yaw),
            -l_h * delta_sin,
        ]
    )
    return np.asarray(r_bottom, dtype=float) - offset


def hand_fixed_target(
    reference: Sequence[float], pitch: float, pitch_des: float, yaw: float, l_h: float
) -> np.ndarray:
    # detachment_target measures pitch nose-down; the controller's pitch is nose-up.
    return detachment_target(reference, -pitch, -pitch_des, yaw, l_h)


def pitch_sweep(t: float, start_time: float, duration: float, start: float, end: float) -> float:
    """Cosine blend from `start` to `end`, at rest at both ends."""
    if t <= start_time:
        return start
    if duration <= 0 or t >= start_time + duration:
        return end
    progress = (t - start_time) / duration
    return start + (end - start) * 0.5 * (1.0 - math.cos(math.pi * progress))


def maneuver_target(
    ctrl: ControllerState, t: float, maneuver: Maneuver, default: TargetPose
) -> TargetPose:
    """Target pose for the current phase; `default` is used in free-flight phases."""
    if ctrl.phase is PerchPhase.GRASPED and ctrl.reference_position is not None:
        pitch = pitch_sweep(
            t, ctrl.grasped_at, maneuver.swing_duration, ctrl.reference_pitch, maneuver.hang_pitch
        )
        position = hand_fixed_target(
            ctrl.reference_position, ctrl.reference_pitch, pitch, ctrl.yaw_ref, ctrl.l_h
        )
        return TargetPose(position, pitch=pitch, yaw=ctrl.yaw_ref)
    if ctrl.phase is PerchPhase.HANG and ctrl.reference_position is not None:
        position = hand_fixed_target(
            ctrl.reference_position,
            ctrl.reference_pitch,
            maneuver.hang_pitch,
            ctrl.yaw_ref,
            ctrl.l_h,
        )
        return TargetPose(position, pitch=maneuver.hang_pitch, yaw=ctrl.yaw_ref)
    if ctrl.phase is PerchPhase.TAKEOFF:
        pitch = pitch_sweep(
            t,
            ctrl.takeoff_at + maneuver.takeoff_ramp,
            maneuver.takeoff_sweep,
            ctrl.bottom_pitch,
            0.0,
        )
        position = hand_fixed_target(
            ctrl.r_bottom, ctrl.bottom_pitch, pitch, ctrl.yaw_ref, ctrl.l_h
        )
        return TargetPose(position, pitch=pitch, yaw=ctrl.yaw_ref)
    if ctrl.phase is PerchPhase.DETACHED and ctrl.detach_target is not None:
        return TargetPose(ctrl.detach_target, pitch=0.0, yaw=ctrl.yaw_ref)
    return default


def commanded_wrench(
    ctrl: ControllerState, wrench: WrenchVector, t: float, maneuver: Maneuver
) -> WrenchVector:
    """Apply the thrust cutoff after landing and the takeoff thrust ramp."""
    if ctrl.phase is PerchPhase.HANG:
        if maneuver.landing_mode == "cutoff" or ctrl.landed_at is None:
            return WrenchVector.zero()
        remaining = 1.0 - (t - ctrl.landed_at) / maneuver.landing_ramp
        return wrench.scaled(max(0.0, remaining))
    if ctrl.phase is PerchPhase.TAKEOFF and maneuver.takeoff_ramp > 0:
        return wrench.scaled(min(1.0, (t - ctrl.takeoff_at) / maneuver.takeoff_ramp))
    return wrench


@dataclass(frozen=True)
class PhaseStepResult:
    phase: PerchPhase
    effects: PhaseEffects


def _transition(ctrl: ControllerState, target: PerchPhase, t: float, trigger: str):
    ctrl.transitions.append(PhaseTransition(t, ctrl.phase, target, trigger))
    logger.info("t=%.3f phase %s -> %s (%s)", t, ctrl.phase.value, target.value, trigger)
    ctrl.phase = target


def phase_step(
    ctrl: ControllerState,
    state: "BodyState",
    events: Iterable[PerchEvent],
    thresholds: Thresholds,
    maneuver: Maneuver,
) -> PhaseStepResult:
    """Advance the perch phase machine on `events`.

    Raises:
        PhaseViolationError: If an event does not match the current phase
    """
    t = state.time
    _, pitch, yaw = euler_angles(state.orientation)
    attach = detach = cutoff = open_fingers = False

    for event in sorted(events, key=lambda e: list(PerchEvent).index(e)):
        expected = TRANSITIONS.get(ctrl.phase)
        if expected is None or expected[0] is not event:
            raise PhaseViolationError(ctrl.phase, event)
        if event is PerchEvent.RELEASE:
            if not ctrl.fingers_open_commanded:
                raise PhaseViolationError(ctrl.phase, event, "fingers were not commanded open")
            if abs(pitch) >= thresholds.detach_pitch:
                raise PhaseViolationError(ctrl.phase, event, f"pitch {pitch:.4f} rad not level")

        _transition(ctrl, expected[1], t, event.value)

        if event is PerchEvent.GRASP_SUCCESS:
            ctrl.reference_position = np.array(state.position, dtype=float)
            ctrl.reference_pitch = pitch
            ctrl.yaw_ref = yaw
            ctrl.grasped_at = t
            attach = True
        elif event is PerchEvent.LANDING:
            ctrl.landed_at = t
            cutoff = maneuver.landing_mode == "cutoff"
        elif event is PerchEvent.TAKEOFF_COMMAND:
            ctrl.r_bottom = np.array(state.position, dtype=float)
            ctrl.bottom_pitch = pitch
            ctrl.takeoff_at = t
            ctrl.detach_target = hand_fixed_target(
                ctrl.r_bottom, pitch, 0.0, ctrl.yaw_ref, ctrl.l_h
            )
            ctrl.integral = np.where(integral_policy(ctrl.phase), ctrl.integral, 0.0)
            ctrl.prev_error = None
        elif event is PerchEvent.RELEASE:
            ctrl.integral = np.zeros(6)
            ctrl.prev_error = None
            ctrl.detached_at = t
            detach = True

    if (
        ctrl.phase is PerchPhase.TAKEOFF
        and not ctrl.fingers_open_commanded
        and t >= ctrl.takeoff_at + maneuver.takeoff_ramp + maneuver.takeoff_sweep
        and abs(pitch) < thresholds.detach_pitch
    ):
        ctrl.fingers_open_commanded = True
        open_fingers = True
        logger.info("t=%.3f fingers commanded open at pitch %.4f rad", t, pitch)

    return PhaseStepResult(
        ctrl.phase,
        PhaseEffects(attach=attach, detach=detach, thrust_cutoff=cutoff, open_fingers=open_fingers),
    )
