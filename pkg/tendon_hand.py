"""Tendon-driven three-fingered hand.

Kinematics of the semi tendon-driven fingers, the two-dimensional differential
plate that distributes one actuator's travel to three fingers, and the grasp
statics that bound how much load the hand can hang from a beam.
"""

from dataclasses import dataclass, field, replace
import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

logger = logging.getLogger(__name__)

# Opening angle where each finger starts touching the beam at two points.
DOUBLE_CONTACT_ALPHA = math.pi / 10

SINGLE_CONTACT = "single-contact"
DOUBLE_CONTACT = "double-contact"

ANGLE_TOL = 1e-9


class HandParameterError(ValueError):
    """Raised for invalid hand parameters or operation arguments."""


class GraspDomainError(ValueError):
    """Raised when an opening angle lies outside a statics formula's domain."""


@dataclass(frozen=True)
class HandParams:
    """Geometry, friction and actuator constants of the hand.

    `hand_mass` is the hand unit's share of the airframe mass. The airframe's
    `InertialParams.mass` already counts it, so the statics leave it out and the
    episode summary only reports it.
    """

    joint_pulley_radius: float = 0.006
    link_length: float = 0.1
    friction_mu: float = 0.3
    wrap_base: float = 2 * math.pi
    stall_torque: float = 3.4
    gear_ratio: float = 2.0
    gear_pulley_radius: float = 0.012
    beam_radius: float = 0.012
    finger_offset: float = 0.008
    hand_mass: float = 0.390
    gravity: float = 9.81
    joint_limit: float = math.radians(100.0)
    tilt_limit: float = 0.04
    phalanx_length: float = 0.044
    actuator_pulley_radius: float = 0.012

    def __post_init__(self):
        positive = (
            "joint_pulley_radius",
            "link_length",
            "stall_torque",
            "gear_ratio",
            "gear_pulley_radius",
            "beam_radius",
            "gravity",
            "joint_limit",
            "tilt_limit",
            "phalanx_length",
            "actuator_pulley_radius",
        )
        for name in positive:
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise HandParameterError(f"{name} must be positive, got {value}")
        for name in ("friction_mu", "wrap_base", "finger_offset", "hand_mass"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise HandParameterError(f"{name} must be non-negative, got {value}")


@dataclass(frozen=True)
class TendonRouting:
    """Constant tendon Jacobians of one finger.

    `jacobian` stacks the active rows (flexor, extensor) on top of the passive
    rows. `actuator_map` has the same row layout; its passive rows are zero.
    """

    jacobian: np.ndarray
    actuator_map: np.ndarray
    n_active: int = 2

    @property
    def active_block(self) -> np.ndarray:
        return self.jacobian[: self.n_active]

    @property
    def passive_block(self) -> np.ndarray:
        return self.jacobian[self.n_active :]


@dataclass(frozen=True)
class FingerState:
    angles: Tuple[float, float, float]
    contact_flags: Tuple[bool, bool, bool] = (False, False, False)


@dataclass(frozen=True)
class PlateState:
    vertex_displacements: Tuple[float, float, float]
    actuator_displacement: float
    tendon_tensions: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def spread(self) -> float:
        return max(self.vertex_displacements) - min(self.vertex_displacements)


@dataclass(frozen=True)
class GraspResult:
    angles: Tuple[float, float, float]
    contacted: Tuple[bool, bool, bool]
    actuator_travel_used: float
    success: bool
    history: Tuple[PlateState, ...] = field(default=())

    @property
    def fingers(self) -> Tuple[FingerState, ...]:
        """Per-finger joint state. The passive tendons keep a finger's three joints equal."""
        return tuple(
            FingerState(angles=(angle, angle, angle), contact_flags=(touched, touched, touched))
            for angle, touched in zip(self.angles, self.contacted)
        )


class PlateSaturationError(RuntimeError):
    """The differential plate cannot tilt far enough for the requested closure.

    The partial closure reached before the plate saturated is kept on `result`.
    """

    def __init__(self, message: str, result: GraspResult):
        super().__init__(message)
        self.result = result


def build_coupling_jacobians(
    params: HandParams,
    n_joints: int = 3,
    actuator_pulley_radius: Optional[float] = None,
) -> TendonRouting:
    """Build the tendon Jacobians for a finger whose adjacent joints are tied
    together by crossed passive tendons.

    Active rows are the flexor (shortens when all joints flex) and the extensor.
    Every adjacent joint pair contributes two passive rows, [R, -R] and [-R, R].
    """
    radius = params.joint_pulley_radius
    if actuator_pulley_radius is None:
        actuator_pulley_radius = params.actuator_pulley_radius
    if actuator_pulley_radius <= 0:
        raise HandParameterError("actuator pulley radius must be positive")
    if n_joints < 2:
        raise HandParameterError(f"need at least two joints, got {n_joints}")

    active = np.vstack([np.full(n_joints, radius), np.full(n_joints, -radius)])
    passive_rows = []
    for k in range(n_joints - 1):
        row = np.zeros(n_joints)
        row[k], row[k + 1] = radius, -radius
        passive_rows.extend([row, -row])
    jacobian = np.vstack([active, np.array(passive_rows)])

    actuator_map = np.zeros((jacobian.shape[0], 1))
    actuator_map[0, 0] = -actuator_pulley_radius
    actuator_map[1, 0] = actuator_pulley_radius
    return TendonRouting(jacobian=jacobian, actuator_map=actuator_map)


def tendon_rate(
    routing: TendonRouting,
    joint_rates: Sequence[float],
    actuator_rates: Sequence[float],
) -> np.ndarray:
    joint_rates = np.asarray(joint_rates, dtype=float)
    actuator_rates = np.atleast_1d(np.asarray(actuator_rates, dtype=float))
    if joint_rates.shape != (routing.jacobian.shape[1],):
        raise HandParameterError(
            f"expected {routing.jacobian.shape[1]} joint rates, got {joint_rates.shape}"
        )
    if actuator_rates.shape != (routing.actuator_map.shape[1],):
        raise HandParameterError(
            f"expected {routing.actuator_map.shape[1]} actuator rates, got {actuator_rates.shape}"
        )
    return routing.jacobian @ joint_rates + routing.actuator_map @ actuator_rates


def coupling_residual(routing: TendonRouting, angles: Sequence[float]) -> float:
    """Infinity norm of the passive-tendon elongation. Zero iff all joints agree."""
    return float(np.max(np.abs(routing.passive_block @ np.asarray(angles, dtype=float))))


def belt_gain(tension_in: float, mu: float, wrap: float) -> float:
    """Capstan amplification of a tendon wrapped `wrap` radians around a pulley."""
    if tension_in < 0 or mu < 0 or wrap < 0:
        raise HandParameterError(
            f"belt gain needs non-negative inputs, got T={tension_in}, mu={mu}, wrap={wrap}"
        )
    return tension_in * math.exp(mu * wrap)


def _check_alpha(alpha: float, upper: float = math.pi / 4, inclusive: bool = False):
    beyond = alpha > upper + 1e-12 if inclusive else alpha >= upper
    if alpha < 0 or beyond or not math.isfinite(alpha):
        raise GraspDomainError(f"opening angle {alpha} outside [0, {upper})")


def contact_force_single(mass: float, alpha: float, gravity: float = 9.81) -> float:
    _check_alpha(alpha)
    if mass < 0:
        raise HandParameterError(f"mass must be non-negative, got {mass}")
    return mass * gravity / (3 * math.cos(2 * alpha))


def contact_force_double(mass: float, alpha: float, gravity: float = 9.81) -> float:
    _check_alpha(alpha)
    if mass < 0:
        raise HandParameterError(f"mass must be non-negative, got {mass}")
    return mass * gravity / (6 * math.cos(2 * alpha))


def moment_arms(params: HandParams, alpha: float) -> Tuple[float, float]:
    _check_alpha(alpha)
    l = params.link_length
    cos2a = math.cos(2 * alpha)
    l1 = (
        l / (2 * cos2a)
        + l * math.sin(alpha) / cos2a
        - (params.beam_radius + params.finger_offset) * math.tan(2 * alpha)
    )
    return l1, l1 + l * math.sin(alpha)


def _load_scale(params: HandParams, wrap: float) -> float:
    p = params
    return (
        p.stall_torque
        * p.joint_pulley_radius
        * p.gear_ratio
        * math.exp(p.friction_mu * wrap)
        / (p.gravity * p.link_length * p.gear_pulley_radius)
    )


def max_load_single(params: HandParams, alpha: float) -> float:
    """Largest mass the hand holds with one contact point per finger.

    Keeps only the first term of the inner moment arm and neglects the third
    joint, so it is only valid for openings up to the double-contact angle.
    """
    _check_alpha(alpha, DOUBLE_CONTACT_ALPHA, inclusive=True)
    cos2a = math.cos(2 * alpha)
    shape = cos2a**2 / (math.sin(alpha) * cos2a + 1)
    return _load_scale(params, params.wrap_base + alpha) * shape


def max_load_double(params: HandParams, alpha: float = DOUBLE_CONTACT_ALPHA) -> float:
    """Largest mass the hand holds once each finger bears on two points."""
    _check_alpha(alpha)
    cos2a = math.cos(2 * alpha)
    shape = 4 * cos2a**2 / (4 * math.sin(alpha) * cos2a + 5 * cos2a + 1)
    return _load_scale(params, params.wrap_base + DOUBLE_CONTACT_ALPHA) * shape


def grip_capacity(params: HandParams) -> float:
    return max(
        max_load_single(params, 0.0),
        max_load_double(params, DOUBLE_CONTACT_ALPHA),
    )


@dataclass(frozen=True)
class CapacityRow:
    alpha: float
    regime: str
    m_max: float


def capacity_curve(params: HandParams, alpha_grid: Sequence[float]) -> list[CapacityRow]:
    rows = []
    for alpha in alpha_grid:
        alpha = float(alpha)
        rows.append(CapacityRow(alpha, SINGLE_CONTACT, max_load_single(params, alpha)))
        if abs(alpha - DOUBLE_CONTACT_ALPHA) <= 1e-12:
            rows.append(CapacityRow(alpha, DOUBLE_CONTACT, max_load_double(params, alpha)))
    return rows


def torque_balance_max_load(
    params: HandParams,
    alpha: float,
    contacts: int = 1,
    exact_arms: bool = False,
    rel_tol: float = 1e-13,
) -> float:
    """Solve the tendon tension balance for the hanging mass with a bracketed root find.

    The flexor tension needed to resist the contact moments about the first
    joint, three fingers times (sum of f * arm) / R1, is compared with the
    stalled actuator tension amplified by the capstan wrap. Demand grows with
    mass, so the crossing is bracketed and handed to brentq.

    With `exact_arms` the single-contact inner arm keeps all three terms
    instead of the small-angle first term.
    """
    _check_alpha(alpha)
    if contacts not in (1, 2):
        raise HandParameterError(f"contacts must be 1 or 2, got {contacts}")
    p = params
    l = p.link_length
    cos2a = math.cos(2 * alpha)
    sina = math.sin(alpha)

    if contacts == 1:
        wrap = p.wrap_base + alpha
        if exact_arms:
            inner = moment_arms(p, alpha)[0]
        else:
            inner = l / (2 * cos2a)
        arms = (inner, inner + l * sina)
        per_finger_share = 3.0
    else:
        wrap = p.wrap_base + DOUBLE_CONTACT_ALPHA
        arms = (l / (2 * cos2a) + l * sina, l * sina + 2.5 * l)
        per_finger_share = 6.0

    supply = belt_gain(p.gear_ratio * p.stall_torque / p.gear_pulley_radius, p.friction_mu, wrap)

    def excess(mass):
        force = mass * p.gravity / (per_finger_share * cos2a)
        return 3.0 * sum(force * arm for arm in arms) / p.joint_pulley_radius - supply

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
    return brentq(excess, 0.0, hi, xtol=1e-15, rtol=rel_tol)


def calibrate_stall_torque(
    params: HandParams, target_mass: float, alpha: float = 0.0
) -> HandParams:
    """Return params whose single-contact capacity at `alpha` equals `target_mass`."""
    if target_mass <= 0:
        raise HandParameterError(f"target mass must be positive, got {target_mass}")
    current = max_load_single(params, alpha)
    return replace(params, stall_torque=params.stall_torque * target_mass / current)


def square_column_opening(side: float) -> float:
    """Diameter of the circle circumscribing a square column of the given side."""
    if side < 0:
        raise HandParameterError(f"side must be non-negative, got {side}")
    return side * math.sqrt(2.0)


def travel_for_angle(params: HandParams, angle: float) -> float:
    # The flexor passes three synchronized joint pulleys.
    return 3.0 * params.joint_pulley_radius * angle


def joint_angles_from_travel(params: HandParams, travel: float) -> float:
    return travel / (3.0 * params.joint_pulley_radius)


def contact_angle_for_radius(params: HandParams, radius: float) -> float:
    """Joint angle at which a finger's phalanges close on a cylinder."""
    if radius <= 0:
        raise HandParameterError(f"radius must be positive, got {radius}")
    angle = 2.0 * math.atan(params.phalanx_length / (2.0 * (radius + params.finger_offset)))
    return min(angle, params.joint_limit)


def profile_for_beam(params: HandParams, shape: str, size: float) -> Tuple[float, float, float]:
    """Per-finger contact angles for a cylinder (size = diameter) or a square
    column (size = side). Square columns are closed on as if they were the
    circumscribing cylinder so the column can turn inside the fingers."""
    if shape == "cylinder":
        diameter = size
    elif shape == "square":
        diameter = square_column_opening(size)
    else:
        raise HandParameterError(f"unknown beam shape {shape!r}")
    angle = contact_angle_for_radius(params, diameter / 2.0)
    return (angle, angle, angle)


def _stall_tension(params: HandParams) -> float:
    return params.gear_ratio * params.stall_torque / params.gear_pulley_radius


def close_on_profile(
    params: HandParams,
    object_profile: Sequence[Optional[float]],
    actuator_travel: float,
) -> GraspResult:
    """Quasi-static closure of the three fingers through the differential plate.

    The actuator pulls the plate centroid, so s = (s1 + s2 + s3) / 3. Unblocked
    fingers share equal tension and advance together; a finger that reaches its
    contact angle (or the joint limit when its profile entry is None) stops and
    the remaining travel goes to the others, tilting the plate. The loop steps
    from one stop event to the next.

    Raises:
        PlateSaturationError: the plate tilt needed exceeds `tilt_limit` while
            travel remains.
    """
    if actuator_travel < 0 or not math.isfinite(actuator_travel):
        raise HandParameterError(f"actuator travel must be non-negative, got {actuator_travel}")
    if len(object_profile) != 3:
        raise HandParameterError(f"profile needs three entries, got {len(object_profile)}")

    stops = np.empty(3)
    for i, angle in enumerate(object_profile):
        if angle is None:
            stops[i] = travel_for_angle(params, params.joint_limit)
            continue
        if angle < 0 or angle > params.joint_limit + ANGLE_TOL:
            raise HandParameterError(
                f"finger {i + 1} contact angle {angle} outside [0, {params.joint_limit}]"
            )
        stops[i] = travel_for_angle(params, angle)

    travel_tol = travel_for_angle(params, ANGLE_TOL)
    s = np.zeros(3)
    frozen = np.zeros(3, dtype=bool)
    used = 0.0

    def snapshot(tension=0.0):
        return PlateState(
            vertex_displacements=tuple(float(v) for v in s),
            actuator_displacement=float(s.sum() / 3.0),
            tendon_tensions=(tension, tension, tension),
        )

    def result(history):
        angles = tuple(joint_angles_from_travel(params, float(v)) for v in s)
        contacted = tuple(
            bool(frozen[i] and object_profile[i] is not None) for i in range(3)
        )
        at_limit = tuple(a >= params.joint_limit - ANGLE_TOL for a in angles)
        success = all(c or lim for c, lim in zip(contacted, at_limit))
        return GraspResult(
            angles=angles,
            contacted=contacted,
            actuator_travel_used=used,
            success=success,
            history=tuple(history),
        )

    history = [snapshot()]
    while not frozen.all():
        remaining = actuator_travel - used
        if remaining <= travel_tol:
            break
        free = np.flatnonzero(~frozen)
        level = s[free[0]]
        to_stop = float(np.min(stops[free] - level))
        by_travel = 3.0 * remaining / len(free)
        tilt_room = math.inf
        if frozen.any():
            tilt_room = params.tilt_limit - (level - float(np.min(s[frozen])))

        step = max(0.0, min(to_stop, by_travel, tilt_room))
        s[free] += step
        used += step * len(free) / 3.0

        for i in free:
            if stops[i] - s[i] <= travel_tol:
                frozen[i] = True

        if tilt_room < min(to_stop, by_travel) - travel_tol:
            history.append(snapshot())
            partial = result(history)
            logger.debug("plate saturated at spread %.6f m", history[-1].spread)
            raise PlateSaturationError(
                f"plate tilt would exceed {params.tilt_limit} m", partial
            )
        history.append(snapshot())

    if frozen.all():
        history[-1] = snapshot(_stall_tension(params) / 3.0)
    grasp = result(history)
    logger.debug(
        "closure finished: angles=%s contacted=%s travel=%.6f",
        grasp.angles,
        grasp.contacted,
        grasp.actuator_travel_used,
    )
    return grasp
