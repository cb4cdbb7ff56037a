"""Wrench allocation for the tilt-rotor quadrotor.

Each rotor module can tilt its thrust inside the x-z plane of its own frame,
so the four modules give eight thrust components. The desired body wrench is
mapped onto them with the minimum-norm pseudo-inverse, then every rotor's
planar thrust is split into a scalar thrust and a gimbal angle.
"""

from dataclasses import dataclass, field
import logging
import math
from typing import Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

N_ROTORS = 4

# Selects the x and z axes of a rotor module frame.
PROJECTION_B = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])

SINGULAR_CUTOFF = 1e-10


class AllocationRankError(RuntimeError):
    def __init__(self, rank: int):
        super().__init__(f"allocation map has rank {rank}, need 6")
        self.rank = rank


def _frozen_array(values, shape) -> np.ndarray:
    array = np.array(values, dtype=float).reshape(shape)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class RotorGeometry:
    positions: np.ndarray
    frames: np.ndarray
    spin_dirs: np.ndarray
    counter_torque_coeff: float = 0.02
    max_thrust: float = 8.0
    projection: np.ndarray = field(default_factory=lambda: PROJECTION_B.copy())

    def __post_init__(self):
        object.__setattr__(self, "positions", _frozen_array(self.positions, (N_ROTORS, 3)))
        object.__setattr__(self, "frames", _frozen_array(self.frames, (N_ROTORS, 3, 3)))
        object.__setattr__(self, "spin_dirs", _frozen_array(self.spin_dirs, (N_ROTORS,)))
        object.__setattr__(self, "projection", _frozen_array(self.projection, (3, 2)))
        for i, frame in enumerate(self.frames):
            if not np.allclose(frame.T @ frame, np.eye(3), atol=1e-9):
                raise ValueError(f"rotor {i + 1} frame is not orthonormal")
            if abs(np.linalg.det(frame) - 1.0) > 1e-9:
                raise ValueError(f"rotor {i + 1} frame is not a proper rotation")
        if not np.all(np.isin(self.spin_dirs, (-1.0, 1.0))):
            raise ValueError(f"spin directions must be +1 or -1, got {self.spin_dirs}")
        if self.max_thrust <= 0:
            raise ValueError(f"max thrust must be positive, got {self.max_thrust}")


def _yaw(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def default_geometry(
    arm_length: float = 0.3,
    counter_torque_coeff: float = 0.02,
    spin_dirs: Sequence[float] = (1, -1, 1, -1),
    max_thrust: float = 8.0,
    identity_frames: bool = False,
) -> RotorGeometry:
    """X-configuration quadrotor.

    Module frames are yawed so their x axis is tangential to the arm, which
    lets the tilted thrusts reach every force direction. With
    `identity_frames` all modules tilt in the body x-z plane and body-y force
    is unreachable.
    """
    azimuths = [math.pi / 4 + k * math.pi / 2 for k in range(N_ROTORS)]
    positions = [
        (arm_length * math.cos(psi), arm_length * math.sin(psi), 0.0) for psi in azimuths
    ]
    if identity_frames:
        frames = [np.eye(3)] * N_ROTORS
    else:
        frames = [_yaw(psi + math.pi / 2) for psi in azimuths]
    return RotorGeometry(
        positions=positions,
        frames=frames,
        spin_dirs=spin_dirs,
        counter_torque_coeff=counter_torque_coeff,
        max_thrust=max_thrust,
    )


@dataclass(frozen=True)
class WrenchVector:
    force: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "force", _frozen_array(self.force, (3,)))
        object.__setattr__(self, "torque", _frozen_array(self.torque, (3,)))
        if not (np.all(np.isfinite(self.force)) and np.all(np.isfinite(self.torque))):
            raise ValueError("wrench components must be finite")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    @classmethod
    def from_vector(cls, values: Sequence[float]) -> "WrenchVector":
        values = np.asarray(values, dtype=float)
        if values.shape != (6,):
            raise ValueError(f"wrench needs 6 components, got {values.shape}")
        return cls(force=values[:3], torque=values[3:])

    @classmethod
    def zero(cls) -> "WrenchVector":
        return cls(force=np.zeros(3), torque=np.zeros(3))

    def scaled(self, factor: float) -> "WrenchVector":
        return WrenchVector(force=self.force * factor, torque=self.torque * factor)


@dataclass(frozen=True)
class ThrustCommand:
    planar: Tuple[float, float]
    magnitude: float
    gimbal: float

    @classmethod
    def from_planar(cls, lam_x: float, lam_z: float) -> "ThrustCommand":
        # Adding 0.0 turns -0.0 into 0.0 so an idle rotor reports a zero gimbal angle.
        lam_x, lam_z = float(lam_x) + 0.0, float(lam_z) + 0.0
        return cls(
            planar=(float(lam_x), float(lam_z)),
            magnitude=math.hypot(lam_x, lam_z),
            gimbal=math.atan2(lam_z, lam_x),
        )


@dataclass(frozen=True)
class ThrustCommandSet:
    commands: Tuple[ThrustCommand, ...]
    saturated: bool = False
    rank: int = 6

    def as_vector(self) -> np.ndarray:
        return np.array([c for command in self.commands for c in command.planar])

    @classmethod
    def from_vector(cls, values: Sequence[float], max_thrust: float = math.inf, rank: int = 6):
        values = np.asarray(values, dtype=float).reshape(N_ROTORS, 2)
        commands = tuple(ThrustCommand.from_planar(x, z) for x, z in values)
        saturated = any(c.magnitude > max_thrust for c in commands)
        return cls(commands=commands, saturated=saturated, rank=rank)

    @property
    def magnitudes(self) -> Tuple[float, ...]:
        return tuple(c.magnitude for c in self.commands)

    @property
    def gimbals(self) -> Tuple[float, ...]:
        return tuple(c.gimbal for c in self.commands)


def effective_direction(geometry: RotorGeometry, index: int) -> np.ndarray:
    """Maps rotor `index`'s planar thrust into the CoG frame (3x2)."""
    if not 0 <= index < N_ROTORS:
        raise IndexError(f"rotor index {index} out of range 0..{N_ROTORS - 1}")
    return geometry.frames[index] @ geometry.projection


def skew(vector: Sequence[float]) -> np.ndarray:
    x, y, z = vector
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def build_wrench_map(geometry: RotorGeometry) -> np.ndarray:
    """The 6x12 map from stacked 3-D rotor thrusts to the CoG wrench."""
    kappa = geometry.counter_torque_coeff
    top = np.hstack([np.eye(3)] * N_ROTORS)
    bottom = np.hstack(
        [
            skew(p) - kappa * sigma * np.eye(3)
            for p, sigma in zip(geometry.positions, geometry.spin_dirs)
        ]
    )
    return np.vstack([top, bottom])


def allocation_matrix(geometry: RotorGeometry) -> np.ndarray:
    """Q times the block diagonal of the rotors' effective directions (6x8)."""
    directions = np.zeros((3 * N_ROTORS, 2 * N_ROTORS))
    for i in range(N_ROTORS):
        directions[3 * i : 3 * i + 3, 2 * i : 2 * i + 2] = effective_direction(geometry, i)
    return build_wrench_map(geometry) @ directions


def _pseudo_inverse(matrix: np.ndarray) -> Tuple[np.ndarray, int]:
    u, singular, vt = np.linalg.svd(matrix, full_matrices=False)
    if singular[0] == 0.0:
        return np.zeros(matrix.T.shape), 0
    rank = int(np.sum(singular > SINGULAR_CUTOFF * singular[0]))
    inverse = vt[:rank].T @ np.diag(1.0 / singular[:rank]) @ u[:, :rank].T
    return inverse, rank


def allocate(
    geometry: RotorGeometry, wrench: WrenchVector, strict: bool = True
) -> ThrustCommandSet:
    """Minimum-norm rotor thrusts that produce `wrench`.

    Args:
        geometry: Rotor layout
        wrench: Desired wrench in the CoG frame
        strict: Raise on a rank-deficient map. When False the least-squares
            minimum-norm solution is returned instead.

    Returns:
        Per-rotor commands; `saturated` is set if any magnitude exceeds the
        geometry's max thrust.

    Raises:
        AllocationRankError: If the map is rank deficient and `strict` is set
    """
    inverse, rank = _pseudo_inverse(allocation_matrix(geometry))
    logger.debug("allocation map rank %d", rank)
    if strict and rank < 6:
        raise AllocationRankError(rank)
    planar = inverse @ wrench.as_vector()
    return ThrustCommandSet.from_vector(planar, geometry.max_thrust, rank=rank)


def reconstruct(geometry: RotorGeometry, commands: ThrustCommandSet) -> WrenchVector:
    return WrenchVector.from_vector(allocation_matrix(geometry) @ commands.as_vector())


def saturate(commands: ThrustCommandSet, max_thrust: float) -> ThrustCommandSet:
    """Scale down every rotor whose magnitude exceeds `max_thrust`, keeping its gimbal angle."""
    clipped = []
    for command in commands.commands:
        if command.magnitude > max_thrust:
            scale = max_thrust / command.magnitude
            x, z = command.planar
            command = ThrustCommand.from_planar(x * scale, z * scale)
        clipped.append(command)
    return ThrustCommandSet(
        commands=tuple(clipped), saturated=commands.saturated, rank=commands.rank
    )
