"""Quaternion and Euler-angle helpers shared by the controller and the simulator.

Quaternions are stored scalar-last (x, y, z, w), the layout scipy uses.
World frame is z-up; pitch is positive nose-up, so the body x axis points
along (cos p cos y, cos p sin y, sin p).
"""

import math
from typing import Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation


def quat_multiply(q: np.ndarray, r: np.ndarray) -> np.ndarray:
    qv, qw = q[:3], q[3]
    rv, rw = r[:3], r[3]
    vector = qw * rv + rw * qv + np.cross(qv, rv)
    return np.array([vector[0], vector[1], vector[2], qw * rw - qv @ rv])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / math.sqrt(q @ q)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    x, y, z, w = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def axis_angle_quat(axis: Sequence[float], angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    half = 0.5 * angle
    return np.append(axis * math.sin(half), math.cos(half))


def rotation_from_euler(roll: float, pitch: float, yaw: float) -> Rotation:
    return Rotation.from_euler("ZYX", [yaw, -pitch, roll])


def quat_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    return rotation_from_euler(roll, pitch, yaw).as_quat()


def euler_angles(q: np.ndarray) -> Tuple[float, float, float]:
    """(roll, pitch, yaw) of a body quaternion.

    At the vertical hang the yaw-roll split is undefined; roll is then
    reported as zero.
    """
    m = quat_to_matrix(q)
    pitch = math.asin(max(-1.0, min(1.0, m[2, 0])))
    if math.hypot(m[0, 0], m[1, 0]) < 1e-9:
        return 0.0, pitch, math.atan2(-m[0, 1], m[1, 1])
    return math.atan2(m[2, 1], m[2, 2]), pitch, math.atan2(m[1, 0], m[0, 0])


def body_x_axis(q: np.ndarray) -> np.ndarray:
    return quat_to_matrix(q)[:, 0]


def attitude_error(q: np.ndarray, desired: Rotation) -> np.ndarray:
    """Rotation vector, in the body frame, that takes the current attitude to `desired`.

    For small errors the components are the roll, pitch and yaw errors about
    the body axes; unlike Euler differences it stays regular through the
    vertical hang.
    """
    return (Rotation.from_quat(q).inv() * desired).as_rotvec()
