#!/usr/bin/env python
"""Tests for the tilt-rotor wrench allocation."""
import math

import numpy as np
import pytest
from scipy.linalg import null_space
from scipy.spatial.transform import Rotation

from rotor_allocation import (
    AllocationRankError,
    RotorGeometry,
    ThrustCommandSet,
    WrenchVector,
    allocate,
    allocation_matrix,
    build_wrench_map,
    default_geometry,
    effective_direction,
    reconstruct,
    saturate,
)

MG = 2.5 * 9.81


def random_geometry(rng):
    """A random rotor layout whose allocation map has full rank."""
    while True:
        geometry = RotorGeometry(
            positions=rng.uniform(-0.4, 0.4, size=(4, 3)),
            frames=Rotation.from_quat(rng.normal(size=(4, 4))).as_matrix(),
            spin_dirs=rng.choice([-1.0, 1.0], size=4),
            counter_torque_coeff=rng.uniform(0.005, 0.05),
        )
        if np.linalg.matrix_rank(allocation_matrix(geometry)) == 6:
            return geometry


def test_default_geometry_is_full_rank():
    assert allocation_matrix(default_geometry()).shape == (6, 8)
    assert np.linalg.matrix_rank(allocation_matrix(default_geometry())) == 6
    assert np.linalg.matrix_rank(allocation_matrix(default_geometry(identity_frames=True))) == 5


def test_hover_wrench_gives_equal_thrusts():
    geometry = default_geometry()
    commands = allocate(geometry, WrenchVector(force=[0, 0, MG], torque=[0, 0, 0]))
    assert commands.rank == 6
    assert commands.magnitudes == pytest.approx((MG / 4,) * 4)
    assert commands.gimbals == pytest.approx((math.pi / 2,) * 4)
    assert not commands.saturated


def test_planar_modules_hover_and_forward_force():
    """With every module tilting in the body x-z plane body-y force is unreachable."""
    geometry = default_geometry(identity_frames=True)
    with pytest.raises(AllocationRankError) as excinfo:
        allocate(geometry, WrenchVector(force=[0, 0, MG], torque=[0, 0, 0]))
    assert excinfo.value.rank == 5

    hover = allocate(geometry, WrenchVector(force=[0, 0, MG], torque=[0, 0, 0]), strict=False)
    assert hover.rank == 5
    for command in hover.commands:
        assert command.planar == pytest.approx((0.0, MG / 4), abs=1e-9)

    forward = allocate(geometry, WrenchVector(force=[4.0, 0, 0], torque=[0, 0, 0]), strict=False)
    for command in forward.commands:
        assert command.planar == pytest.approx((1.0, 0.0), abs=1e-9)
        assert command.gimbal == pytest.approx(0.0, abs=1e-9)


def test_zero_wrench():
    commands = allocate(default_geometry(), WrenchVector.zero())
    assert commands.magnitudes == (0.0, 0.0, 0.0, 0.0)
    assert commands.gimbals == (0.0, 0.0, 0.0, 0.0)


def test_round_trip_on_random_geometries():
    """reconstruct(allocate(W)) reproduces W on full-rank layouts."""
    rng = np.random.default_rng(11)
    for _ in range(20):
        geometry = random_geometry(rng)
        for _ in range(50):
            wrench = WrenchVector.from_vector(rng.normal(scale=10.0, size=6))
            back = reconstruct(geometry, allocate(geometry, wrench))
            error = np.linalg.norm(back.as_vector() - wrench.as_vector())
            assert error <= 1e-9 * (1 + np.linalg.norm(wrench.as_vector()))


def test_allocation_is_minimum_norm():
    """Adding any null-space component never shortens the thrust vector."""
    rng = np.random.default_rng(5)
    for _ in range(20):
        geometry = random_geometry(rng)
        basis = null_space(allocation_matrix(geometry))
        assert basis.shape == (8, 2)
        wrench = WrenchVector.from_vector(rng.normal(scale=10.0, size=6))
        thrusts = allocate(geometry, wrench).as_vector()
        for _ in range(50):
            perturbed = thrusts + basis @ rng.normal(size=2)
            assert np.linalg.norm(perturbed) >= np.linalg.norm(thrusts) - 1e-12


def test_saturation_flag_and_clipping():
    geometry = default_geometry()
    commands = allocate(geometry, WrenchVector(force=[0, 0, 500.0], torque=[0, 0, 0]))
    assert commands.saturated
    clipped = saturate(commands, geometry.max_thrust)
    assert max(clipped.magnitudes) == pytest.approx(geometry.max_thrust)
    assert clipped.gimbals == pytest.approx(commands.gimbals)


def test_command_vector_round_trip():
    values = np.array([1.0, 0.0, 0.0, 2.0, -1.0, 1.0, 3.0, 4.0])
    commands = ThrustCommandSet.from_vector(values, max_thrust=4.0)
    assert np.array_equal(commands.as_vector(), values)
    assert commands.magnitudes[3] == pytest.approx(5.0)
    assert commands.saturated


def test_effective_direction_and_validation():
    geometry = default_geometry(identity_frames=True)
    assert np.array_equal(effective_direction(geometry, 0), [[1, 0], [0, 0], [0, 1]])
    with pytest.raises(IndexError):
        effective_direction(geometry, 4)
    with pytest.raises(ValueError):
        RotorGeometry(
            positions=np.zeros((4, 3)),
            frames=[np.diag([1.0, 1.0, -1.0])] * 4,
            spin_dirs=[1, -1, 1, -1],
        )
    with pytest.raises(ValueError):
        WrenchVector.from_vector([1.0, 2.0])


def test_allocation_is_linear():
    geometry = default_geometry()
    rng = np.random.default_rng(9)
    for _ in range(100):
        w1, w2 = rng.normal(scale=10.0, size=(2, 6))
        a, b = rng.normal(size=2)
        combined = allocate(geometry, WrenchVector.from_vector(a * w1 + b * w2)).as_vector()
        parts = a * allocate(geometry, WrenchVector.from_vector(w1)).as_vector() + b * allocate(
            geometry, WrenchVector.from_vector(w2)
        ).as_vector()
        assert np.linalg.norm(combined - parts) <= 1e-9 * (1 + np.linalg.norm(parts))


def test_gimbal_and_magnitude_reproduce_planar_thrust():
    geometry = default_geometry()
    rng = np.random.default_rng(21)
    for _ in range(100):
        commands = allocate(geometry, WrenchVector.from_vector(rng.normal(scale=10.0, size=6)))
        for command in commands.commands:
            lam_x, lam_z = command.planar
            assert command.magnitude * math.cos(command.gimbal) == pytest.approx(lam_x, abs=1e-12)
            assert command.magnitude * math.sin(command.gimbal) == pytest.approx(lam_z, abs=1e-12)


def test_wrench_map_lever_and_counter_torque():
    frames = [np.eye(3)] * 4
    thrust = np.zeros(12)
    thrust[2] = 1.0

    lever = RotorGeometry(
        positions=[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
        frames=frames,
        spin_dirs=[1, -1, 1, -1],
        counter_torque_coeff=0.0,
    )
    assert build_wrench_map(lever) @ thrust == pytest.approx([0.0, 0.0, 1.0, 0.0, -1.0, 0.0])

    spinning = RotorGeometry(
        positions=np.zeros((4, 3)), frames=frames, spin_dirs=[1, -1, 1, -1], counter_torque_coeff=0.02
    )
    assert build_wrench_map(spinning) @ thrust == pytest.approx([0.0, 0.0, 1.0, 0.0, 0.0, -0.02])
    assert build_wrench_map(default_geometry()).shape == (6, 12)
