#!/usr/bin/env python
"""Tests for the perching controller and its phase machine."""
import math

import numpy as np
import pytest

from attitude import attitude_error, quat_from_euler, rotation_from_euler
from flight_controller import (
    ControllerState,
    Maneuver,
    PerchEvent,
    PerchPhase,
    PhaseViolationError,
    PidGains,
    TargetPose,
    Thresholds,
    Waypoint,
    commanded_wrench,
    detachment_target,
    integral_policy,
    landing_trigger,
    maneuver_target,
    phase_step,
    pid_wrench,
    pitch_sweep,
    waypoint_target,
)
from rigid_body_sim import BodyState
from rotor_allocation import WrenchVector

MASS = 2.5
G = 9.81


def body(position=(0.0, 0.0, 0.0), pitch=0.0, velocity=(0.0, 0.0, 0.0), omega=(0.0, 0.0, 0.0), t=0.0):
    return BodyState(
        position=position,
        velocity=velocity,
        orientation=quat_from_euler(0.0, pitch, 0.0),
        angular_velocity=omega,
        time=t,
    )


def test_pid_zero_error_is_gravity_feedforward():
    ctrl = ControllerState()
    wrench = pid_wrench(PidGains.default(), ctrl, body(), TargetPose(np.zeros(3)), 0.01, MASS, G)
    assert wrench.as_vector() == pytest.approx([0, 0, MASS * G, 0, 0, 0])


def test_pid_proportional_z():
    gains = PidGains(kp=[0, 0, 6.0, 0, 0, 0], ki=[0] * 6, kd=[0] * 6, integral_clamp=[1] * 6)
    wrench = pid_wrench(gains, ControllerState(), body(), TargetPose(np.array([0, 0, 0.3])), 0.01, MASS, G)
    assert wrench.force[2] == pytest.approx(MASS * G + 6.0 * 0.3)


def test_pid_force_is_expressed_in_body_frame():
    """A level target seen from a body pitched 90 degrees puts the weight on body x."""
    ctrl = ControllerState()
    state = body(pitch=math.pi / 2)
    gains = PidGains(kp=[0] * 6, ki=[0] * 6, kd=[0] * 6, integral_clamp=[1] * 6)
    wrench = pid_wrench(gains, ctrl, state, TargetPose(np.zeros(3), pitch=math.pi / 2), 0.01, MASS, G)
    assert wrench.force == pytest.approx([MASS * G, 0, 0], abs=1e-9)


def test_pd_step_response_overshoot():
    """Unit point mass under the default PD position gains overshoots by at most 5%."""
    default = PidGains.default()
    gains = PidGains(kp=default.kp, ki=[0] * 6, kd=default.kd, integral_clamp=default.integral_clamp)
    ctrl = ControllerState()
    dt = 0.001
    x, v = 0.0, 0.0
    peak = 0.0
    for k in range(10_000):
        state = body(position=(x, 0.0, 0.0), velocity=(v, 0.0, 0.0), t=k * dt)
        wrench = pid_wrench(gains, ctrl, state, TargetPose(np.array([1.0, 0.0, 0.0])), dt, 1.0, G)
        v += wrench.force[0] * dt
        x += v * dt
        peak = max(peak, x)
    assert x == pytest.approx(1.0, abs=1e-3)
    assert peak <= 1.05


def test_integral_accumulators_respect_clamp():
    gains = PidGains.default()
    ctrl = ControllerState()
    target = TargetPose(np.array([100.0, -100.0, 100.0]), roll=1.0, pitch=0.5, yaw=-1.0)
    for _ in range(1000):
        pid_wrench(gains, ctrl, body(), target, 0.01, MASS, G)
        assert np.all(np.abs(ctrl.integral) <= gains.integral_clamp + 1e-15)


def test_integral_policy_masks():
    assert integral_policy(PerchPhase.TAKEOFF).tolist() == [False, False, True, False, False, False]
    assert integral_policy(PerchPhase.FREE_FLIGHT).all()
    assert integral_policy(PerchPhase.DETACHED).all()
    assert integral_policy(PerchPhase.GRASPED).all()


def test_takeoff_keeps_only_z_integral():
    ctrl = ControllerState(phase=PerchPhase.TAKEOFF)
    target = TargetPose(np.array([1.0, 1.0, 1.0]), roll=0.2, pitch=0.2, yaw=0.2)
    for _ in range(20):
        pid_wrench(PidGains.default(), ctrl, body(), target, 0.01, MASS, G)
        assert ctrl.integral[2] > 0
        assert np.all(ctrl.integral[[0, 1, 3, 4, 5]] == 0.0)


def test_invalid_gains():
    with pytest.raises(ValueError):
        PidGains(kp=[-1] + [0] * 5, ki=[0] * 6, kd=[0] * 6, integral_clamp=[1] * 6)
    with pytest.raises(ValueError):
        PidGains(kp=[0] * 6, ki=[0] * 6, kd=[0] * 6, integral_clamp=[0] * 6)
    with pytest.raises(ValueError):
        pid_wrench(PidGains.default(), ControllerState(), body(), TargetPose(np.zeros(3)), 0.0, MASS, G)


def test_attitude_error_small_pitch():
    delta = 0.01
    error = attitude_error(quat_from_euler(0, 0, 0), rotation_from_euler(0, delta, 0))
    assert np.linalg.norm(error) == pytest.approx(delta)
    assert abs(error[1]) == pytest.approx(delta)


def test_landing_trigger_basic_cases():
    still = [body(t=k * 0.01) for k in range(60)]
    assert landing_trigger(still, 0.05, 0.1, 0.5)
    moving = [body(velocity=(0.1, 0, 0), t=k * 0.01) for k in range(60)]
    assert not landing_trigger(moving, 0.05, 0.1, 0.5)
    assert not landing_trigger(still[:20], 0.05, 0.1, 0.5)
    assert not landing_trigger(still, 0.05, 0.1, 0.5, phase=PerchPhase.HANG)
    assert not landing_trigger([], 0.05, 0.1, 0.5)


def test_landing_trigger_fires_after_hold_on_decay():
    """A decaying swing crossing the thresholds at t0 triggers at t0 + hold."""
    dt, hold, v_thresh = 0.01, 0.5, 0.05
    history = []
    crossing = None
    fired = None
    for k in range(400):
        t = k * dt
        speed = 0.5 * math.exp(-t)
        if crossing is None and speed < v_thresh:
            crossing = t
        history.append(body(velocity=(speed, 0, 0), t=t))
        if landing_trigger(history, v_thresh, 0.1, hold):
            fired = t
            break
    assert crossing is not None
    assert fired == pytest.approx(crossing + hold, abs=dt + 1e-9)


def test_detachment_target_examples():
    r_bottom = np.array([0.0, 0.0, 1.0])
    assert detachment_target(r_bottom, 0.4, 0.4, 0.3, 0.5) == pytest.approx(r_bottom)
    assert detachment_target(r_bottom, math.pi / 2, 0.0, 0.0, 0.5) == pytest.approx([-0.5, 0.0, 0.5])


def test_detachment_target_keeps_hand_point():
    rng = np.random.default_rng(17)

    def u(theta, psi):
        return np.array([math.cos(theta) * math.cos(psi), math.cos(theta) * math.sin(psi), -math.sin(theta)])

    for _ in range(10_000):
        pitch, pitch_des, yaw = rng.uniform(-math.pi, math.pi, size=3)
        l_h = rng.uniform(0.01, 1.0)
        r_bottom = rng.uniform(-1.0, 1.0, size=3)
        r_des = detachment_target(r_bottom, pitch, pitch_des, yaw, l_h)
        hand_before = r_bottom + l_h * u(pitch, yaw)
        hand_after = r_des + l_h * u(pitch_des, yaw)
        assert np.max(np.abs(hand_after - hand_before)) <= 1e-12


def test_pitch_sweep_profile():
    assert pitch_sweep(0.0, 1.0, 2.0, 0.5, 1.5) == 0.5
    assert pitch_sweep(2.0, 1.0, 2.0, 0.5, 1.5) == pytest.approx(1.0)
    assert pitch_sweep(5.0, 1.0, 2.0, 0.5, 1.5) == 1.5
    assert pitch_sweep(1.0, 1.0, 0.0, 0.5, 1.5) == 0.5


def test_waypoint_interpolation():
    waypoints = [
        Waypoint(0.0, np.array([0.0, 0.0, 1.0]), pitch=0.0),
        Waypoint(2.0, np.array([2.0, 0.0, 1.0]), pitch=0.4),
    ]
    mid = waypoint_target(waypoints, 1.0)
    assert mid.position == pytest.approx([1.0, 0.0, 1.0])
    assert mid.pitch == pytest.approx(0.2)
    assert waypoint_target(waypoints, 9.0).position == pytest.approx([2.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        waypoint_target([], 0.0)


def test_commanded_wrench_cutoff_and_ramp():
    maneuver = Maneuver(takeoff_ramp=1.0)
    wrench = WrenchVector(force=[0, 0, 20.0], torque=[0.1, 0, 0])
    hang = ControllerState(phase=PerchPhase.HANG, landed_at=0.0)
    assert np.all(commanded_wrench(hang, wrench, 0.3, maneuver).as_vector() == 0.0)

    takeoff = ControllerState(phase=PerchPhase.TAKEOFF, takeoff_at=2.0)
    assert commanded_wrench(takeoff, wrench, 2.5, maneuver).force[2] == pytest.approx(10.0)
    assert commanded_wrench(takeoff, wrench, 4.0, maneuver).force[2] == pytest.approx(20.0)

    ramp = Maneuver(landing_mode="ramp", landing_ramp=0.5)
    assert commanded_wrench(hang, wrench, 0.25, ramp).force[2] == pytest.approx(10.0)
    assert commanded_wrench(hang, wrench, 1.0, ramp).force[2] == 0.0


def test_full_event_sequence_visits_every_phase_once():
    thresholds = Thresholds()
    maneuver = Maneuver(hand_offset=0.3, takeoff_ramp=1.0, takeoff_sweep=3.0)
    ctrl = ControllerState(l_h=0.3)

    step = phase_step(ctrl, body(t=0.1), {PerchEvent.APPROACH_COMMAND}, thresholds, maneuver)
    assert step.phase is PerchPhase.APPROACH
    step = phase_step(ctrl, body(t=2.0, pitch=0.5), {PerchEvent.CAPTURE}, thresholds, maneuver)
    assert step.phase is PerchPhase.CONTACT
    step = phase_step(ctrl, body(t=2.01, pitch=0.5), {PerchEvent.GRASP_SUCCESS}, thresholds, maneuver)
    assert step.phase is PerchPhase.GRASPED
    assert step.effects.attach
    assert ctrl.reference_pitch == pytest.approx(0.5)

    step = phase_step(ctrl, body(t=5.0, pitch=math.pi / 2), {PerchEvent.LANDING}, thresholds, maneuver)
    assert step.phase is PerchPhase.HANG
    assert step.effects.thrust_cutoff

    ctrl.integral = np.ones(6) * 0.1
    bottom = np.array([0.0, 0.0, 1.7])
    step = phase_step(
        ctrl, body(position=bottom, t=6.0, pitch=math.pi / 2), {PerchEvent.TAKEOFF_COMMAND}, thresholds, maneuver
    )
    assert step.phase is PerchPhase.TAKEOFF
    assert ctrl.r_bottom == pytest.approx(bottom)
    assert ctrl.detach_target == pytest.approx(detachment_target(bottom, -math.pi / 2, 0.0, 0.0, 0.3))
    assert ctrl.detach_target == pytest.approx([-0.3, 0.0, 2.0])
    assert ctrl.integral.tolist() == [0.0, 0.0, 0.1, 0.0, 0.0, 0.0]
    assert ctrl.prev_error is None

    # Fingers stay closed until the sweep has finished and the body is level.
    step = phase_step(ctrl, body(t=8.0, pitch=0.0), set(), thresholds, maneuver)
    assert not step.effects.open_fingers
    step = phase_step(ctrl, body(t=10.0, pitch=0.3), set(), thresholds, maneuver)
    assert not step.effects.open_fingers
    step = phase_step(ctrl, body(t=10.1, pitch=0.01), set(), thresholds, maneuver)
    assert step.effects.open_fingers

    step = phase_step(ctrl, body(t=10.11, pitch=0.01), {PerchEvent.RELEASE}, thresholds, maneuver)
    assert step.phase is PerchPhase.DETACHED
    assert step.effects.detach
    assert np.all(ctrl.integral == 0.0)

    phases = [tr.target for tr in ctrl.transitions]
    assert phases == [
        PerchPhase.APPROACH,
        PerchPhase.CONTACT,
        PerchPhase.GRASPED,
        PerchPhase.HANG,
        PerchPhase.TAKEOFF,
        PerchPhase.DETACHED,
    ]
    assert [tr.trigger for tr in ctrl.transitions][3] == "LANDING"


def test_out_of_order_events_are_rejected():
    thresholds, maneuver = Thresholds(), Maneuver()
    ctrl = ControllerState()
    with pytest.raises(PhaseViolationError) as excinfo:
        phase_step(ctrl, body(), {PerchEvent.LANDING}, thresholds, maneuver)
    assert excinfo.value.phase is PerchPhase.FREE_FLIGHT
    assert ctrl.phase is PerchPhase.FREE_FLIGHT

    takeoff = ControllerState(phase=PerchPhase.TAKEOFF, takeoff_at=0.0)
    with pytest.raises(PhaseViolationError):
        phase_step(takeoff, body(t=1.0), {PerchEvent.RELEASE}, thresholds, maneuver)
    takeoff.fingers_open_commanded = True
    with pytest.raises(PhaseViolationError):
        phase_step(takeoff, body(t=1.0, pitch=0.5), {PerchEvent.RELEASE}, thresholds, maneuver)


def test_maneuver_target_keeps_hand_fixed_during_swing():
    maneuver = Maneuver(hand_offset=0.3, swing_duration=2.0)
    ctrl = ControllerState(
        phase=PerchPhase.GRASPED,
        l_h=0.3,
        reference_position=np.array([-0.3 * math.cos(0.5), 0.0, 2.0 - 0.3 * math.sin(0.5)]),
        reference_pitch=0.5,
        grasped_at=0.0,
    )
    default = TargetPose(np.zeros(3))
    for t in (0.0, 0.7, 1.3, 2.0, 3.0):
        target = maneuver_target(ctrl, t, maneuver, default)
        hand = target.position + 0.3 * np.array([math.cos(target.pitch), 0.0, math.sin(target.pitch)])
        assert hand == pytest.approx([0.0, 0.0, 2.0], abs=1e-12)
    assert maneuver_target(ctrl, 3.0, maneuver, default).pitch == pytest.approx(math.pi / 2)
