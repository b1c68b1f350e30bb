import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from skidnav.kinematics import (
    BodyTwist,
    Pose2,
    RobotGeometry,
    WheelRates,
    discrete_step,
    discrete_step_jacobians,
    drive_jacobian,
    integrate_pose,
    twist_to_wheels,
    twist_to_world,
    velocity,
    wheel_to_twist,
    wrap_angle,
)

GEOM = RobotGeometry(wheel_radius=0.5, half_track=1.0)


def test_symmetric_rates_pure_translation():
    tw = wheel_to_twist(WheelRates(2.0, 2.0), GEOM)
    assert tw == BodyTwist(1.0, 0.0, 0.0)


def test_antisymmetric_rates_pure_rotation():
    tw = wheel_to_twist(WheelRates(2.0, -2.0), GEOM)
    assert tw.v_x == 0.0
    assert tw.omega_z == 1.0


def test_wheel_to_twist_matches_jacobian_product():
    # Independently constructed J, r=0.5 c=0.8, rates (1.0, 0.5).
    geom = RobotGeometry(0.5, 0.8)
    tw = wheel_to_twist(WheelRates(1.0, 0.5), geom)
    expected = drive_jacobian(geom) @ np.array([1.0, 0.5])
    assert tw.v_x == pytest.approx(0.375, abs=1e-15)
    assert tw.omega_z == pytest.approx(0.15625, abs=1e-15)
    np.testing.assert_allclose([tw.v_x, tw.v_y, tw.omega_z], expected, atol=1e-15)


def test_twist_to_wheels_round_trip():
    geom = RobotGeometry(0.37, 0.62)
    rates = WheelRates(0.71, 0.13)
    tw = wheel_to_twist(rates, geom)
    back = twist_to_wheels(tw.v_x, tw.omega_z, geom)
    assert back.right == pytest.approx(rates.right, abs=1e-14)
    assert back.left == pytest.approx(rates.left, abs=1e-14)


@given(
    a=st.floats(-5, 5),
    b=st.floats(-5, 5),
    r1=st.floats(-3, 3),
    l1=st.floats(-3, 3),
    r2=st.floats(-3, 3),
    l2=st.floats(-3, 3),
)
def test_wheel_to_twist_linearity(a, b, r1, l1, r2, l2):
    lhs = wheel_to_twist(WheelRates(a * r1 + b * r2, a * l1 + b * l2), GEOM)
    t1 = wheel_to_twist(WheelRates(r1, l1), GEOM)
    t2 = wheel_to_twist(WheelRates(r2, l2), GEOM)
    assert lhs.v_x == pytest.approx(a * t1.v_x + b * t2.v_x, abs=1e-9)
    assert lhs.omega_z == pytest.approx(a * t1.omega_z + b * t2.omega_z, abs=1e-9)


def test_world_velocity_identity_rotation():
    vel = twist_to_world(Pose2(0, 0, 0.0), BodyTwist(1.0, 0.0, 0.2))
    np.testing.assert_allclose(vel, [1.0, 0.0, 0.2], atol=1e-15)


def test_world_velocity_quarter_turn():
    vel = twist_to_world(Pose2(0, 0, math.pi / 2), BodyTwist(1.0, 0.0, 0.0))
    np.testing.assert_allclose(vel, [0.0, 1.0, 0.0], atol=1e-12)


def test_world_velocity_rotation_matrix_value():
    vel = twist_to_world(Pose2(3.0, -1.0, 0.3), BodyTwist(0.8, 0.0, 0.1))
    np.testing.assert_allclose(
        vel, [0.8 * math.cos(0.3), 0.8 * math.sin(0.3), 0.1], atol=1e-14
    )


def test_world_velocity_finite_difference_cross_check():
    # d/dt of the integrated pose at t=0 equals the adjoint-carried twist.
    pose = Pose2(0.4, -0.2, 0.7)
    rates = WheelRates(1.2, 0.4)
    h = 1e-7
    ahead = integrate_pose(pose, rates, GEOM, h, scheme="rk4")
    fd = (ahead.as_array() - pose.as_array()) / h
    vel = twist_to_world(pose, wheel_to_twist(rates, GEOM))
    np.testing.assert_allclose(fd, vel, atol=1e-6)


@given(
    yaw=st.floats(-math.pi, math.pi),
    vx=st.floats(-4, 4),
    vy=st.floats(-4, 4),
    wz=st.floats(-3, 3),
)
def test_world_velocity_preserves_linear_speed(yaw, vx, vy, wz):
    vel = twist_to_world(Pose2(0, 0, yaw), BodyTwist(vx, vy, wz))
    assert math.hypot(vel[0], vel[1]) == pytest.approx(math.hypot(vx, vy), abs=1e-9)


@given(st.floats(-50, 50))
def test_wrap_angle_range_and_equivalence(angle):
    w = wrap_angle(angle)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.sin(w), math.sin(angle), abs_tol=1e-9)
    assert math.isclose(math.cos(w), math.cos(angle), abs_tol=1e-9)


def test_wrap_angle_boundary():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)


def test_integrate_zero_rates_no_motion():
    pose = Pose2(1.0, 2.0, 0.5)
    for scheme in ("euler", "rk4"):
        out = integrate_pose(pose, WheelRates(0.0, 0.0), GEOM, 0.37, scheme=scheme)
        assert out == pose


def test_integrate_straight_euler():
    out = integrate_pose(Pose2(0, 0, 0), WheelRates(2.0, 2.0), GEOM, 0.1, "euler")
    assert out.x == pytest.approx(0.1, abs=1e-15)
    assert out.y == 0.0
    assert out.yaw == 0.0


def test_integrate_rejects_bad_inputs():
    with pytest.raises(ValueError):
        integrate_pose(Pose2(0, 0, 0), WheelRates(1, 1), GEOM, 0.0)
    with pytest.raises(ValueError):
        integrate_pose(Pose2(0, 0, 0), WheelRates(1, 1), GEOM, 0.1, scheme="heun")
    with pytest.raises(ValueError):
        RobotGeometry(0.0, 1.0)


def _fine_euler(pose, rates, geom, dt, substeps):
    x = pose.as_array()
    u = np.array(rates)
    h = dt / substeps
    for _ in range(substeps):
        x = x + h * velocity(x, u, geom)
    return x


def test_rk4_matches_fine_euler_oracle():
    # Gentle constant turn over 1 s: RK4 within 1e-6 m of a 1000-substep Euler.
    pose = Pose2(0, 0, 0.2)
    rates = WheelRates(0.51, 0.49)
    oracle = _fine_euler(pose, rates, GEOM, 1.0, 1000)
    out = integrate_pose(pose, rates, GEOM, 1.0, "rk4")
    assert abs(out.x - oracle[0]) < 1e-6
    assert abs(out.y - oracle[1]) < 1e-6


def _exact_arc(pose, rates, geom, t):
    # Closed-form solution of the constant-twist ODE (circular arc).
    tw = wheel_to_twist(rates, geom)
    v, w = tw.v_x, tw.omega_z
    yaw = pose.yaw + w * t
    x = pose.x + (v / w) * (math.sin(yaw) - math.sin(pose.yaw))
    y = pose.y - (v / w) * (math.cos(yaw) - math.cos(pose.yaw))
    return np.array([x, y, yaw])


def test_rk4_fourth_order_convergence():
    # Error vs the closed-form arc shrinks ~dt^4.
    pose = Pose2(0, 0, 0.3)
    rates = WheelRates(3.0, 0.5)
    exact = _exact_arc(pose, rates, GEOM, 1.0)

    def rk4_error(n_steps):
        x = pose
        for _ in range(n_steps):
            x = integrate_pose(x, rates, GEOM, 1.0 / n_steps, "rk4")
        return np.linalg.norm(x.as_array()[:2] - exact[:2])

    e1, e2, e3 = rk4_error(2), rk4_error(4), rk4_error(8)
    assert e2 == pytest.approx(e1 / 16.0, rel=0.2)
    assert e3 == pytest.approx(e2 / 16.0, rel=0.2)


def test_constant_twist_traces_circular_arc():
    # Radius of the traced circle equals v_x / omega_z.
    rates = WheelRates(1.6, 0.4)
    tw = wheel_to_twist(rates, GEOM)
    radius = tw.v_x / tw.omega_z
    pose = Pose2(0, 0, 0)
    center = np.array([0.0, radius])
    x = pose
    for _ in range(500):
        x = integrate_pose(x, rates, GEOM, 0.01, "rk4")
        dist = np.linalg.norm(np.array([x.x, x.y]) - center)
        assert dist == pytest.approx(abs(radius), abs=1e-6)


@pytest.mark.parametrize("scheme", ["euler", "rk4"])
def test_step_jacobians_match_finite_differences(scheme):
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = rng.uniform(-2, 2, 3)
        u = rng.uniform(-2, 2, 2)
        dt = 0.05
        ax, au = discrete_step_jacobians(x, u, GEOM, dt, scheme)
        h = 1e-6
        fd_x = np.zeros((3, 3))
        for j in range(3):
            dxp = x.copy()
            dxm = x.copy()
            dxp[j] += h
            dxm[j] -= h
            fd_x[:, j] = (
                discrete_step(dxp, u, GEOM, dt, scheme)
                - discrete_step(dxm, u, GEOM, dt, scheme)
            ) / (2 * h)
        fd_u = np.zeros((3, 2))
        for j in range(2):
            dup = u.copy()
            dum = u.copy()
            dup[j] += h
            dum[j] -= h
            fd_u[:, j] = (
                discrete_step(x, dup, GEOM, dt, scheme)
                - discrete_step(x, dum, GEOM, dt, scheme)
            ) / (2 * h)
        np.testing.assert_allclose(ax, fd_x, atol=1e-8)
        np.testing.assert_allclose(au, fd_u, atol=1e-8)
