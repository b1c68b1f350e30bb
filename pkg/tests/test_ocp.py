import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skidnav.kinematics import RobotGeometry, WheelRates, discrete_step
from skidnav.ocp import (
    ConfigurationError,
    OcpConfig,
    batch_step,
    batch_step_jacobians,
    batch_velocity,
    constraint_violations,
    control_slice,
    cost,
    cost_gradient,
    n_vars,
    pack_decision,
    shooting_defects,
    state_slice,
    transcribe,
    unpack_decision,
)

GEOM = RobotGeometry(0.8, 1.1)


def _straight_refs(n, v=0.4, dt=0.05):
    ts = np.arange(n + 1) * dt
    poses = np.column_stack([v * ts, np.zeros(n + 1), np.zeros(n + 1)])
    vels = np.column_stack([np.full(n + 1, v), np.zeros(n + 1), np.zeros(n + 1)])
    return poses, vels


def _random_instance(rng, horizon=5, with_vel=False):
    qv = tuple(rng.uniform(0.5, 2.0, 3)) if with_vel else (0.0, 0.0, 0.0)
    cfg = OcpConfig(
        horizon=horizon,
        dt=0.05,
        q_vel=qv,
        q_vel_terminal=qv,
        scheme=rng.choice(["euler", "rk4"]),
    )
    poses, vels = _straight_refs(horizon)
    poses += rng.normal(0, 0.2, poses.shape)
    vels += rng.normal(0, 0.1, vels.shape)
    nlp = transcribe(
        cfg, GEOM, poses, vels, rng.normal(0, 0.3, 3), rng.uniform(0, 0.5, 2)
    )
    z = rng.normal(0, 0.5, n_vars(horizon))
    return nlp, z


@pytest.mark.parametrize("horizon", [2, 5, 20, 50])
def test_decision_vector_length(horizon):
    cfg = OcpConfig(horizon=horizon)
    poses, vels = _straight_refs(horizon)
    nlp = transcribe(cfg, GEOM, poses, vels, np.zeros(3), np.zeros(2))
    assert n_vars(horizon) == 5 * horizon + 3
    assert nlp.lb.size == 5 * horizon + 3


@given(st.integers(2, 40), st.integers(0, 2**31 - 1))
@settings(max_examples=40)
def test_pack_unpack_bijection(horizon, seed):
    rng = np.random.default_rng(seed)
    states = rng.normal(size=(horizon + 1, 3))
    controls = rng.normal(size=(horizon, 2))
    z = pack_decision(states, controls)
    assert z.size == 5 * horizon + 3
    s2, c2 = unpack_decision(z, horizon)
    np.testing.assert_array_equal(s2, states)
    np.testing.assert_array_equal(c2, controls)
    np.testing.assert_array_equal(pack_decision(s2, c2), z)


def test_slices_tile_the_vector():
    horizon = 7
    covered = np.zeros(n_vars(horizon), dtype=int)
    for k in range(horizon):
        covered[state_slice(k)] += 1
        covered[control_slice(k)] += 1
    covered[state_slice(horizon)] += 1
    assert np.all(covered == 1)


def test_reference_too_short_is_configuration_error():
    cfg = OcpConfig(horizon=20)
    poses, vels = _straight_refs(10)
    with pytest.raises(ConfigurationError):
        transcribe(cfg, GEOM, poses, vels, np.zeros(3), np.zeros(2))


def test_stage0_pinned_to_measurements():
    cfg = OcpConfig(horizon=4)
    poses, vels = _straight_refs(4)
    pose = np.array([0.3, -0.2, 0.1])
    rates = np.array([0.2, 0.3])
    nlp = transcribe(cfg, GEOM, poses, vels, pose, rates)
    np.testing.assert_array_equal(nlp.lb[state_slice(0)], pose)
    np.testing.assert_array_equal(nlp.ub[state_slice(0)], pose)
    np.testing.assert_array_equal(nlp.lb[control_slice(0)], rates)
    np.testing.assert_array_equal(nlp.ub[control_slice(0)], rates)


def test_consistent_reference_gives_pure_effort_cost():
    # Measurements exactly on the reference, controls consistent: the cost
    # reduces to the control-effort term alone.
    horizon = 6
    cfg = OcpConfig(horizon=horizon, scheme="euler")
    v = 0.4
    poses, vels = _straight_refs(horizon, v=v)
    rates = np.full(2, v / GEOM.wheel_radius)
    nlp = transcribe(cfg, GEOM, poses, vels, poses[0], rates)
    states = poses.copy()
    controls = np.tile(rates, (horizon, 1))
    z = pack_decision(states, controls)
    np.testing.assert_allclose(shooting_defects(nlp, z), 0.0, atol=1e-12)
    expected_effort = 0.5 * (horizon - 1) * np.sum(0.2 * rates**2)
    assert cost(nlp, z) == pytest.approx(expected_effort, abs=1e-12)


def test_yaw_branch_alignment():
    horizon = 4
    cfg = OcpConfig(horizon=horizon)
    poses, vels = _straight_refs(horizon)
    poses[:, 2] = np.pi - 0.01  # reference heading near the wrap seam
    pose_msr = np.array([0.0, 0.0, -np.pi + 0.01])  # other side of the seam
    nlp = transcribe(cfg, GEOM, poses, vels, pose_msr, np.zeros(2))
    # After alignment the reference sits on the measurement's branch.
    assert abs(nlp.ref_poses[0, 2] - nlp.pose_msr[2]) < 0.1


def test_batch_dynamics_match_scalar_kinematics():
    rng = np.random.default_rng(8)
    states = rng.normal(0, 1, (10, 3))
    controls = rng.uniform(-1, 1, (10, 2))
    for scheme in ("euler", "rk4"):
        batch = batch_step(states, controls, GEOM, 0.05, scheme)
        for i in range(10):
            single = discrete_step(states[i], controls[i], GEOM, 0.05, scheme)
            np.testing.assert_allclose(batch[i], single, atol=1e-14)


def test_batch_jacobians_match_finite_differences():
    rng = np.random.default_rng(9)
    states = rng.normal(0, 1, (4, 3))
    controls = rng.uniform(-1, 1, (4, 2))
    for scheme in ("euler", "rk4"):
        ax, bu = batch_step_jacobians(states, controls, GEOM, 0.05, scheme)
        h = 1e-7
        for i in range(4):
            for j in range(3):
                dp = states.copy()
                dm = states.copy()
                dp[i, j] += h
                dm[i, j] -= h
                fd = (
                    batch_step(dp, controls, GEOM, 0.05, scheme)[i]
                    - batch_step(dm, controls, GEOM, 0.05, scheme)[i]
                ) / (2 * h)
                np.testing.assert_allclose(ax[i, :, j], fd, atol=1e-7)


def test_cost_gradient_matches_finite_differences():
    # >= 100 random instances, relative error <= 1e-4 (mix of schemes,
    # with and without velocity weights).
    rng = np.random.default_rng(123)
    worst = 0.0
    for trial in range(100):
        nlp, z = _random_instance(
            rng, horizon=int(rng.integers(2, 7)), with_vel=trial % 2 == 0
        )
        grad = cost_gradient(nlp, z)
        h = 1e-6
        fd = np.zeros_like(z)
        for j in range(z.size):
            zp, zm = z.copy(), z.copy()
            zp[j] += h
            zm[j] -= h
            fd[j] = (cost(nlp, zp) - cost(nlp, zm)) / (2 * h)
        scale = max(1.0, float(np.abs(fd).max()))
        worst = max(worst, float(np.abs(grad - fd).max()) / scale)
    assert worst <= 1e-4


def test_constraint_violations_reporting():
    horizon = 4
    cfg = OcpConfig(horizon=horizon)
    poses, vels = _straight_refs(horizon)
    nlp = transcribe(cfg, GEOM, poses, vels, poses[0], np.zeros(2))
    states = poses.copy()
    controls = np.zeros((horizon, 2))
    controls[2] = (0.9, -0.1)  # box violation and a rate jump
    z = pack_decision(states, controls)
    viol = constraint_violations(nlp, z)
    assert viol["box"] == pytest.approx(0.1)
    assert viol["rate"] == pytest.approx(0.9 - 0.2 * cfg.dt)
    assert viol["defect"] > 0.0


def test_config_validation():
    with pytest.raises(ConfigurationError):
        OcpConfig(horizon=1)
    with pytest.raises(ConfigurationError):
        OcpConfig(dt=0.0)
    with pytest.raises(ConfigurationError):
        OcpConfig(q_pose=(-1.0, 0.0, 0.0))
    with pytest.raises(ConfigurationError):
        OcpConfig(rate_min=(0.9, 0.0))
    with pytest.raises(ConfigurationError):
        OcpConfig(scheme="heun")
