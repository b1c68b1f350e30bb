import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skidnav.kinematics import Pose2, WheelRates
from skidnav.lowlevel import (
    LowLevelConfig,
    LowLevelController,
    SideGains,
    adapt_step,
    feedback_terms,
    pose_error,
)
from skidnav.mlp import AffineNorm, MlpParams, SideModel, SurrogateModel
from skidnav.safety import SafetyFault, log_barrier


def _linear_model(gain_r=1000.0, gain_l=1000.0):
    # Identity norms on [-1, 1]; command(v) = gain * v.
    def side(gain):
        return SideModel(
            MlpParams([np.array([[gain]])], [np.array([0.0])]),
            AffineNorm(-1.0, 1.0),
            AffineNorm(-1.0, 1.0),
        )

    return SurrogateModel({"R": side(gain_r), "L": side(gain_l)})


def test_pose_error_examples():
    assert pose_error(Pose2(1, 2, 0.5), Pose2(1, 2, 0.5)) == 0.0
    assert pose_error(Pose2(0.3, 0.4, 0.0), Pose2(0, 0, 0)) == pytest.approx(0.5)
    # Direct norm evaluation: sqrt(0.01 + 0.04 + 0.0025).
    assert pose_error(Pose2(0.1, 0.2, 0.05), Pose2(0, 0, 0)) == pytest.approx(
        math.sqrt(0.0525)
    )
    assert math.sqrt(0.0525) == pytest.approx(0.22912878474779198)


def test_pose_error_wraps_yaw():
    a = Pose2(0, 0, math.pi - 0.01)
    b = Pose2(0, 0, -math.pi + 0.01)
    assert pose_error(a, b) == pytest.approx(0.02, abs=1e-12)


def test_pose_error_yaw_weight_option():
    a = Pose2(0, 0, 0.2)
    b = Pose2(0, 0, 0.0)
    assert pose_error(a, b, yaw_weight=0.0) == 0.0
    assert pose_error(a, b, yaw_weight=2.0) == pytest.approx(0.4)


def test_pose_error_rejects_non_finite():
    with pytest.raises(SafetyFault):
        pose_error(Pose2(float("nan"), 0, 0), Pose2(0, 0, 0))


def test_feedback_value_spec_example():
    # prop=2, barrier_gain=1, chi=0.5, e=0.1, barrier at E=0.2 of O=0.4.
    gains = SideGains(prop=2.0, barrier_gain=1.0, leak=1.0, adapt_init=0.5)
    barrier = log_barrier(0.2, 0.4)
    fb = feedback_terms(0.1, barrier, 0.5, gains)
    assert fb == pytest.approx(-0.1 - 0.1 * math.log(2.0) ** 2 * 0.5)
    assert fb == pytest.approx(-0.12402265069591987)


@given(
    e=st.floats(-1, 1),
    barrier=st.floats(0, 9),
    chi=st.floats(0, 50),
)
def test_feedback_opposes_error(e, barrier, chi):
    gains = SideGains(prop=10.0, barrier_gain=3.0, leak=1.0, adapt_init=0.1)
    fb = feedback_terms(e, barrier, chi, gains)
    if e > 0:
        assert fb <= 0.0
    elif e < 0:
        assert fb >= 0.0
    else:
        assert fb == 0.0


def test_pure_feedforward_when_no_error():
    model = _linear_model(900.0, 800.0)
    ctl = LowLevelController(LowLevelConfig(), model, wheel_radius=0.8)
    ref = WheelRates(0.5, 0.5)
    right, left = ctl.step(ref, ref, barrier_val=0.0, dt=1e-3)
    assert right.u_total == pytest.approx(900.0 * 0.8 * 0.5)
    assert left.u_total == pytest.approx(800.0 * 0.8 * 0.5)
    assert right.u_total == right.u_ff


def test_barrier_term_vanishes_at_zero_pose_error():
    gains = SideGains(prop=100.0, barrier_gain=50.0, leak=1.0, adapt_init=0.3)
    cfg = LowLevelConfig(right=gains, left=gains)
    ctl = LowLevelController(cfg, _linear_model(), wheel_radius=0.8)
    right, _ = ctl.step(
        WheelRates(0.5, 0.5), WheelRates(0.6, 0.5), barrier_val=0.0, dt=1e-3
    )
    # e = 0.1; only the proportional term acts: -0.5*100*0.1.
    assert right.u_total - right.u_ff == pytest.approx(-5.0)


def test_sdnn_mode_is_bare_feedforward():
    cfg = LowLevelConfig(mode="sdnn")
    ctl = LowLevelController(cfg, _linear_model(), wheel_radius=0.8)
    chi_before = dict(ctl.chi)
    right, left = ctl.step(
        WheelRates(0.5, 0.5), WheelRates(0.9, 0.1), barrier_val=2.0, dt=1e-3
    )
    assert right.u_total == right.u_ff
    assert left.u_total == left.u_ff
    assert ctl.chi == chi_before  # adaptation frozen


def test_adapt_pure_decay():
    gains = SideGains(prop=1.0, barrier_gain=5.0, leak=1.0, adapt_init=0.1)
    chi = 0.1
    for _ in range(1000):  # t = 1/leak
        chi, clamped = adapt_step(chi, 0.0, 0.7, gains, 1e-3)
        assert not clamped
    assert abs(chi / 0.1 - math.exp(-1.0)) < 3e-4


def test_adapt_fixed_point():
    gains = SideGains(prop=1.0, barrier_gain=5.0, leak=1.0, adapt_init=0.05)
    e, barrier = 0.1, log_barrier(0.2, 0.4)
    target = gains.barrier_gain * e * e * barrier / gains.leak
    chi = gains.adapt_init
    for _ in range(25_000):
        chi, _ = adapt_step(chi, e, barrier, gains, 1e-3)
    assert abs(chi - target) < 1e-6


def test_adapt_euler_matches_rk4_oracle():
    # Euler at 1 kHz vs RK4 at 10 kHz over 5 s, constant drive.
    gains = SideGains(prop=1.0, barrier_gain=5.0, leak=1.0, adapt_init=0.05)
    e, barrier = 0.1, log_barrier(0.2, 0.4)

    def rhs(c):
        return -gains.leak * c + gains.barrier_gain * e * e * barrier

    chi_e = gains.adapt_init
    chi_rk = gains.adapt_init
    worst = 0.0
    for k in range(5000):
        chi_e, _ = adapt_step(chi_e, e, barrier, gains, 1e-3)
        for _ in range(10):
            h = 1e-4
            k1 = rhs(chi_rk)
            k2 = rhs(chi_rk + 0.5 * h * k1)
            k3 = rhs(chi_rk + 0.5 * h * k2)
            k4 = rhs(chi_rk + h * k3)
            chi_rk += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        worst = max(worst, abs(chi_e - chi_rk))
    assert worst < 1e-5


@given(
    chi0=st.floats(0.0, 10.0),
    e=st.floats(-0.5, 0.5),
    barrier=st.floats(0.0, 9.0),
)
@settings(max_examples=80)
def test_adapt_gain_stays_nonnegative(chi0, e, barrier):
    gains = SideGains(prop=1.0, barrier_gain=50.0, leak=3.0, adapt_init=0.1)
    chi = chi0
    for _ in range(50):
        chi, _ = adapt_step(chi, e, barrier, gains, 1e-3)
        assert chi >= 0.0


def test_adapt_rejects_bad_inputs():
    gains = SideGains()
    with pytest.raises(ValueError):
        adapt_step(0.1, 0.0, 0.0, gains, 0.0)
    with pytest.raises(SafetyFault):
        adapt_step(0.1, float("inf"), 1.0, gains, 1e-3)


def test_non_finite_command_raises_safety_fault():
    bad = _linear_model(float("nan"), 1.0)
    ctl = LowLevelController(LowLevelConfig(), bad, wheel_radius=0.8)
    with pytest.raises(SafetyFault):
        ctl.step(WheelRates(0.5, 0.5), WheelRates(0.5, 0.5), 0.0, 1e-3)


def test_config_validation():
    with pytest.raises(ValueError):
        SideGains(prop=0.0)
    with pytest.raises(ValueError):
        LowLevelConfig(mode="pid")
    with pytest.raises(ValueError):
        LowLevelConfig(yaw_weight=-1.0)
