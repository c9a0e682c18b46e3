import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tendonsim import transmission as tr
from tendonsim.core import ConfigError, MotorElectricalParams, TransmissionParams
from tendonsim.loop import step_jb
from tendonsim.motor import torque_from_current

P = TransmissionParams()
K_T = MotorElectricalParams().k_t


def test_reflected_params():
    J, b = tr.reflect_params(P)
    assert J == pytest.approx(P.G ** 2 * P.J_m) and b == pytest.approx(P.G ** 2 * P.b_m)
    assert J == pytest.approx(P.J_eq) and b == pytest.approx(P.b_eq)


def test_winch_kinematics_and_bad_radius():
    s = tr.winch_kinematics(0.02, 0.01, 0.5, 0.01, 1)
    assert (s.index, s.theta_out, s.theta_out_dot, s.theta_out_ddot) == (1, 2.0, 1.0, 50.0)
    with pytest.raises(ValueError):
        tr.winch_kinematics(0.0, 0.0, 0.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(-50, 50), st.floats(-2000, 2000))
def test_round_trip_with_moving_winch(i, w, a):
    """Inverse holds for any winch motion, not only the static case."""
    side = tr.WinchSide(0, 0.0, w, a)
    F = tr.commanded_tendon_force(tr.output_torque(torque_from_current(i, MotorElectricalParams()), P),
                                  side, P)
    back = tr.reconstruct_current(side, F, P, K_T)
    assert back == pytest.approx(i, rel=1e-9, abs=1e-12)


def test_slack_clamp_in_loop():
    # a rotor load larger than the drive torque leaves a slack tendon
    side = tr.WinchSide(0, 0.0, 0.0, 1e4)
    assert tr.commanded_tendon_force(0.01, side, P) < 0
    assert step_jb(0.1, side, P, K_T) == 0.0


def test_reconstruct_rejects_zero_gain():
    with pytest.raises(ValueError):
        tr.reconstruct_current(tr.WinchSide(), 1.0, P, 0.0)


def test_transmission_validation():
    with pytest.raises(ConfigError):
        TransmissionParams(eta=0.0)
    with pytest.raises(ConfigError):
        TransmissionParams(G=0.5)


def test_accel_estimator_rejects_spike():
    est = tr.AccelEstimator(1e-3, width=5)
    v = [0.001 * k for k in range(10)]
    v[6] += 0.05  # one corrupted sample
    out = [est.push(x) for x in v]
    assert out[-1] == pytest.approx(1.0)
    assert max(abs(x) for x in out[3:]) < 5.0
