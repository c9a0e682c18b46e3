import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tendonsim import continuum as cm
from tendonsim.core import TendonDrive, load_config
from tendonsim.loop import OuterLoop, Simulation, outer_feedback, run_scenario, static_equilibrium


def _cfg(extra=""):
    return load_config("scenario = force-step\nduration = 0.2\nn_sub = 2\n" + extra)


def test_same_seed_same_log():
    cfg = _cfg("current_noise = 0.01\nseed = 5\n")
    a, b = run_scenario(cfg), run_scenario(cfg)
    assert a.to_csv() == b.to_csv()
    c = run_scenario(_cfg("current_noise = 0.01\nseed = 6\n"))
    assert not np.array_equal(a["i_obs_dstar_0"], c["i_obs_dstar_0"])


def test_log_length_and_grid():
    log = run_scenario(_cfg())
    assert len(log) == 201
    np.testing.assert_allclose(np.diff(log["t"]), 1e-3)


def test_currents_and_tensions_respect_limits():
    log = run_scenario(_cfg("tendon0.setpoint = 1000\n"))
    i_sat = log.config().motor.i_sat
    for j in (0, 1):
        assert np.all(np.abs(log[f"i_obs_star_{j}"]) <= i_sat)
        assert np.all(np.abs(log[f"i_cmd_{j}"]) <= i_sat)
        assert np.all(log[f"F_cmd_{j}"] >= 0) and np.all(log[f"F_obs_{j}"] >= 0)


@settings(max_examples=100, deadline=None)
@given(st.floats(-100, 100), st.floats(-10, 10))
def test_outer_feedback_clamped(err, integ):
    drive = TendonDrive(mode="velocity", setpoint=0.0, K_p=20.0, K_i=400.0)
    o = OuterLoop(drive, 5.0, 1e-3, integ=integ)
    out = outer_feedback(o, {"dl": 0.0, "dl_dot": -err, "F_obs": 0.0}, 1.0)
    assert abs(out) <= 5.0


def test_static_equilibrium_balances_springs():
    model = cm.ContinuumModel.default()
    q = static_equilibrium(model, np.array([2.0, 0.0]))
    tau = model.moment_arms * 2.0
    np.testing.assert_allclose(model.joint_stiffness * q - cm.limit_torques(q, model), tau,
                               rtol=1e-9, atol=1e-13)


def test_starts_at_rest_in_equilibrium():
    cfg = load_config("scenario = extreme-curl\nduration = 0.05\nn_sub = 2\ntendon0.initial = 1.0\n")
    sim = Simulation(cfg)
    assert np.all(sim.state.qdot == 0)
    assert np.all(sim.ls.F_obs >= 0)


def test_force_step_tracks_setpoint():
    log = run_scenario(load_config("scenario = force-step\nn_sub = 2\nbaseline = false\n"))
    cfg = log.config()
    assert log["F_obs_0"][-1] == pytest.approx(cfg.tendon0.setpoint, rel=0.05)
