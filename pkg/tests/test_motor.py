import pytest
from scipy.integrate import solve_ivp

from tendonsim.core import CurrentControllerGains, MotorElectricalParams
from tendonsim.motor import (CurrentLoop, ElectricalState, feedforward_voltage, pid_feedback,
                             step_circuit)

P = MotorElectricalParams()
G = CurrentControllerGains()


def test_step_circuit_closed_form():
    s = step_circuit(ElectricalState(i=0.5), 12.0, 3.0, 0.2, 1e-3, P)
    expect = (P.L * 0.5 + 1e-3 * (12.0 - P.k_e * 3.0 - 0.2)) / (P.L + P.R * 1e-3)
    assert s.i == pytest.approx(expect, rel=1e-14)


def test_step_circuit_reaches_ohmic_current():
    s = ElectricalState()
    for _ in range(200):
        s = step_circuit(s, 6.0, 0.0, 0.0, 1e-3, P)
    assert s.i == pytest.approx(6.0 / P.R, rel=1e-9)


def test_pid_feedback_arithmetic():
    u, s = pid_feedback(0.5, ElectricalState(I_e=0.1, e_prev=0.2), 1e-3, G)
    assert s.I_e == pytest.approx(0.1005)
    assert u == pytest.approx(G.K_p * 0.5 + G.K_i * 0.1005 + G.K_d * 0.3 / 1e-3)


def test_analog_period_matches_ode_integration():
    """One period of the exact update against an adaptive ODE solve."""
    dt, c, i0, I0, w, d = 1e-3, 1.2, 0.3, 2e-3, 5.0, 0.05
    loop = CurrentLoop(P, G, dt)
    loop.state = ElectricalState(i0, I0, 0.0)
    loop._i_cmd_prev = c
    i1, u_ff, _ = loop.step(c, i0, w, d)
    bemf = P.k_e * w
    ff = feedforward_voltage(c, 0.0, w, P)
    assert u_ff == pytest.approx(ff)

    def rhs(t, y):
        i, I = y
        di = (ff + G.K_p * (c - i) + G.K_i * I - P.R * i - bemf - d) / (P.L + G.K_d)
        return [di, c - i]

    sol = solve_ivp(rhs, (0, dt), [i0, I0], method="Radau", rtol=1e-12, atol=1e-14)
    assert i1 == pytest.approx(sol.y[0, -1], abs=1e-10)
    assert loop.state.I_e == pytest.approx(sol.y[1, -1], abs=1e-12)


@pytest.mark.parametrize("mode", ["analog", "discrete"])
def test_loop_settles_on_command(mode):
    g = G if mode == "analog" else CurrentControllerGains(K_d=0.0)
    loop = CurrentLoop(P, g, 1e-4, mode=mode)
    i = 0.0
    for _ in range(3000):
        i, _, _ = loop.step(2.0, i, 0.0)
    assert i == pytest.approx(2.0, abs=1e-6)


def test_discrete_saturation_freezes_integral():
    loop = CurrentLoop(P, CurrentControllerGains(K_d=0.0), 1e-3, mode="discrete", v_supply=1.0)
    _, u_ff, u_fb = loop.step(100.0, 0.0, 0.0)
    assert u_ff + u_fb == pytest.approx(1.0)
    assert loop.state.I_e == 0.0


def test_bad_mode():
    with pytest.raises(ValueError):
        CurrentLoop(P, G, 1e-3, mode="digital")
