"""RL-circuit motor model and the feedforward + PID current controller.

Two realizations of the current loop are provided:

* ``"analog"`` (default): the driver's feedforward + PID is treated as a
  continuous-time law acting on the current measured inside the control
  period.  Over one period the closed loop is linear with constant inputs, so
  it is integrated exactly with a precomputed matrix exponential.  Each
  period restarts the circuit from the current observed at the end of the
  previous one, so an externally modified observation feeds back.
* ``"discrete"``: a literal sampled PID (backward-difference derivative)
  feeding one semi-implicit Euler step of the circuit per period.  With the
  default gains the sampled derivative term has a closed-loop pole near
  ``-K_d/L``; it is kept for comparison and for small ``K_d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm

from .core import CurrentControllerGains, MotorElectricalParams


@dataclass(frozen=True)
class ElectricalState:
    i: float = 0.0
    I_e: float = 0.0
    e_prev: float = 0.0


def step_circuit(state: ElectricalState, u: float, theta_m_dot: float, d: float,
                 dt: float, p: MotorElectricalParams) -> ElectricalState:
    """One step of L·di/dt = u - R·i - k_e·w - d, implicit in the R·i term."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    i1 = (p.L * state.i + dt * (u - p.k_e * theta_m_dot - d)) / (p.L + p.R * dt)
    return replace(state, i=i1)


def torque_from_current(i, p: MotorElectricalParams):
    return p.k_t * i


def feedforward_voltage(i_cmd: float, di_cmd: float, theta_m_dot_prev: float,
                        p: MotorElectricalParams) -> float:
    return p.L * di_cmd + p.R * i_cmd + p.k_e * theta_m_dot_prev


def pid_feedback(e: float, state: ElectricalState, dt: float,
                 g: CurrentControllerGains) -> tuple[float, ElectricalState]:
    """Sampled PID with rectangle-rule integral and backward-difference derivative."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    I_e = state.I_e + e * dt
    u = g.K_p * e + g.K_i * I_e + g.K_d * (e - state.e_prev) / dt
    return u, replace(state, I_e=I_e, e_prev=e)


def error_ode_oracle(K: CurrentControllerGains, p: MotorElectricalParams, d_dot, e0: float,
                     edot0: float, t_end: float, h: float = 1e-6,
                     t_out=None) -> tuple[np.ndarray, np.ndarray]:
    """RK4 solution of (L+K_d)ë + (R+K_p)ė + K_i·e = ḋ(t).

    ``d_dot`` is a callable of time (or None for zero).  Returns (t, e) on the
    grid ``t_out`` (default: every 1e-4 s), interpolating nothing: ``t_out``
    must be multiples of ``h``.
    """
    if not t_end > 0:
        raise ValueError("t_end must be > 0")
    a = p.L + K.K_d
    b = p.R + K.K_p
    c = K.K_i
    f = (lambda t: 0.0) if d_dot is None else d_dot

    def rhs(t, y):
        return np.array([y[1], (f(t) - b * y[1] - c * y[0]) / a])

    if t_out is None:
        t_out = np.arange(0.0, t_end + 0.5e-4, 1e-4)
    t_out = np.asarray(t_out, dtype=float)
    idx = np.rint(t_out / h).astype(np.int64)
    n = int(idx[-1])
    out = np.empty(len(t_out))
    y = np.array([e0, edot0], dtype=float)
    want = 0
    while want < len(idx) and idx[want] == 0:
        out[want] = y[0]
        want += 1
    for k in range(n):
        t = k * h
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        while want < len(idx) and idx[want] == k + 1:
            out[want] = y[0]
            want += 1
    return t_out, out


class CurrentLoop:
    """One motor channel: feedforward + PID against the RL circuit.

    ``step`` advances one control period and returns the post-controller
    current ``i_cmd - e(t_k)`` (unclamped) together with the voltages applied
    at the start of the period.
    """

    def __init__(self, p: MotorElectricalParams, g: CurrentControllerGains, dt: float,
                 mode: str = "analog", v_supply: float | None = None):
        if mode not in ("analog", "discrete"):
            raise ValueError(f"unknown current-loop mode {mode!r}")
        self.p, self.g, self.dt, self.mode = p, g, dt, mode
        self.v_supply = p.v_supply if v_supply is None else v_supply
        self.state = ElectricalState()
        self._i_cmd_prev: float | None = None
        if mode == "analog":
            Lk = p.L + g.K_d
            A = np.array([[-(p.R + g.K_p) / Lk, g.K_i / Lk], [-1.0, 0.0]])
            big = np.zeros((4, 4))
            big[:2, :2] = A
            big[:2, 2:] = np.eye(2)
            E = expm(big * dt)
            self._Phi = E[:2, :2]
            self._Gam = E[:2, 2:]
            self._A = A
            self._Lk = Lk
            self._phi = tuple(float(v) for v in self._Phi.ravel())
            self._gam = tuple(float(v) for v in self._Gam.ravel())
        self._decay = math.exp(-p.R * dt / p.L)

    def reset(self, i0: float = 0.0, I_e0: float = 0.0):
        self.state = ElectricalState(i0, I_e0, 0.0)
        self._i_cmd_prev = None

    def step(self, i_cmd: float, i_meas_prev: float, theta_m_dot_prev: float,
             d: float = 0.0) -> tuple[float, float, float]:
        """Returns (i_obs_star_raw, u_ff, u_fb).

        ``i_meas_prev`` is the current observed at the end of the previous
        period; the error at the start of this period is ``i_cmd - i_meas_prev``.
        """
        p, g, dt = self.p, self.g, self.dt
        di_cmd = 0.0 if self._i_cmd_prev is None else (i_cmd - self._i_cmd_prev) / dt
        self._i_cmd_prev = i_cmd
        u_ff = feedforward_voltage(i_cmd, di_cmd, theta_m_dot_prev, p)
        # each period starts from the current observed at the end of the last one
        s = self.state
        i0 = i_meas_prev
        e0 = i_cmd - i_meas_prev
        bemf = p.k_e * theta_m_dot_prev
        vmax = self.v_supply

        if self.mode == "discrete":
            u_fb, s1 = pid_feedback(e0, replace(s, i=i0), dt, g)
            u = u_ff + u_fb
            if abs(u) > vmax:
                u = math.copysign(vmax, u)
                s1 = replace(s1, I_e=s.I_e)  # freeze the integral
                u_fb = u - u_ff
            s1 = step_circuit(s1, u, theta_m_dot_prev, d, dt, p)
            self.state = s1
        else:
            c = i_cmd
            drive = u_ff + g.K_p * c - bemf - d
            di0 = (drive - (p.R + g.K_p) * i0 + g.K_i * s.I_e) / self._Lk
            u_fb = g.K_p * e0 + g.K_i * s.I_e - g.K_d * di0
            u = u_ff + u_fb
            if abs(u) > vmax:
                u = math.copysign(vmax, u)
                u_fb = u - u_ff
                i_inf = (u - bemf - d) / p.R
                i1 = i_inf + (i0 - i_inf) * self._decay
                self.state = ElectricalState(i1, s.I_e, i_cmd - i1)
            else:
                p00, p01, p10, p11 = self._phi
                g00, g01, g10, g11 = self._gam
                w = drive / self._Lk
                i1 = p00 * i0 + p01 * s.I_e + g00 * w + g01 * c
                I1 = p10 * i0 + p11 * s.I_e + g10 * w + g11 * c
                self.state = ElectricalState(i1, I1, i_cmd - i1)
        # i_cmd - e(t_k)
        return self.state.i, u_ff, u_fb
