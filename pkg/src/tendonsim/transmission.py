"""Gearbox + winch: motor torque to tendon tension, and the inverse map that
reconstructs motor current from winch kinematics and tendon tension."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .core import TransmissionParams


@dataclass(frozen=True)
class WinchSide:
    index: int = 0
    theta_out: float = 0.0
    theta_out_dot: float = 0.0
    theta_out_ddot: float = 0.0


def reflect_params(p: TransmissionParams) -> tuple[float, float]:
    """Rotor inertia and damping seen at the output shaft."""
    return p.G**2 * p.J_m, p.G**2 * p.b_m


def output_torque(tau_m, p: TransmissionParams):
    return p.eta * p.G * tau_m


def winch_kinematics(delta_l: float, delta_l_dot: float, delta_l_ddot: float, r: float,
                     index: int = 0) -> WinchSide:
    if not r > 0:
        raise ValueError("winch radius must be > 0")
    return WinchSide(index, delta_l / r, delta_l_dot / r, delta_l_ddot / r)


def rotor_load(side: WinchSide, p: TransmissionParams) -> float:
    """Torque absorbed by the reflected rotor inertia and damping (N·m)."""
    J_eq, b_eq = reflect_params(p)
    return J_eq * side.theta_out_ddot + b_eq * side.theta_out_dot


def commanded_tendon_force(tau_eq: float, prev: WinchSide, p: TransmissionParams) -> float:
    """Tension left for the tendon after accelerating the rotor.

    Signed, so that :func:`reconstruct_current` inverts it exactly; the loop
    clamps it at zero (a tendon cannot push), see :func:`slack_clamp`.
    """
    return (tau_eq - rotor_load(prev, p)) / p.r


def slack_clamp(F: float) -> float:
    return F if F > 0.0 else 0.0


def reconstruct_current(side: WinchSide, F_obs: float, p: TransmissionParams, k_t: float) -> float:
    gain = p.eta * p.G * k_t
    if not gain > 0:
        raise ValueError("eta·G·k_t must be > 0")
    return (rotor_load(side, p) + p.r * F_obs) / gain


class AccelEstimator:
    """Backward difference of a sampled velocity followed by a short running median."""

    def __init__(self, dt: float, width: int = 5):
        self.dt = dt
        self.width = width
        self._prev: float | None = None
        self._buf: deque[float] = deque(maxlen=width)

    def push(self, v: float) -> float:
        raw = 0.0 if self._prev is None else (v - self._prev) / self.dt
        self._prev = v
        self._buf.append(raw)
        w = sorted(self._buf)
        m = len(w) // 2
        return w[m] if len(w) % 2 else 0.5 * (w[m - 1] + w[m])
