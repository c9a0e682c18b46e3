"""Planar pseudo-rigid chain: 24 revolute joints with torsional springs/dampers.

Joint angles are relative (``phi_j = q_0 + ... + q_j``); link ``j`` carries a
point mass at its distal end.  Both tendons share one moment arm per joint
with opposite sign, so the tendon Jacobian is constant.  Tendon 0 shortens
when the chain curls towards positive angles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .core import ContactConfig, RobotParams

N_JOINTS = 24


@dataclass(frozen=True)
class ContinuumModel:
    link_lengths: np.ndarray
    link_masses: np.ndarray
    joint_stiffness: np.ndarray
    joint_damping: np.ndarray
    moment_arms: np.ndarray
    joint_limit: float = 0.35
    limit_stiffness: float = 500.0
    gravity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    n_joints: int = N_JOINTS

    def __post_init__(self):
        for name in ("link_lengths", "link_masses", "joint_stiffness",
                     "joint_damping", "moment_arms"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            if arr.shape != (self.n_joints,):
                raise ValueError(f"{name} must have {self.n_joints} entries")
            if not np.all(arr > 0):
                raise ValueError(f"{name} must be strictly positive")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("link_lengths", "link_masses", "joint_stiffness", "moment_arms"):
            if np.any(np.diff(getattr(self, name)) > 0):
                raise ValueError(f"{name} must be non-increasing from base to tip")
        g = np.ascontiguousarray(self.gravity, dtype=float).reshape(2)
        g.setflags(write=False)
        object.__setattr__(self, "gravity", g)

    @classmethod
    def from_params(cls, p: RobotParams) -> "ContinuumModel":
        """Logarithmic-spiral taper: length and arm ~ lam^j, mass ~ lam^3j,
        stiffness ~ lam^4j; damping is stiffness-proportional."""
        j = np.arange(N_JOINTS)
        lam = p.taper
        stiff = p.k_base * lam ** (4 * j)
        grav = np.array([0.0, -p.g]) if p.gravity else np.zeros(2)
        return cls(
            link_lengths=p.l_base * lam**j,
            link_masses=p.m_base * lam ** (3 * j),
            joint_stiffness=stiff,
            joint_damping=p.damping_time * stiff,
            moment_arms=p.d_base * lam**j,
            joint_limit=p.joint_limit,
            limit_stiffness=p.limit_stiffness,
            gravity=grav,
        )

    @classmethod
    def default(cls) -> "ContinuumModel":
        return cls.from_params(RobotParams())

    @property
    def total_length(self) -> float:
        return float(self.link_lengths.sum())


@dataclass
class ContinuumState:
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float)
        self.qdot = np.array(self.qdot, dtype=float)
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qdot))):
            raise ValueError("state must be finite")

    @classmethod
    def _unchecked(cls, q, qdot) -> "ContinuumState":
        # stepping path: the caller checks finiteness once per control cycle
        obj = cls.__new__(cls)
        obj.q, obj.qdot = q, qdot
        return obj

    @classmethod
    def zero(cls, n: int = N_JOINTS) -> "ContinuumState":
        return cls(np.zeros(n), np.zeros(n))

    def copy(self) -> "ContinuumState":
        return ContinuumState(self.q.copy(), self.qdot.copy())


@dataclass(frozen=True)
class GeneralizedForces:
    tau: np.ndarray


@dataclass(frozen=True)
class ContactSpec:
    """External interaction.  ``magnitude`` is an impulse (N·s) for
    point-impulse and a force (N) for rotating-pusher; ``direction`` is +1 for
    a push along the positive link normal."""

    kind: str = "none"
    link_index: int = 23
    magnitude: float = 0.0
    t_on: float = 0.0
    period: float = 0.1
    direction: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)
    diameter: float = 0.04
    stiffness: float = 2000.0
    damping_ratio: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "point-impulse", "rotating-pusher", "cylinder"):
            raise ValueError(f"unknown contact kind {self.kind!r}")
        if not 0 <= self.link_index < N_JOINTS:
            raise ValueError("link_index must lie in [0, 24)")
        if self.kind == "cylinder" and not self.diameter > 0:
            raise ValueError("diameter must be > 0")
        if self.kind == "rotating-pusher" and not self.period > 0:
            raise ValueError("period must be > 0")

    @classmethod
    def none(cls) -> "ContactSpec":
        return cls()

    @classmethod
    def from_config(cls, c: ContactConfig, model: ContinuumModel | None = None) -> "ContactSpec":
        center = (c.center_x, c.center_y)
        if c.kind == "cylinder" and not all(math.isfinite(v) for v in center):
            center = default_cylinder_center(c.diameter, model or ContinuumModel.default())
        return cls(kind=c.kind, link_index=c.link, magnitude=c.magnitude, t_on=c.t_on,
                   period=2 * math.pi / c.omega, direction=c.direction, center=center,
                   diameter=c.diameter, stiffness=c.stiffness, damping_ratio=c.damping_ratio)

    @property
    def penalty_damping(self) -> float:
        """Coefficient c such that vertex damping is c·sqrt(m_j) (critical at ratio 1)."""
        return 2.0 * self.damping_ratio * math.sqrt(self.stiffness)


def default_cylinder_center(diameter: float, model: ContinuumModel,
                            along: float = 0.6, gap: float = 0.002) -> tuple[float, float]:
    """Cylinder resting beside the straight chain on the curling side."""
    return (along * model.total_length, 0.5 * diameter + gap)


# ------------------------------------------------------------------ kinematics


def chain_points(q, model: ContinuumModel) -> np.ndarray:
    """(n+1)×2 joint/vertex positions, base at the origin."""
    return K.chain_points(np.asarray(q, dtype=float), model.link_lengths)


def tip_position(q, model: ContinuumModel) -> np.ndarray:
    return chain_points(q, model)[-1]


def tendon_lengths(q, model: ContinuumModel) -> tuple[float, float]:
    """Length change (Δℓ_0, Δℓ_1) reeled in by each winch from q = 0."""
    s = float(np.dot(model.moment_arms, q))
    return s, -s


def tendon_jacobian(q, model: ContinuumModel) -> np.ndarray:
    """2×24 matrix ∂ℓ/∂q (independent of q for constant moment arms)."""
    return np.vstack([model.moment_arms, -model.moment_arms])


def dynamics_terms(state: ContinuumState, model: ContinuumModel):
    """Return (M, c, d, k, g) of M q̈ + c + d + k + g = τ."""
    pts = chain_points(state.q, model)
    M = K.mass_matrix(pts, model.link_masses)
    c, g = K.bias_torques(state.q, state.qdot, pts, model.link_lengths,
                          model.link_masses, model.gravity[0], model.gravity[1])
    d = model.joint_damping * state.qdot
    k = model.joint_stiffness * state.q
    return M, c, d, k, g


def energy(state: ContinuumState, model: ContinuumModel) -> float:
    """Kinetic + elastic (joint springs and limit penalties) + gravitational energy."""
    M, *_ = dynamics_terms(state, model)
    q = state.q
    over = np.maximum(np.abs(q) - model.joint_limit, 0.0)
    e = 0.5 * state.qdot @ M @ state.qdot
    e += 0.5 * np.sum(model.joint_stiffness * q * q)
    e += 0.5 * model.limit_stiffness * np.sum(over * over)
    if np.any(model.gravity != 0):
        pts = chain_points(q, model)[1:]
        e -= np.sum(model.link_masses * (pts @ model.gravity))
    return float(e)


# --------------------------------------------------------------------- contact


def point_force(spec: ContactSpec, t: float, dt: float) -> float:
    """Signed normal force at ``spec.link_index`` during the step starting at t."""
    if spec.kind == "point-impulse":
        # whole impulse delivered over the one step that contains t_on
        if t <= spec.t_on < t + dt - 1e-12 * dt:
            return spec.direction * spec.magnitude / dt
        return 0.0
    if spec.kind == "rotating-pusher":
        if t < spec.t_on:
            return 0.0
        phase = ((t - spec.t_on) / spec.period) % 1.0
        return spec.direction * spec.magnitude if phase < 0.5 else 0.0
    return 0.0


def _cylinder_terms(q, qdot, spec: ContactSpec, model: ContinuumModel):
    pts = chain_points(q, model)
    vel = K.vertex_velocities(q, qdot, model.link_lengths)
    cx, cy = spec.center
    radius = 0.5 * spec.diameter
    tau = np.zeros(model.n_joints)
    hit = False
    for j in range(model.n_joints):
        on, px, py, nx, ny, pen, vn = K.segment_contact(pts, vel, j, cx, cy, radius)
        if not on:
            continue
        fn = spec.stiffness * pen - spec.penalty_damping * math.sqrt(model.link_masses[j]) * vn
        if fn <= 0.0:
            continue
        hit = True
        K.point_force_at(pts, j, px, py, fn * nx, fn * ny, tau)
    return tau, hit


def limit_torques(q, model: ContinuumModel) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    lim = model.joint_limit
    over = np.where(q > lim, q - lim, np.where(q < -lim, q + lim, 0.0))
    return -model.limit_stiffness * over


def contact_forces(state: ContinuumState, spec: ContactSpec, t: float,
                   model: ContinuumModel, dt: float = 1e-3) -> GeneralizedForces:
    """Generalized torques from the external contact plus the joint curl limits."""
    tau = limit_torques(state.q, model)
    if spec.kind in ("point-impulse", "rotating-pusher"):
        f = point_force(spec, t, dt)
        if f != 0.0:
            pts = chain_points(state.q, model)
            phi = float(np.sum(state.q[: spec.link_index + 1]))
            K.point_force_torque(pts, spec.link_index, -math.sin(phi) * f,
                                 math.cos(phi) * f, tau)
    elif spec.kind == "cylinder":
        tau = tau + _cylinder_terms(state.q, state.qdot, spec, model)[0]
    elif spec.kind != "none":
        raise ValueError(f"unknown contact kind {spec.kind!r}")
    return GeneralizedForces(tau)


def in_contact(state: ContinuumState, spec: ContactSpec, t: float,
               model: ContinuumModel, dt: float = 1e-3) -> bool:
    if spec.kind == "cylinder":
        return _cylinder_terms(state.q, state.qdot, spec, model)[1]
    if spec.kind in ("point-impulse", "rotating-pusher"):
        return point_force(spec, t, dt) != 0.0
    return False


def spring_gun_velocity(k_s: float, m_eff: float, delta_x: float) -> float:
    """Launch speed from ½k_sΔx² = ½m v²."""
    if not (k_s > 0 and m_eff > 0) or delta_x < 0:
        raise ValueError("spring constant and mass must be positive, compression non-negative")
    return math.sqrt(k_s / m_eff) * delta_x


def tendon_force_tracker(F_cmd, F_obs_prev, dt: float, tau_F: float) -> np.ndarray:
    """First-order tracking of the commanded tension, never negative."""
    if not tau_F > 0:
        raise ValueError("tau_F must be > 0")
    F_cmd = np.asarray(F_cmd, dtype=float)
    F_obs_prev = np.asarray(F_obs_prev, dtype=float)
    return np.maximum(F_obs_prev + (dt / tau_F) * (F_cmd - F_obs_prev), 0.0)


# ------------------------------------------------------------------ stepping


_ZERO2 = np.zeros(2)


def step_dynamics(state: ContinuumState, F_obs, spec: ContactSpec, t: float, dt: float,
                  model: ContinuumModel, n_sub: int = 1) -> ContinuumState:
    """Advance the free chain (no winch rotors attached) by one step."""
    new = advance_chain(state, F_obs, spec, t, dt, model, n_sub)[0]
    return ContinuumState(new.q, new.qdot)


def advance_chain(state: ContinuumState, F_obs, spec: ContactSpec, t: float, dt: float,
                  model: ContinuumModel, n_sub: int = 1,
                  rotor_mass=None, rotor_damp=None) -> tuple[ContinuumState, bool]:
    """Advance the chain by ``dt`` in ``n_sub`` linearly implicit Euler substeps.

    ``F_obs`` holds the two tendon tensions (held over the step).  Optional
    ``rotor_mass``/``rotor_damp`` (kg, N·s/m, per tendon) add the winch rotor
    reflected to tendon space, treated implicitly as an inextensible coupling.
    Returns the new state and whether the cylinder was penetrated.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    F = np.ascontiguousarray(F_obs, dtype=float)
    mr = _ZERO2 if rotor_mass is None else np.ascontiguousarray(rotor_mass, dtype=float)
    br = _ZERO2 if rotor_damp is None else np.ascontiguousarray(rotor_damp, dtype=float)
    h = dt / n_sub
    q, qd = state.q, state.qdot
    cyl = spec.kind == "cylinder"
    cx, cy = spec.center if cyl else (0.0, 0.0)
    radius = 0.5 * spec.diameter if cyl else 0.0
    if spec.kind == "rotating-pusher":
        forces = np.array([point_force(spec, t + s * h, h) for s in range(n_sub)])
    else:
        forces = np.full(n_sub, point_force(spec, t, dt))
    q, qd, hit_any = K.substeps(q, qd, h, model.link_lengths, model.link_masses,
                                model.joint_stiffness, model.joint_damping, model.moment_arms,
                                model.joint_limit, model.limit_stiffness,
                                model.gravity[0], model.gravity[1], F, mr, br,
                                spec.link_index, forces,
                                cyl, cx, cy, radius, spec.stiffness, spec.penalty_damping)
    return ContinuumState._unchecked(q, qd), hit_any
