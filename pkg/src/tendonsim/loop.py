"""One control cycle per tendon: current control (j_a), current to tendon
tension (j_b), plant + current reconstruction (j_c); plus the outer
mechanical feedback laws and the scenario runner.

The winch rotor is coupled to the chain as an inextensible tendon: its
reflected inertia and damping (in tendon space, J_eq/r² and b_eq/r²) are
added implicitly to the chain dynamics, which are driven by the motor-side
tension τ_eq/r passed through the same first-order tracker as the observed
tension.  F_cmd and F_obs follow the transmission formulas with k-1
kinematics and feed the current reconstruction and force feedback.  Putting
the rotor load explicitly into the chain drive is unstable because the
reflected rotor mass exceeds the chain's tendon-space mass by orders of
magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import continuum as cm
from . import transmission as tr
from .core import (LOG_COLUMNS, ScenarioConfig, StreamingAverage, TendonDrive, TimeSeriesLog,
                   config_items, make_rng)
from .motor import CurrentLoop, torque_from_current


class NumericalError(RuntimeError):
    """Simulation diverged or a factorization failed; ``step`` names the cycle."""

    def __init__(self, step: int, msg: str):
        super().__init__(f"step {step}: {msg}")
        self.step = step


@dataclass
class LoopState:
    t: float = 0.0
    i_cmd: np.ndarray = field(default_factory=lambda: np.zeros(2))
    e: np.ndarray = field(default_factory=lambda: np.zeros(2))
    I_e: np.ndarray = field(default_factory=lambda: np.zeros(2))
    i_obs_star: np.ndarray = field(default_factory=lambda: np.zeros(2))
    i_obs_star_raw: np.ndarray = field(default_factory=lambda: np.zeros(2))
    i_obs_dstar: np.ndarray = field(default_factory=lambda: np.zeros(2))
    F_cmd: np.ndarray = field(default_factory=lambda: np.zeros(2))
    F_obs: np.ndarray = field(default_factory=lambda: np.zeros(2))
    theta_out: np.ndarray = field(default_factory=lambda: np.zeros(2))
    theta_out_dot: np.ndarray = field(default_factory=lambda: np.zeros(2))
    theta_out_ddot: np.ndarray = field(default_factory=lambda: np.zeros(2))
    u_ff: np.ndarray = field(default_factory=lambda: np.zeros(2))
    u_fb: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def winch(self, j: int) -> tr.WinchSide:
        return tr.WinchSide(j, self.theta_out[j], self.theta_out_dot[j], self.theta_out_ddot[j])


# ----------------------------------------------------------------- step j_a/j_b/j_c


def step_ja(i_cmd: float, i_obs_dstar_prev: float, loop: CurrentLoop, theta_m_dot_prev: float,
            d: float, i_sat: float) -> tuple[float, float, float, float]:
    """Current control over one period.

    Returns (i_obs_star, i_obs_star_raw, u_ff, u_fb); the first is clamped to ±i_sat.
    """
    raw, u_ff, u_fb = loop.step(i_cmd, i_obs_dstar_prev, theta_m_dot_prev, d)
    return min(max(raw, -i_sat), i_sat), raw, u_ff, u_fb


def step_jb(i_obs_star: float, prev_winch: tr.WinchSide, p: tr.TransmissionParams,
            k_t: float) -> float:
    tau_eq = tr.output_torque(k_t * i_obs_star, p)
    return tr.slack_clamp(tr.commanded_tendon_force(tau_eq, prev_winch, p))


@dataclass(frozen=True)
class JcResult:
    state: cm.ContinuumState
    winch: tuple[tr.WinchSide, tr.WinchSide]
    F_obs: np.ndarray
    i_obs_dstar: np.ndarray
    dl: np.ndarray
    dl_dot: np.ndarray
    contact: bool


class PlantObserver:
    """Step j_c: tension tracking, chain substeps and current reconstruction."""

    def __init__(self, model: cm.ContinuumModel, p: tr.TransmissionParams, k_t: float,
                 dt: float, n_sub: int, attach_rotor: bool = True):
        self.model, self.p, self.k_t, self.dt, self.n_sub = model, p, k_t, dt, n_sub
        J_eq, b_eq = tr.reflect_params(p)
        scale = 1.0 / p.r**2 if attach_rotor else 0.0
        self.rotor_mass = np.full(2, J_eq * scale)
        self.rotor_damp = np.full(2, b_eq * scale)
        self.acc = [tr.AccelEstimator(dt), tr.AccelEstimator(dt)]
        self.Jf = cm.tendon_jacobian(np.zeros(model.n_joints), model)
        self.F_drive = np.zeros(2)

    def prime(self, state: cm.ContinuumState, F0=None):
        if F0 is not None:
            self.F_drive = np.array(F0, dtype=float)
        for j in range(2):
            self.acc[j].push(float(self.Jf[j] @ state.qdot))

    def step(self, F_cmd, F_obs_prev, tau_eq, state: cm.ContinuumState,
             spec: cm.ContactSpec, t: float) -> JcResult:
        p = self.p
        F_obs = cm.tendon_force_tracker(F_cmd, F_obs_prev, self.dt, p.tau_F)
        # motor-side tension, lagged like the observed one; rotor load is implicit
        self.F_drive = self.F_drive + (self.dt / p.tau_F) * (np.asarray(tau_eq) / p.r - self.F_drive)
        drive = self.F_drive
        new, hit = cm.advance_chain(state, drive, spec, t, self.dt, self.model, self.n_sub,
                                    self.rotor_mass, self.rotor_damp)
        dl = self.Jf @ new.q
        dl_dot = self.Jf @ new.qdot
        sides = []
        i_dd = np.empty(2)
        for j in range(2):
            acc = self.acc[j].push(float(dl_dot[j]))
            side = tr.winch_kinematics(dl[j], dl_dot[j], acc, p.r, j)
            sides.append(side)
            i_dd[j] = tr.reconstruct_current(side, F_obs[j], p, self.k_t)
        contact = hit or cm.point_force(spec, t, self.dt) != 0.0
        return JcResult(new, (sides[0], sides[1]), F_obs, i_dd, dl, dl_dot, contact)


# ----------------------------------------------------------------- outer loop


@dataclass
class OuterLoop:
    """PI law from a mechanical error to the commanded current (one tendon)."""

    drive: TendonDrive
    i_sat: float
    dt: float
    integ: float = 0.0
    start_dl: float = 0.0

    def reference(self, t: float) -> float:
        d = self.drive
        on = t >= d.t_on - 1e-12
        if d.mode == "current":
            return d.setpoint if on else d.initial
        if d.mode == "displacement":
            return d.setpoint if on else self.start_dl
        if d.mode in ("velocity", "force"):
            return d.setpoint if on else 0.0
        return 0.0

    def __call__(self, observed: dict, t: float) -> float:
        return outer_feedback(self, observed, t)


def outer_feedback(mode: OuterLoop, observed: dict, t: float) -> float:
    """Commanded current from the selected error; clamped to ±i_sat with
    conditional integration."""
    d = mode.drive
    if d.mode == "off":
        return 0.0
    ref = mode.reference(t)
    if d.mode == "current":
        return min(max(ref, -mode.i_sat), mode.i_sat)
    key = {"displacement": "dl", "velocity": "dl_dot", "force": "F_obs"}[d.mode]
    if d.mode != "force" and t < d.t_on - 1e-12:
        # hold the initial current until the drive starts
        return min(max(d.initial, -mode.i_sat), mode.i_sat)
    err = ref - observed[key]
    trial = mode.integ + err * mode.dt
    out = d.initial + d.K_p * err + d.K_i * trial
    if abs(out) <= mode.i_sat or (out > 0) != (err > 0):
        mode.integ = trial
    else:
        out = d.initial + d.K_p * err + d.K_i * mode.integ
    return min(max(out, -mode.i_sat), mode.i_sat)


# ------------------------------------------------------------------ equilibrium


def static_equilibrium(model: cm.ContinuumModel, F) -> np.ndarray:
    """Joint angles balancing constant tendon tensions against springs and limits."""
    tau = model.moment_arms * (F[0] - F[1])
    k, lim, kl = model.joint_stiffness, model.joint_limit, model.limit_stiffness
    q = tau / k
    over = np.abs(q) > lim
    q[over] = np.sign(tau[over]) * (np.abs(tau[over]) + kl * lim) / (k[over] + kl)
    return q


# ----------------------------------------------------------------- simulation


def disturbance_signal(cfg: ScenarioConfig):
    dcfg = cfg.disturbance
    if dcfg.kind == "none":
        return lambda k, t: 0.0
    if dcfg.kind == "constant":
        return lambda k, t: dcfg.amplitude
    if dcfg.kind == "sine":
        return lambda k, t: dcfg.amplitude * math.sin(2 * math.pi * dcfg.frequency * t)
    rng = make_rng(cfg.seed, "disturbance")
    seq = rng.uniform(-dcfg.amplitude, dcfg.amplitude, cfg.n_steps + 1)
    return lambda k, t: float(seq[k])


class Simulation:
    """Stepwise runner; ``run()`` executes the whole scenario and returns the log."""

    def __init__(self, cfg: ScenarioConfig, model: cm.ContinuumModel | None = None,
                 contact: cm.ContactSpec | None = None, current_loop_mode: str = "analog"):
        self.cfg = cfg
        self.model = model or cm.ContinuumModel.from_params(cfg.robot)
        self.spec = contact if contact is not None else cm.ContactSpec.from_config(cfg.contact, self.model)
        mp, tp = cfg.motor, cfg.transmission
        self.dt = cfg.dt
        self.loops = [CurrentLoop(mp, cfg.controller, cfg.dt, current_loop_mode) for _ in range(2)]
        self.outer = [OuterLoop(d, mp.i_sat, cfg.dt) for d in cfg.drives]
        self.plant = PlantObserver(self.model, tp, mp.k_t, cfg.dt, cfg.n_sub)
        self.dist = disturbance_signal(cfg)
        self.noise_rng = make_rng(cfg.seed, "current-noise")
        self.k = 0

        # start at rest in the static equilibrium of the initial currents
        i0 = np.array([d.initial if d.mode != "off" else 0.0 for d in cfg.drives])
        i0 = np.clip(i0, -mp.i_sat, mp.i_sat)
        F0 = np.maximum(tr.output_torque(torque_from_current(i0, mp), tp) / tp.r, 0.0)
        q0 = static_equilibrium(self.model, F0)
        self.state = cm.ContinuumState(q0, np.zeros_like(q0))
        self.plant.prime(self.state, F0)
        dl0 = self.plant.Jf @ q0
        for j in range(2):
            self.loops[j].reset(i0[j])
            self.outer[j].start_dl = float(dl0[j])
        i_dd0 = np.array([tr.reconstruct_current(tr.WinchSide(j), F0[j], tp, mp.k_t) for j in range(2)])
        self.ls = LoopState(
            t=0.0, i_cmd=i0.copy(), i_obs_star=i0.copy(), i_obs_star_raw=i0.copy(),
            i_obs_dstar=i_dd0, F_cmd=F0.copy(), F_obs=F0.copy(), theta_out=dl0 / tp.r)
        self.dl = dl0
        self.dl_dot = np.zeros(2)
        self.contact = False
        self.filters = [StreamingAverage(cfg.window) for _ in range(2)]
        self.i_filt = np.array([self.filters[j].push(i_dd0[j]) for j in range(2)])
        self.ref = np.array([o.reference(0.0) for o in self.outer])

        self.baseline = None
        if cfg.baseline:
            self.baseline = _Baseline(self)
        self.rows: list[list[float]] = []
        self._record()

    def set_drive(self, j: int, drive: TendonDrive, keep_integral: bool = True):
        o = self.outer[j]
        self.outer[j] = OuterLoop(drive, o.i_sat, o.dt, o.integ if keep_integral else 0.0, float(self.dl[j]))

    @property
    def t(self) -> float:
        return self.k * self.dt

    def step(self):
        cfg, mp, tp = self.cfg, self.cfg.motor, self.cfg.transmission
        ls = self.ls
        t0 = self.t
        t1 = t0 + self.dt
        k1 = self.k + 1
        observed = {"dl": None, "dl_dot": None, "F_obs": None}
        i_cmd = np.empty(2)
        i_star = np.empty(2)
        i_raw = np.empty(2)
        u_ff = np.empty(2)
        u_fb = np.empty(2)
        F_cmd = np.empty(2)
        tau_eq = np.empty(2)
        d = self.dist(k1, t0)
        for j in range(2):
            observed = {"dl": self.dl[j], "dl_dot": self.dl_dot[j], "F_obs": ls.F_obs[j]}
            i_cmd[j] = outer_feedback(self.outer[j], observed, t1)
            self.ref[j] = self.outer[j].reference(t1)
            # j_a: motor speed from the k-1 winch kinematics
            w_m = tp.G * ls.theta_out_dot[j]
            i_star[j], i_raw[j], u_ff[j], u_fb[j] = step_ja(
                i_cmd[j], ls.i_obs_dstar[j], self.loops[j], w_m, d, mp.i_sat)
            # j_b: k-1 kinematics only
            F_cmd[j] = step_jb(i_star[j], ls.winch(j), tp, mp.k_t)
            tau_eq[j] = tr.output_torque(mp.k_t * i_star[j], tp)
        # j_c
        try:
            res = self.plant.step(F_cmd, ls.F_obs, tau_eq, self.state, self.spec, t0)
        except np.linalg.LinAlgError as err:
            raise NumericalError(k1, f"factorization failed: {err}") from None
        if not np.all(np.isfinite(res.state.q)) or np.max(np.abs(res.state.qdot)) > 1e6:
            raise NumericalError(k1, "chain state diverged")
        i_dd = res.i_obs_dstar
        if cfg.current_noise > 0:
            i_dd = i_dd + self.noise_rng.normal(0.0, cfg.current_noise, 2)
        self.state = res.state
        self.dl, self.dl_dot, self.contact = res.dl, res.dl_dot, res.contact
        self.ls = LoopState(
            t=t1, i_cmd=i_cmd, e=i_cmd - i_star, I_e=np.array([lp.state.I_e for lp in self.loops]),
            i_obs_star=i_star, i_obs_star_raw=i_raw, i_obs_dstar=i_dd, F_cmd=F_cmd,
            F_obs=res.F_obs, theta_out=np.array([s.theta_out for s in res.winch]),
            theta_out_dot=np.array([s.theta_out_dot for s in res.winch]),
            theta_out_ddot=np.array([s.theta_out_ddot for s in res.winch]),
            u_ff=u_ff, u_fb=u_fb)
        self.i_filt = np.array([self.filters[j].push(i_dd[j]) for j in range(2)])
        if self.baseline is not None:
            self.baseline.step(self, t0, t1)
        self.k = k1
        self._record()

    def _record(self):
        ls = self.ls
        tip = cm.tip_position(self.state.q, self.model)
        row = [self.t]
        for arr in (ls.i_cmd, ls.i_obs_star, ls.i_obs_star_raw, ls.i_obs_dstar, self.i_filt,
                    ls.u_ff, ls.u_fb, ls.F_cmd, ls.F_obs, self.dl, self.dl_dot, ls.theta_out):
            row.extend((float(arr[0]), float(arr[1])))
        row.extend((float(tip[0]), float(tip[1]), 1.0 if self.contact else 0.0))
        row.extend((float(self.ref[0]), float(self.ref[1])))
        if self.baseline is not None:
            row.extend(self.baseline.row())
        self.rows.append(row)

    def run(self, n_steps: int | None = None) -> TimeSeriesLog:
        n = self.cfg.n_steps if n_steps is None else n_steps
        for _ in range(n):
            self.step()
        return self.log()

    def log(self) -> TimeSeriesLog:
        names = list(LOG_COLUMNS) + ["ref_0", "ref_1"]
        if self.baseline is not None:
            names += ["F_base_0", "F_base_1", "dl_base_0", "dl_base_1"]
        data = np.array(self.rows, dtype=float)
        cols = {n: data[:, j].copy() for j, n in enumerate(names)}
        return TimeSeriesLog(cols, config_items(self.cfg))


class _Baseline:
    """Single robot-dynamics comparison: the reference tension is applied
    directly to the chain, with no motor or winch in between."""

    def __init__(self, sim: Simulation):
        self.state = sim.state.copy()
        self.F = self._force(sim, 0.0)
        self.dl = sim.plant.Jf @ self.state.q

    def _force(self, sim: Simulation, t: float) -> np.ndarray:
        F = np.zeros(2)
        tp, mp = sim.cfg.transmission, sim.cfg.motor
        for j, o in enumerate(sim.outer):
            if o.drive.mode == "force":
                F[j] = max(o.reference(t), 0.0)
            elif o.drive.mode == "current":
                F[j] = max(tr.output_torque(mp.k_t * o.reference(t), tp) / tp.r, 0.0)
        return F

    def step(self, sim: Simulation, t0: float, t1: float):
        self.F = self._force(sim, t1)
        self.state = cm.advance_chain(self.state, self.F, cm.ContactSpec.none(), t0, sim.dt,
                                      sim.model, sim.cfg.n_sub)[0]
        self.dl = sim.plant.Jf @ self.state.q

    def row(self) -> list[float]:
        return [float(self.F[0]), float(self.F[1]), float(self.dl[0]), float(self.dl[1])]


def run_scenario(cfg: ScenarioConfig, **kw) -> TimeSeriesLog:
    return Simulation(cfg, **kw).run()
