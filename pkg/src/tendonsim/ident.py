"""Identification of the transmission parameters p = [eta, b_m, J_m] from a
measured current trace.

The objective simulates the complete loop at p over a fixed excitation and
compares the reconstructed current with the reference through a Huber
weight.  The search is a multistart Nelder-Mead simplex in (eta, log10 b_m,
log10 J_m) with every vertex projected onto the feasible box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import ScenarioConfig, TimeSeriesLog, load_config, make_rng, with_overrides
from .loop import NumericalError, Simulation

PARAM_NAMES = ("eta", "b_m", "J_m")
DEFAULT_BOUNDS = ((0.6, 1.0), (1e-5, 1e-3), (5e-6, 5e-4))
# eta's upper bound is attainable, every other bound is open
_CLOSED_UPPER = (True, False, False)
_EDGE = 1e-9


def huber(r, delta: float = 0.5):
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * a * a, delta * (a - 0.5 * delta))


def default_excitation() -> tuple[ScenarioConfig, ...]:
    """A short force step followed by a constant-speed drive (a displacement ramp)."""
    step = load_config("scenario = force-step\nduration = 0.3\nbaseline = false\nn_sub = 5\n")
    ramp = load_config("scenario = extreme-curl\nduration = 0.25\nn_sub = 5\n")
    return (step, ramp)


@dataclass(frozen=True)
class IdentProblem:
    """``reference`` holds the measured current sampled on the concatenated
    excitation grid; ``t`` only has to be increasing (its unit is irrelevant)."""

    t: np.ndarray
    reference: np.ndarray
    excitation: tuple[ScenarioConfig, ...] = field(default_factory=default_excitation)
    bounds: tuple[tuple[float, float], ...] = DEFAULT_BOUNDS
    loss: str = "huber"
    delta: float = 0.5
    max_evals: int = 400
    n_starts: int = 8
    seed: int = 0
    channel: int = 0

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        ref = np.asarray(self.reference, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "reference", ref)
        if ref.ndim != 1 or len(ref) == 0:
            raise ValueError("reference trace is empty")
        if len(t) != len(ref):
            raise ValueError("t and reference differ in length")
        if len(ref) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("reference timestamps must be increasing")
        if not np.all(np.isfinite(ref)):
            raise ValueError("reference contains non-finite samples")
        need = sum(c.n_steps + 1 for c in self.excitation)
        if len(ref) != need:
            raise ValueError(f"reference has {len(ref)} samples, excitation produces {need}")
        if self.loss not in ("huber", "l2"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        for lo, hi in self.bounds:
            if not 0 < lo < hi:
                raise ValueError("bounds must satisfy 0 < lo < hi")
        if self.n_starts < 1 or self.max_evals < self.n_starts * 4:
            raise ValueError("budget too small for the number of starts")


@dataclass(frozen=True)
class IdentResult:
    p_star: tuple[float, float, float]
    objective: float
    evaluations: int
    best_trace: np.ndarray  # best-so-far objective after each evaluation
    starts: tuple[dict, ...]  # per start: x0, p, objective, evaluations


def with_params(cfg: ScenarioConfig, p) -> ScenarioConfig:
    eta, b_m, J_m = (float(v) for v in p)
    return with_overrides(cfg, transmission={"eta": eta, "b_m": b_m, "J_m": J_m})


def simulate_current(p, excitation, channel: int = 0) -> np.ndarray:
    """Reconstructed current over the concatenated excitation at parameters p."""
    out = []
    for cfg in excitation:
        log = Simulation(with_params(cfg, p)).run()
        out.append(log[f"i_obs_dstar_{channel}"])
    return np.concatenate(out)


def objective(p, prob: IdentProblem) -> float:
    """Sum of squared Huber weights of the current mismatch; +inf when the
    simulation fails or p lies outside the box."""
    if not in_box(p, prob.bounds):
        raise ValueError(f"p = {tuple(p)} outside the feasible box")
    try:
        sim = simulate_current(p, prob.excitation, prob.channel)
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError):
        return math.inf
    r = sim - prob.reference
    if not np.all(np.isfinite(r)):
        return math.inf
    w = huber(r, prob.delta) if prob.loss == "huber" else np.abs(r)
    return float(np.sum(w * w))


def in_box(p, bounds) -> bool:
    for v, (lo, hi), closed in zip(p, bounds, _CLOSED_UPPER):
        if not (lo < v < hi or (closed and v == hi)):
            return False
    return True


# ------------------------------------------------------------ coordinates


def _to_x(p) -> np.ndarray:
    return np.array([p[0], math.log10(p[1]), math.log10(p[2])])


def _to_p(x) -> tuple[float, float, float]:
    return (float(x[0]), float(10.0 ** x[1]), float(10.0 ** x[2]))


def _x_box(bounds) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([bounds[0][0], math.log10(bounds[1][0]), math.log10(bounds[2][0])])
    hi = np.array([bounds[0][1], math.log10(bounds[1][1]), math.log10(bounds[2][1])])
    return lo, hi


def project(x, bounds) -> np.ndarray:
    """Clip into the box, keeping open bounds strictly feasible."""
    lo, hi = _x_box(bounds)
    span = hi - lo
    lo_in = lo + _EDGE * span
    hi_in = np.where(_CLOSED_UPPER, hi, hi - _EDGE * span)
    return np.minimum(np.maximum(np.asarray(x, dtype=float), lo_in), hi_in)


# ------------------------------------------------------------ Nelder-Mead


def nelder_mead(f, x0, step, budget: int, proj, xtol: float = 1e-4, ftol: float = 1e-10):
    """Plain Nelder-Mead (reflect 1, expand 2, contract 1/2, shrink 1/2) with
    every trial point passed through ``proj``.

    Returns (x_best, f_best, evaluations, history of f per evaluation).
    """
    n = len(x0)
    hist: list[float] = []

    def ev(x):
        v = f(x)
        hist.append(v)
        return v

    pts = [proj(x0)]
    for k in range(n):
        e = np.array(pts[0], copy=True)
        e[k] += step[k]
        e = proj(e)
        if np.allclose(e, pts[0]):
            e[k] = pts[0][k] - step[k]
            e = proj(e)
        pts.append(e)
    vals = [ev(x) for x in pts]
    while len(hist) < budget:
        order = np.argsort(vals, kind="stable")
        pts = [pts[i] for i in order]
        vals = [vals[i] for i in order]
        size = max(np.max(np.abs(x - pts[0])) for x in pts[1:])
        finite = np.isfinite(vals[-1]) and np.isfinite(vals[0])
        if size < xtol or (finite and vals[-1] - vals[0] <= ftol * abs(vals[0]) + 1e-300):
            break
        c = np.mean(pts[:-1], axis=0)
        xr = proj(c + (c - pts[-1]))
        fr = ev(xr)
        if fr < vals[0]:
            if len(hist) >= budget:
                pts[-1], vals[-1] = xr, fr
                break
            xe = proj(c + 2.0 * (c - pts[-1]))
            fe = ev(xe)
            pts[-1], vals[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < vals[-2]:
            pts[-1], vals[-1] = xr, fr
        else:
            if len(hist) >= budget:
                break
            if fr < vals[-1]:
                xc = proj(c + 0.5 * (xr - c))
            else:
                xc = proj(c + 0.5 * (pts[-1] - c))
            fc = ev(xc)
            if fc < min(fr, vals[-1]):
                pts[-1], vals[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    if len(hist) >= budget:
                        break
                    pts[i] = proj(pts[0] + 0.5 * (pts[i] - pts[0]))
                    vals[i] = ev(pts[i])
    i = int(np.argmin(vals))
    return pts[i], vals[i], len(hist), hist


def identify(prob: IdentProblem, step=(0.08, 0.4, 0.4)) -> IdentResult:
    """Multistart search; starts are drawn uniformly in the scaled box from
    the problem seed and the budget is split evenly between them."""
    rng = make_rng(prob.seed, "ident")
    lo, hi = _x_box(prob.bounds)
    proj = lambda x: project(x, prob.bounds)  # noqa: E731
    fobj = lambda x: objective(_to_p(x), prob)  # noqa: E731
    per = prob.max_evals // prob.n_starts
    starts = []
    trace: list[float] = []
    best_x, best_f = None, math.inf
    for s in range(prob.n_starts):
        x0 = proj(lo + rng.random(3) * (hi - lo))
        x, fx, nev, hist = nelder_mead(fobj, x0, np.asarray(step), per, proj)
        trace.extend(hist)
        starts.append({"x0": _to_p(x0), "p": _to_p(x), "objective": fx, "evaluations": nev})
        if fx < best_f:
            best_x, best_f = x, fx
    if best_x is None or not math.isfinite(best_f):
        raise RuntimeError("no feasible evaluation within the budget")
    best_trace = np.minimum.accumulate(np.array(trace))
    return IdentResult(_to_p(best_x), best_f, len(trace), best_trace, tuple(starts))


# ------------------------------------------------------------------- io


def load_reference(path, channel: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Time and measured current from a log CSV; ``i_real`` wins over the
    reconstructed-current column when both exist."""
    log = TimeSeriesLog.load(path)
    for name in ("i_real", f"i_obs_dstar_{channel}"):
        if name in log.columns:
            return log["t"], log[name]
    raise ValueError(f"{path}: no i_real or i_obs_dstar_{channel} column")


def synthetic_problem(p_true=(0.85, 1e-4, 5e-5), noise: float = 0.0, **kw) -> IdentProblem:
    """Problem whose reference is the simulator's own current at ``p_true``."""
    exc = kw.pop("excitation", None) or default_excitation()
    ref = simulate_current(p_true, exc, kw.get("channel", 0))
    if noise > 0:
        ref = ref + make_rng(kw.get("seed", 0), "ident-noise").normal(0.0, noise, len(ref))
    t = np.arange(len(ref)) * exc[0].dt
    return IdentProblem(t, ref, excitation=exc, **kw)


def report(res: IdentResult) -> str:
    lines = ["# tendonsim identification report 1"]
    for name, v in zip(PARAM_NAMES, res.p_star):
        lines.append(f"{name} = {v!r}")
    lines.append(f"objective = {res.objective!r}")
    lines.append(f"evaluations = {res.evaluations}")
    for k, s in enumerate(res.starts):
        p = ", ".join(f"{v:.6g}" for v in s["p"])
        lines.append(f"start.{k} = {s['objective']!r} [{p}] {s['evaluations']}")
    return "\n".join(lines) + "\n"


def with_budget(prob: IdentProblem, **kw) -> IdentProblem:
    return replace(prob, **kw)
