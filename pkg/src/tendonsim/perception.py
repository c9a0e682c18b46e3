"""Contact perception from the reconstructed motor current.

Passive: sensitivity of the steady current shift to where an impulse lands,
and recovery of the contact period under a rotating pusher.  Active: a
rate-based detector (absolute rise, relative rise, rolling slope) run online
while one tendon uncurls the arm.
"""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import detrend, find_peaks

from . import continuum as cm
from .core import ScenarioConfig, TendonDrive, TimeSeriesLog, with_overrides
from .loop import Simulation

RULES = ("abs", "rel", "slope")


class PeriodNotRecoverable(ValueError):
    """The autocorrelation of the trace has no peak above the prominence floor."""


@dataclass(frozen=True)
class DetectorConfig:
    abs_rise: float = 0.8
    rel_rise: float = 0.5
    slope: float = 6.0
    window: int = 50
    baseline_window: int = 500
    refractory: float = 0.3

    def __post_init__(self):
        for name in ("abs_rise", "rel_rise", "slope"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.window < 2 or self.baseline_window < 2:
            raise ValueError("windows must be >= 2")
        if self.refractory < 0:
            raise ValueError("refractory must be >= 0")


@dataclass(frozen=True)
class ContactEvent:
    t: float
    rule: str
    value: float
    baseline: float


def _reaches(x: float, thr: float) -> bool:
    # inclusive, with room for the rounding in (b + thr) - b
    return x >= thr - 1e-12 * max(1.0, abs(thr))


class ContactDetector:
    """Streaming detector; ``push`` one filtered sample per control cycle.

    The baseline is the median of the ``baseline_window`` samples preceding
    the current one; nothing fires until that buffer is full.  The slope is
    the least-squares fit over the last ``window`` samples.
    """

    def __init__(self, dt: float, cfg: DetectorConfig = DetectorConfig()):
        if not dt > 0:
            raise ValueError("dt must be > 0")
        self.dt, self.cfg = dt, cfg
        self.k = -1
        self._base: deque[float] = deque(maxlen=cfg.baseline_window)
        self._win: deque[float] = deque(maxlen=cfg.window)
        n = cfg.window
        self._x = (np.arange(n) - (n - 1) / 2) * dt
        self._sxx = float(self._x @ self._x)
        self._last_event = -math.inf
        self.events: list[ContactEvent] = []

    def slope(self) -> float:
        if len(self._win) < self.cfg.window:
            return 0.0
        return float(self._x @ np.fromiter(self._win, float, self.cfg.window)) / self._sxx

    def push(self, x: float) -> ContactEvent | None:
        cfg = self.cfg
        self.k += 1
        t = self.k * self.dt
        self._win.append(float(x))
        ev = None
        if len(self._base) == cfg.baseline_window and t - self._last_event >= cfg.refractory - 1e-12:
            b = float(np.median(self._base))
            rise = abs(x - b)
            s = self.slope()
            rule = None
            if _reaches(rise, cfg.abs_rise):
                rule = "abs"
            elif b != 0.0 and _reaches(rise, cfg.rel_rise * abs(b)):
                rule = "rel"
            elif _reaches(abs(s), cfg.slope):
                rule = "slope"
            if rule is not None:
                ev = ContactEvent(t, rule, float(x), b)
                self.events.append(ev)
                self._last_event = t
        self._base.append(float(x))
        return ev


def detect_contact(i_trace, dt: float, cfg: DetectorConfig = DetectorConfig()) -> list[ContactEvent]:
    """Offline pass of :class:`ContactDetector` over a filtered current trace."""
    x = np.asarray(i_trace, dtype=float)
    if x.ndim != 1 or len(x) <= cfg.baseline_window:
        raise ValueError(f"trace too short: need more than {cfg.baseline_window} samples")
    det = ContactDetector(dt, cfg)
    for v in x:
        det.push(v)
    return det.events


def events_to_csv(events) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "rule", "value", "baseline"])
    for e in events:
        w.writerow([f"{e.t:.12g}", e.rule, f"{e.value:.12g}", f"{e.baseline:.12g}"])
    return buf.getvalue()


def events_from_csv(text: str) -> list[ContactEvent]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [ContactEvent(float(r["time"]), r["rule"], float(r["value"]), float(r["baseline"]))
            for r in rows]


# ------------------------------------------------------------------ passive


def sensitivity_profile(base_cfg: ScenarioConfig, links, channel: int = 0) -> np.ndarray:
    """Peak excursion of the filtered reconstructed current after an impulse,
    one run per contact link.

    The shift is measured from the filtered value at the impulse onset, so
    the load carried before contact cancels out.
    """
    if base_cfg.contact.kind not in ("point-impulse", "none"):
        raise ValueError("sensitivity_profile expects a single-impulse template")
    out = []
    for link in links:
        cfg = with_overrides(base_cfg, contact={"link": int(link)})
        log = Simulation(cfg).run()
        y = log[f"i_obs_dstar_filt_{channel}"]
        k0 = min(int(round(cfg.contact.t_on / cfg.dt)), len(y) - 1)
        out.append(float(np.max(np.abs(y[k0:] - y[k0]))))
    return np.array(out)


def apparent_period(i_trace, dt: float, prominence: float = 0.25,
                    min_periods: int = 5) -> float:
    """Lag of the first prominent peak in the normalized autocorrelation of the
    linearly detrended trace.

    Lags up to half the record are searched.  ``min_periods`` only bounds the
    lag: a peak at lag L is accepted if the trace spans at least
    ``min_periods`` multiples of L.
    """
    x = detrend(np.asarray(i_trace, dtype=float))
    n = len(x)
    if n < 8 or not np.any(x):
        raise PeriodNotRecoverable("trace is constant or too short")
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    r = np.fft.irfft(f * np.conj(f), m)[:n]
    r = r / np.arange(n, 0, -1)  # unbiased
    r = r / r[0]
    r = r[: n // 2]
    peaks, _ = find_peaks(r, prominence=prominence)
    peaks = peaks[peaks * min_periods <= n]
    if not len(peaks):
        raise PeriodNotRecoverable("no autocorrelation peak above the prominence floor")
    return float(peaks[0] * dt)


def periodic_trace(cfg: ScenarioConfig, channel: int = 0) -> np.ndarray:
    """Filtered reconstructed current from contact onset to the end of the run."""
    log = Simulation(cfg).run()
    k0 = int(round(cfg.contact.t_on / cfg.dt))
    return log[f"i_obs_dstar_filt_{channel}"][k0:]


# ------------------------------------------------------------------- active


def active_uncurl_scan(cfg: ScenarioConfig, obstacle: cm.ContactSpec | None,
                       det: DetectorConfig = DetectorConfig(), channel: int | None = None,
                       recoil_speed: float | None = None
                       ) -> tuple[ContactEvent | None, TimeSeriesLog]:
    """Uncurl with the velocity-driven tendon, watch its filtered current, and
    on the first event reverse the drive back toward the starting shape.

    After detection the drive tendon switches to releasing at the same speed
    while the antagonist pulls at the curl current, until the starting
    tendon excursion is recovered or the run ends.
    """
    if channel is None:
        modes = [d.mode for d in cfg.drives]
        if "velocity" not in modes:
            raise ValueError("active_uncurl_scan needs one velocity-driven tendon")
        channel = modes.index("velocity")
    drv = cfg.drives[channel]
    other = 1 - channel
    sim = Simulation(cfg, contact=obstacle if obstacle is not None else cm.ContactSpec.none())
    detector = ContactDetector(cfg.dt, det)
    detector.push(sim.i_filt[channel])
    start_dl = float(sim.dl[channel])
    first: ContactEvent | None = None
    recoiling = False
    speed = abs(drv.setpoint) if recoil_speed is None else recoil_speed
    for _ in range(cfg.n_steps):
        sim.step()
        ev = detector.push(sim.i_filt[channel])
        if ev is not None and first is None:
            first = ev
            recoiling = True
            sim.set_drive(channel, replace(drv, setpoint=-math.copysign(speed, drv.setpoint),
                                           t_on=0.0), keep_integral=False)
            back = cfg.drives[other]
            hold = max(abs(back.initial), abs(back.setpoint))
            sim.set_drive(other, TendonDrive("current", hold, 0.0, hold))
        if recoiling and (sim.dl[channel] - start_dl) * math.copysign(1.0, drv.setpoint) <= 0:
            sim.set_drive(channel, TendonDrive("current", 0.0, 0.0, 0.0))
            recoiling = False
    return first, sim.log()


def free_uncurl_shapes(cfg: ScenarioConfig) -> np.ndarray:
    """Joint angles of an obstacle-free uncurl run, one row per control step."""
    sim = Simulation(cfg, contact=cm.ContactSpec.none())
    qs = [sim.state.q.copy()]
    for _ in range(cfg.n_steps):
        sim.step()
        qs.append(sim.state.q.copy())
    return np.array(qs)


def seeded_obstacle(cfg: ScenarioConfig, seed: int, shapes: np.ndarray | None = None,
                    t_range=(0.8, 2.4), links=(12, 23), radius=(0.005, 0.015)) -> cm.ContactSpec:
    """Rigid cylinder centred on the spot a chain vertex sweeps through in the
    free run: time, vertex and radius drawn from ``seed``."""
    from .core import make_rng
    rng = make_rng(seed, "uncurl-obstacle")
    qs = free_uncurl_shapes(cfg) if shapes is None else shapes
    model = cm.ContinuumModel.from_params(cfg.robot)
    t = rng.uniform(*t_range)
    j = int(rng.integers(links[0], links[1] + 1))
    r = float(rng.uniform(*radius))
    k = min(int(round(t / cfg.dt)), len(qs) - 1)
    p = cm.chain_points(qs[k], model)[j + 1]
    return cm.ContactSpec(kind="cylinder", center=(float(p[0]), float(p[1])), diameter=2 * r,
                          stiffness=cfg.contact.stiffness, damping_ratio=cfg.contact.damping_ratio)


def detection_latency(event: ContactEvent | None, log: TimeSeriesLog) -> float:
    """Seconds from the first logged penetration to the event; inf when either
    never happens or the event precedes contact."""
    c = np.flatnonzero(log["contact"] > 0)
    if event is None or not len(c):
        return math.inf
    lat = event.t - float(log["t"][c[0]])
    return lat if lat >= -1e-12 else math.inf
