"""Summary numbers computed from logs: force-step delay and rise time,
extreme-curl collapse, rank correlation."""

from __future__ import annotations

import numpy as np
from scipy.stats import spearmanr

from .core import TimeSeriesLog

SETTLE = 0.05  # s after the step before the delay window opens


def xcorr_delay(cmd, obs, dt: float, max_lag: int = 150) -> float:
    """Shift (s) of ``obs`` behind ``cmd`` maximizing the normalized
    cross-correlation; lags where either overlap is constant are skipped."""
    c = np.asarray(cmd, dtype=float)
    o = np.asarray(obs, dtype=float)
    n = len(c)
    best, lag = -np.inf, 0
    for L in range(min(max_lag, n - 2) + 1):
        a = c[: n - L] - c[: n - L].mean()
        b = o[L:] - o[L:].mean()
        den = np.sqrt((a @ a) * (b @ b))
        if den <= 0:
            continue
        r = (a @ b) / den
        if r > best + 1e-15:
            best, lag = r, L
    return lag * dt


def rise_time(y, dt: float, k0: int, tail: float = 0.1) -> float:
    """10-90% rise time of ``y`` after sample ``k0``; the final value is the
    mean of the last ``tail`` fraction of the record."""
    y = np.asarray(y, dtype=float)
    y0 = y[k0]
    yf = y[-max(1, int(len(y) * tail)):].mean()
    span = yf - y0
    if span == 0:
        return 0.0
    frac = (y[k0:] - y0) / span
    above10 = np.flatnonzero(frac >= 0.1)
    above90 = np.flatnonzero(frac >= 0.9)
    if not len(above90):
        return np.inf
    return (above90[0] - above10[0]) * dt


def force_step_summary(log: TimeSeriesLog, channel: int = 0) -> dict:
    """Delay and rise time of the full model and, when logged, the baseline.

    The full-model delay compares the commanded with the observed tendon
    force from ``SETTLE`` after the step on.  The baseline has no inner loops,
    so its command is the setpoint itself and the window opens one step
    before the step.
    """
    cfg = log.config()
    dt = cfg.dt
    t_on = cfg.drives[channel].t_on
    k_on = int(round(t_on / dt))
    k_set = int(round((t_on + SETTLE) / dt))
    out = {
        "delay_full": xcorr_delay(log[f"F_cmd_{channel}"][k_set:], log[f"F_obs_{channel}"][k_set:], dt),
        "rise_full": rise_time(log[f"F_obs_{channel}"], dt, k_on),
    }
    if f"F_base_{channel}" in log:
        k0 = max(k_on - 1, 0)
        out["delay_base"] = xcorr_delay(log[f"ref_{channel}"][k0:], log[f"F_base_{channel}"][k0:], dt)
        out["rise_base"] = rise_time(log[f"F_base_{channel}"], dt, k_on)
    return out


def free_motion_rate(dl_dot, dt: float, t0: float = 0.2, t1: float = 1.0) -> float:
    """Median tendon speed over the free-motion window [t0, t1)."""
    k0, k1 = int(round(t0 / dt)), int(round(t1 / dt))
    return float(np.median(np.asarray(dl_dot)[k0:k1]))


def spearman(x, y) -> float:
    return float(spearmanr(x, y).statistic)
