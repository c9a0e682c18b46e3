"""Fixed 16-entry feature vector of one wrap trial.

The ordering below is part of the model file format; changing it requires a
new ``FEATURE_VERSION``.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import detrend

from ..core import moving_average

FEATURE_VERSION = 1
FEATURE_NAMES = (
    # current
    "i_mean", "i_std", "i_max", "i_final", "t_90", "i_abs_integral",
    # displacement
    "dl_final", "dl_dot_max", "t_collapse",
    # spectral
    "f_dominant", "band_0_5", "band_5_50",
    # electromechanical
    "di_ddl", "i_at_collapse", "corr_i_dl_dot", "i_post_mean",
)
N_FEATURES = len(FEATURE_NAMES)
MIN_SAMPLES = 64
RATE_WINDOW = 100


def displacement_rate(dl, dt: float) -> np.ndarray:
    """Backward difference (zero at the first sample), then a causal
    100-sample moving average."""
    dl = np.asarray(dl, dtype=float)
    d = np.zeros_like(dl)
    d[1:] = np.diff(dl) / dt
    return moving_average(d, RATE_WINDOW)


def _moving_reference(s) -> float:
    peak = s.max() if len(s) else 0.0
    return float(np.median(s[s > 0.1 * peak])) if peak > 0 else 0.0


def collapse_index(rate) -> int:
    """First sample after the peak speed where |rate| drops below 10% of the
    median speed of the moving phase.

    The moving phase is the set of samples faster than 10% of the peak; using
    the whole-trace median would let a long stall pull the reference to zero.
    Returns 0 for a trace that never moves and the last index when the motion
    never collapses.
    """
    s = np.abs(rate)
    ref = _moving_reference(s)
    if not ref > 0:
        return 0
    k_peak = int(np.argmax(s))
    below = np.flatnonzero(s[k_peak:] < 0.1 * ref)
    return k_peak + int(below[0]) if len(below) else len(s) - 1


def _corr(a, b) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    return float(a @ b / den) if den > 0 else 0.0


def _slope(x, y) -> float:
    if len(x) < 2:
        return 0.0
    x = x - x.mean()
    sxx = x @ x
    return float(x @ (y - y.mean()) / sxx) if sxx > 0 else 0.0


def spectral_features(i, dt: float) -> tuple[float, float, float]:
    x = detrend(np.asarray(i, dtype=float))
    X = np.fft.rfft(x)
    p = (X.real ** 2 + X.imag ** 2) / len(x)
    f = np.fft.rfftfreq(len(x), dt)
    f_dom = float(f[1 + np.argmax(p[1:])]) if len(p) > 1 and np.any(p[1:] > 0) else 0.0
    lo = float(p[f < 5.0].sum())
    hi = float(p[(f >= 5.0) & (f < 50.0)].sum())
    return f_dom, lo, hi


def feature_vector(current, displacement, dt: float) -> np.ndarray:
    i = np.asarray(current, dtype=float)
    dl = np.asarray(displacement, dtype=float)
    n = len(i)
    if i.ndim != 1 or dl.shape != i.shape:
        raise ValueError("current and displacement traces must be 1-D and of equal length")
    if n < MIN_SAMPLES:
        raise ValueError(f"trace too short: {n} < {MIN_SAMPLES} samples")
    if not dt > 0:
        raise ValueError("dt must be > 0")

    i_max = float(i.max())
    if i_max > 0:
        t90 = float(np.argmax(i >= 0.9 * i_max)) * dt
    else:
        t90 = 0.0
    rate = displacement_rate(dl, dt)
    kc = collapse_index(rate)
    f_dom, e_lo, e_hi = spectral_features(i, dt)
    # wrap phase: before the collapse, while still moving at half the
    # reference speed (the stall itself makes the slope ill-conditioned)
    s = np.abs(rate[:kc + 1])
    wrap = np.flatnonzero(s >= 0.5 * _moving_reference(np.abs(rate)))

    out = np.array([
        i.mean(), i.std(), i_max, i[-1], t90, np.abs(i).sum() * dt,
        dl[-1], np.abs(rate).max(), kc * dt,
        f_dom, e_lo, e_hi,
        _slope(dl[wrap], i[wrap]), i[kc], _corr(i, rate), i[kc:].mean(),
    ])
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite feature")
    return out


def extract_features(sample) -> np.ndarray:
    return feature_vector(sample.current, sample.displacement, sample.dt)
