"""Wrap-trial samples, simulated dataset generation and the on-disk format.

A dataset directory holds one ``<sample_id>.csv`` per trial (columns ``t``,
``current``, ``displacement``) and ``manifest.csv`` with columns
``sample_id, D_c, seed, provenance, file``.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..continuum import ContinuumModel, default_cylinder_center
from ..core import ConfigError, ScenarioConfig, load_config, make_rng, with_overrides
from ..loop import NumericalError, run_scenario

log = logging.getLogger(__name__)

PROVENANCES = ("simulated", "external")
DEFAULT_DIAMETERS = tuple(round(0.01 * k, 3) for k in range(1, 8))
JITTER = 0.10
MANIFEST_COLUMNS = ("sample_id", "D_c", "seed", "provenance", "file")


@dataclass(frozen=True, eq=False)
class WrapSample:
    D_c: float
    current: np.ndarray
    displacement: np.ndarray
    dt: float
    provenance: str = "simulated"
    sample_id: str = ""
    seed: int = 0

    def __post_init__(self):
        cur = np.asarray(self.current, dtype=float)
        dis = np.asarray(self.displacement, dtype=float)
        object.__setattr__(self, "current", cur)
        object.__setattr__(self, "displacement", dis)
        if cur.shape != dis.shape or cur.ndim != 1:
            raise ValueError("current and displacement traces must have equal length")
        if not self.D_c > 0:
            raise ValueError("D_c must be > 0")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")


class GeneratedDataset(list):
    """List of samples plus the trials that failed, as (sample_id, message)."""

    def __init__(self, samples=(), failures=()):
        super().__init__(samples)
        self.failures = list(failures)


def sample_id(D_c: float, rep: int) -> str:
    return f"d{int(round(D_c * 1000)):03d}_r{rep:02d}"


def trial_config(D_c: float, rep: int, seed: int, base: ScenarioConfig | None = None,
                 placement: str = "standoff") -> ScenarioConfig:
    """Wrap scenario for one trial with the drive speed and the cylinder
    placement each scaled by an independent factor in [0.9, 1.1].

    ``placement = "standoff"`` scales the distance of the cylinder axis from
    the straight arm; ``"along"`` scales its position along the arm.
    """
    if placement not in ("standoff", "along"):
        raise ValueError(f"unknown placement jitter {placement!r}")
    base = base or load_config("scenario = wrap-cylinder\n")
    rng = make_rng(seed, f"wrap/{sample_id(D_c, rep)}")
    a, b = 1.0 + JITTER * (2.0 * rng.random(2) - 1.0)
    cx, cy = default_cylinder_center(D_c, ContinuumModel.from_params(base.robot))
    if placement == "standoff":
        cy *= a
    else:
        cx *= a
    drv = base.drives[0]
    return with_overrides(base, contact={"diameter": float(D_c), "center_x": float(cx),
                                         "center_y": float(cy)},
                          tendon0={"setpoint": float(drv.setpoint * b)})


def simulate_trial(D_c: float, rep: int, seed: int, base: ScenarioConfig | None = None,
                   placement: str = "standoff") -> WrapSample:
    cfg = trial_config(D_c, rep, seed, base, placement)
    lg = run_scenario(cfg)
    return WrapSample(float(D_c), lg["i_obs_dstar_0"], lg["dl_0"], cfg.dt, "simulated",
                      sample_id(D_c, rep), seed)


def _trial(args):
    D_c, rep, seed, base, placement = args
    try:
        return simulate_trial(D_c, rep, seed, base, placement), None
    except (NumericalError, ConfigError, FloatingPointError, ValueError) as exc:
        return None, (sample_id(D_c, rep), f"{type(exc).__name__}: {exc}")


def generate_dataset(diameters=DEFAULT_DIAMETERS, reps: int = 5, seed: int = 0,
                     base: ScenarioConfig | None = None, workers: int = 1,
                     placement: str = "standoff") -> GeneratedDataset:
    """One wrap trial per diameter and repetition.  A failing trial is logged
    and recorded in ``failures``; the others still run."""
    diameters = [float(d) for d in diameters]
    if not diameters:
        raise ValueError("diameters must be non-empty")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    jobs = [(d, r, seed, base, placement) for d in diameters for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_trial, jobs))
    else:
        results = [_trial(j) for j in jobs]
    out = GeneratedDataset()
    for smp, fail in results:
        if fail is not None:
            log.warning("trial %s failed: %s", *fail)
            out.failures.append(fail)
        else:
            out.append(smp)
    return out


# ---------------------------------------------------------------------- io


def write_sample(path, s: WrapSample) -> None:
    t = np.arange(len(s.current)) * s.dt
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "current", "displacement"])
        for row in zip(t, s.current, s.displacement):
            w.writerow([repr(float(v)) for v in row])


def read_trace(path) -> tuple[float, np.ndarray, np.ndarray]:
    """(dt, current, displacement) from a trace CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    head = rows[0]
    missing = [c for c in ("t", "current", "displacement") if c not in head]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    a = np.array([[float(r[head.index(c)]) for c in ("t", "current", "displacement")]
                  for r in rows[1:]])
    if len(a) < 2:
        raise ValueError(f"{path}: fewer than two samples")
    dt = float(np.mean(np.diff(a[:, 0])))
    return dt, a[:, 1], a[:, 2]


def save_dataset(directory, samples) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for s in samples:
            name = f"{s.sample_id}.csv"
            write_sample(d / name, s)
            w.writerow([s.sample_id, repr(s.D_c), s.seed, s.provenance, name])
    return d


def read_manifest(directory) -> list[dict]:
    path = Path(directory) / "manifest.csv"
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and any(c not in rows[0] for c in MANIFEST_COLUMNS):
        raise ValueError(f"{path}: manifest must have columns {MANIFEST_COLUMNS}")
    return rows


def load_dataset(directory) -> list[WrapSample]:
    d = Path(directory)
    out = []
    for row in read_manifest(d):
        dt, cur, dis = read_trace(d / row["file"])
        out.append(WrapSample(float(row["D_c"]), cur, dis, dt, row["provenance"],
                              row["sample_id"], int(row["seed"])))
    return out


def load_sample(path, D_c: float = math.nan, provenance: str = "external") -> WrapSample:
    """A single trace CSV; the label is looked up in a sibling manifest when
    ``D_c`` is not given.  Unlabelled traces raise ``LookupError``."""
    p = Path(path)
    dt, cur, dis = read_trace(p)
    sid, seed = p.stem, 0
    if not math.isfinite(D_c):
        man = p.parent / "manifest.csv"
        if man.exists():
            for row in read_manifest(p.parent):
                if row["file"] == p.name:
                    D_c, provenance = float(row["D_c"]), row["provenance"]
                    sid, seed = row["sample_id"], int(row["seed"])
        if not math.isfinite(D_c):
            raise LookupError(f"{p}: no label in a sibling manifest")
    return WrapSample(D_c, cur, dis, dt, provenance, sid, seed)
