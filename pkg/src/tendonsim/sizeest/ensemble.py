"""Stacking ensemble: ridge and RBF-SVR base models whose out-of-fold
predictions feed a boosted-tree meta-learner, plus metrics and the model
file format."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import make_rng
from .features import FEATURE_NAMES, FEATURE_VERSION, extract_features, feature_vector
from .models import (BoostedTrees, RidgeModel, SVRModel, Tree, train_boosting, train_ridge,
                     train_svr)

MODEL_FORMAT = "tendonsim-ensemble"
MODEL_VERSION = 1
TARGET_SCALE = 1000.0  # models work in millimetres


@dataclass(frozen=True)
class Hyperparams:
    lam: float = 1.0
    C: float = 10.0
    epsilon: float = 1.0  # mm
    gamma: float = 1.0 / 16
    n_trees: int = 50
    depth: int = 2
    learning_rate: float = 0.1
    svr_tol: float = 1e-4


@dataclass(frozen=True)
class EnsembleModel:
    mean: np.ndarray
    scale: np.ndarray
    ridge: RidgeModel
    svr: SVRModel
    meta: BoostedTrees
    hyper: Hyperparams = field(default_factory=Hyperparams)
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not np.all(self.scale > 0):
            raise ValueError("standardization scales must be > 0")
        if len(self.meta.trees) < 1:
            raise ValueError("meta-learner needs at least one tree")

    def base_predictions(self, F) -> np.ndarray:
        Z = (np.atleast_2d(F) - self.mean) / self.scale
        return np.column_stack([self.ridge.predict(Z), self.svr.predict(Z)])

    def predict_features(self, F) -> np.ndarray:
        """Diameters in metres for rows of raw features."""
        return self.meta.predict(self.base_predictions(F)) / TARGET_SCALE


def standardizer(F) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and population std; a constant feature gets scale 1."""
    mu = F.mean(axis=0)
    sd = F.std(axis=0)
    return mu, np.where(sd > 0, sd, 1.0)


def assign_folds(ids, labels, folds: int, seed: int) -> np.ndarray:
    """Fold per sample, independent of input order.

    Samples are ranked by (label, id); consecutive blocks of ``folds`` ranks
    are each dealt to distinct folds in a seeded order, so every fold spans
    the label range.
    """
    ids = [str(s) for s in ids]
    if len(set(ids)) != len(ids):
        raise ValueError("sample ids must be unique")
    order = sorted(range(len(ids)), key=lambda k: (float(labels[k]), ids[k]))
    rng = make_rng(seed, "folds")
    out = np.empty(len(ids), dtype=int)
    for start in range(0, len(order), folds):
        block = order[start:start + folds]
        perm = rng.permutation(folds)
        for pos, k in enumerate(block):
            out[k] = perm[pos]
    return out


def _canonical(samples):
    return sorted(samples, key=lambda s: s.sample_id)


def fit_base(Z, y, h: Hyperparams) -> tuple[RidgeModel, SVRModel]:
    return (train_ridge(Z, y, h.lam),
            train_svr(Z, y, h.C, h.epsilon, h.gamma, tol=h.svr_tol))


def train_ensemble(samples, folds: int = 5, seed: int = 0,
                   hyper: Hyperparams = Hyperparams()) -> EnsembleModel:
    if folds < 2:
        raise ValueError("folds must be >= 2")
    samples = _canonical(samples)
    if len(samples) < folds:
        raise ValueError(f"{len(samples)} samples is fewer than {folds} folds")
    F = np.array([extract_features(s) for s in samples])
    y = np.array([s.D_c for s in samples]) * TARGET_SCALE
    return train_from_features(F, y, [s.sample_id for s in samples], folds, seed, hyper)


def train_from_features(F, y, ids, folds: int = 5, seed: int = 0,
                        hyper: Hyperparams = Hyperparams()) -> EnsembleModel:
    """``y`` in millimetres.  Rows must already be in a canonical order."""
    F = np.asarray(F, dtype=float)
    y = np.asarray(y, dtype=float)
    mu, sd = standardizer(F)
    Z = (F - mu) / sd
    fold = assign_folds(ids, y, folds, seed)
    oof = np.empty((len(y), 2))
    for k in range(folds):
        te = fold == k
        if not te.any():
            continue
        if (~te).sum() < 2:
            raise ValueError("a training fold has fewer than two samples")
        r, s = fit_base(Z[~te], y[~te], hyper)
        oof[te, 0] = r.predict(Z[te])
        oof[te, 1] = s.predict(Z[te])
    meta = train_boosting(oof, y, hyper.n_trees, hyper.depth, hyper.learning_rate)
    ridge, svr = fit_base(Z, y, hyper)
    return EnsembleModel(mu, sd, ridge, svr, meta, hyper, folds, seed)


def predict(model: EnsembleModel, sample) -> float:
    """Estimated diameter (m) of one wrap trial."""
    return float(model.predict_features(extract_features(sample))[0])


def predict_traces(model: EnsembleModel, current, displacement, dt: float) -> float:
    return float(model.predict_features(feature_vector(current, displacement, dt))[0])


def metrics(y_true, y_pred) -> tuple[float, float]:
    """(MAE, R^2).  R^2 is NaN when ``y_true`` is constant."""
    a = np.asarray(y_true, dtype=float)
    b = np.asarray(y_pred, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("need two equal-length vectors of at least two entries")
    mae = float(np.mean(np.abs(a - b)))
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    r2 = 1.0 - float(np.sum((a - b) ** 2)) / ss_tot if ss_tot > 0 else math.nan
    return mae, r2


def holdout_split(samples, fold: int = 0, folds: int = 5, seed: int = 0):
    """(train, test) with the test part one stratified fold."""
    samples = _canonical(samples)
    f = assign_folds([s.sample_id for s in samples], [s.D_c for s in samples], folds, seed)
    return ([s for s, k in zip(samples, f) if k != fold],
            [s for s, k in zip(samples, f) if k == fold])


# ------------------------------------------------------------- persistence


def _arr(a):
    return [float(v) for v in np.ravel(a)]


def to_json(m: EnsembleModel) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "feature_version": FEATURE_VERSION,
        "features": list(FEATURE_NAMES),
        "target_scale": TARGET_SCALE,
        "folds": m.folds,
        "seed": m.seed,
        "hyperparams": asdict(m.hyper),
        "standardization": {"mean": _arr(m.mean), "scale": _arr(m.scale)},
        "ridge": {"w": _arr(m.ridge.w), "intercept": m.ridge.intercept, "lambda": m.ridge.lam},
        "svr": {"beta": _arr(m.svr.beta), "support": [_arr(r) for r in m.svr.support],
                "bias": m.svr.bias, "gamma": m.svr.gamma, "epsilon": m.svr.epsilon,
                "C": m.svr.C},
        "meta": {"init": m.meta.init, "learning_rate": m.meta.learning_rate,
                 "depth": m.meta.depth,
                 "trees": [{"feature": [int(v) for v in t.feature],
                            "threshold": _arr(t.threshold),
                            "left": [int(v) for v in t.left], "right": [int(v) for v in t.right],
                            "value": _arr(t.value)} for t in m.meta.trees]},
    }
    return json.dumps(doc, indent=1) + "\n"


def from_json(text: str) -> EnsembleModel:
    d = json.loads(text)
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not a tendonsim ensemble model")
    if d.get("version") != MODEL_VERSION or d.get("feature_version") != FEATURE_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}/{d.get('feature_version')}")
    if d["features"] != list(FEATURE_NAMES):
        raise ValueError("feature ordering differs from this build")
    sv = d["svr"]
    support = np.array(sv["support"], dtype=float).reshape(len(sv["beta"]), len(FEATURE_NAMES))
    trees = tuple(Tree(np.array(t["feature"], dtype=int), np.array(t["threshold"]),
                       np.array(t["left"], dtype=int), np.array(t["right"], dtype=int),
                       np.array(t["value"])) for t in d["meta"]["trees"])
    return EnsembleModel(
        np.array(d["standardization"]["mean"]), np.array(d["standardization"]["scale"]),
        RidgeModel(np.array(d["ridge"]["w"]), float(d["ridge"]["intercept"]), float(d["ridge"]["lambda"])),
        SVRModel(np.array(sv["beta"]), support, float(sv["bias"]), float(sv["gamma"]),
                 float(sv["epsilon"]), float(sv["C"])),
        BoostedTrees(float(d["meta"]["init"]), float(d["meta"]["learning_rate"]),
                     int(d["meta"]["depth"]), trees),
        Hyperparams(**d["hyperparams"]), int(d["folds"]), int(d["seed"]))


def save_model(path, m: EnsembleModel) -> None:
    with open(path, "w") as fh:
        fh.write(to_json(m))


def load_model(path) -> EnsembleModel:
    with open(path) as fh:
        return from_json(fh.read())
