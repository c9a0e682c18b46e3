"""Base and meta regressors: ridge, RBF epsilon-SVR solved by pairwise
coordinate descent, and least-squares gradient-boosted trees."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, d) and y (n,)")
    if X.shape[0] < 2:
        raise ValueError("need at least two rows")
    return X, y


# ------------------------------------------------------------------ ridge


@dataclass(frozen=True)
class RidgeModel:
    w: np.ndarray
    intercept: float
    lam: float

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.w + self.intercept


def train_ridge(X, y, lam: float = 1.0, sample_weight=None) -> RidgeModel:
    """w = (Xc' W Xc + lam I)^-1 Xc' W yc on (weighted-)centered data."""
    X, y = _xy(X, y)
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    sw = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    mx = sw @ X / sw.sum()
    my = float(sw @ y / sw.sum())
    Xc = X - mx
    A = Xc.T @ (sw[:, None] * Xc) + lam * np.eye(X.shape[1])
    b = Xc.T @ (sw * (y - my))
    if lam == 0 and np.linalg.matrix_rank(A) < A.shape[0]:
        raise np.linalg.LinAlgError("singular normal equations (collinear features, lambda = 0)")
    w = np.linalg.solve(A, b)
    return RidgeModel(w, my - float(mx @ w), float(lam))


def ridge_gradient(m: RidgeModel, X, y) -> np.ndarray:
    """Gradient of ||y - Xw - c||^2 + lam ||w||^2 in w, at the fitted intercept."""
    X, y = _xy(X, y)
    r = y - m.predict(X)
    return -2.0 * X.T @ r + 2.0 * m.lam * m.w


# -------------------------------------------------------------------- svr


class SVRNotConverged(RuntimeError):
    def __init__(self, violation: float, iterations: int):
        super().__init__(f"SMO stopped after {iterations} iterations, KKT violation {violation:.3g}")
        self.violation = violation
        self.iterations = iterations


def rbf(A, B, gamma: float) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(d2, 0.0))


@dataclass(frozen=True)
class SVRModel:
    beta: np.ndarray  # support coefficients alpha - alpha*, in [-C, C]
    support: np.ndarray  # support vectors (rows of X with beta != 0)
    bias: float
    gamma: float
    epsilon: float
    C: float
    violation: float = 0.0
    iterations: int = 0

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not len(self.beta):
            return np.full(len(X), self.bias)
        return rbf(X, self.support, self.gamma) @ self.beta + self.bias


def _bias_bounds(beta, r, C, eps, tol_box):
    """Per-sample interval [lo, hi] for the bias allowed by the KKT conditions
    given residual r = y - K beta."""
    lo = np.full(len(beta), -np.inf)
    hi = np.full(len(beta), np.inf)
    at_up = beta >= C - tol_box
    at_dn = beta <= -C + tol_box
    zero = np.abs(beta) <= tol_box
    pos = ~at_up & ~zero & (beta > 0)
    neg = ~at_dn & ~zero & (beta < 0)
    lo[zero], hi[zero] = r[zero] - eps, r[zero] + eps
    lo[pos] = hi[pos] = r[pos] - eps
    lo[neg] = hi[neg] = r[neg] + eps
    hi[at_up] = r[at_up] - eps
    lo[at_dn] = r[at_dn] + eps
    return lo, hi


def _pair_step(bi, bj, gi, gj, eta, eps, C):
    """Exact minimizer over t of
        0.5 eta t^2 + (gi - gj) t + eps (|bi + t| + |bj - t|)
    on the box keeping bi + t and bj - t inside [-C, C]."""
    t_lo = max(-C - bi, bj - C)
    t_hi = min(C - bi, bj + C)
    g = gi - gj

    def obj(t):
        return 0.5 * eta * t * t + g * t + eps * (abs(bi + t) + abs(bj - t))

    cands = {t_lo, t_hi}
    for k in (-bi, bj):
        if t_lo < k < t_hi:
            cands.add(k)
    pts = sorted(cands)
    if eta > 0:
        for a, b in zip(pts[:-1], pts[1:]):
            m = 0.5 * (a + b)
            s = eps * (math.copysign(1.0, bi + m) - math.copysign(1.0, bj - m))
            t = -(g + s) / eta
            if a < t < b:
                cands.add(t)
    return min(sorted(cands), key=obj)


def train_svr(X, y, C: float = 10.0, epsilon: float = 1.0, gamma: float = 1.0 / 16,
              tol: float = 1e-4, max_iter: int = 100_000) -> SVRModel:
    """epsilon-insensitive SVR with an RBF kernel.

    Dual in beta = alpha - alpha*:  min 0.5 b'Kb + eps |b|_1 - y'b,  sum b = 0,
    |b_i| <= C.  Each iteration takes the maximal KKT-violating pair and
    solves the two-variable subproblem exactly.  Stops when the spread of the
    admissible bias intervals is below ``tol``.
    """
    X, y = _xy(X, y)
    if not (C > 0 and epsilon >= 0 and gamma > 0):
        raise ValueError("need C > 0, epsilon >= 0, gamma > 0")
    n = len(y)
    K = rbf(X, X, gamma)
    beta = np.zeros(n)
    Kb = np.zeros(n)
    tol_box = 1e-12 * C
    it = 0
    while True:
        r = y - Kb
        lo, hi = _bias_bounds(beta, r, C, epsilon, tol_box)
        i, j = int(np.argmax(lo)), int(np.argmin(hi))
        viol = float(lo[i] - hi[j])
        if viol <= tol:
            break
        if it >= max_iter:
            raise SVRNotConverged(viol, it)
        # the line search is exact, so the direction along e_j - e_i is free
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        t = _pair_step(beta[j], beta[i], -r[j], -r[i], eta, epsilon, C)
        if t == 0.0:
            raise SVRNotConverged(viol, it)
        beta[j] += t
        beta[i] -= t
        Kb += t * (K[:, j] - K[:, i])
        it += 1
    r = y - Kb
    lo, hi = _bias_bounds(beta, r, C, epsilon, tol_box)
    L, H = float(lo.max()), float(hi.min())
    if math.isfinite(L) and math.isfinite(H):
        b = 0.5 * (L + H)
    elif math.isfinite(L) or math.isfinite(H):
        b = L if math.isfinite(L) else H
    else:
        b = float(np.median(r))
    sv = np.abs(beta) > tol_box
    return SVRModel(beta[sv].copy(), X[sv].copy(), b, float(gamma), float(epsilon), float(C),
                    max(viol, 0.0), it)


def svr_kkt_violation(m: SVRModel, X, y) -> float:
    """Bias-interval spread of a trained model on its training data."""
    X, y = _xy(X, y)
    beta = np.zeros(len(y))
    # map support vectors back onto rows
    for k, sv in enumerate(m.support):
        idx = np.flatnonzero(np.all(X == sv, axis=1))
        beta[idx[0]] = m.beta[k]
    r = y - (m.predict(X) - m.bias)
    lo, hi = _bias_bounds(beta, r, m.C, m.epsilon, 1e-12 * m.C)
    return float(max(lo.max() - hi.min(), 0.0))


# --------------------------------------------------------------- boosting


@dataclass(frozen=True)
class Tree:
    """Flat binary regression tree.  Internal node k has children
    ``left[k]``/``right[k]``; leaves have ``feature[k] = -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(len(X))
        for r, x in enumerate(X):
            k = 0
            while self.feature[k] >= 0:
                k = self.left[k] if x[self.feature[k]] <= self.threshold[k] else self.right[k]
            out[r] = self.value[k]
        return out


def _best_split(X, r):
    """Least-squares split (feature, threshold, gain); None if no split helps."""
    n, d = X.shape
    best = None
    tot = r.sum()
    base = tot * tot / n
    for f in range(d):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cs = np.cumsum(r[order])
        for k in range(1, n):
            if xs[k] == xs[k - 1]:
                continue
            sl = cs[k - 1]
            gain = sl * sl / k + (tot - sl) ** 2 / (n - k) - base
            if gain > 1e-15 * max(1.0, base) and (best is None or gain > best[2]):
                best = (f, 0.5 * (xs[k - 1] + xs[k]), gain)
    return best


def fit_tree(X, r, depth: int) -> Tree:
    feat, thr, left, right, val = [], [], [], [], []

    def grow(idx, dleft):
        k = len(feat)
        feat.append(-1)
        thr.append(0.0)
        left.append(-1)
        right.append(-1)
        val.append(float(r[idx].mean()))
        if dleft == 0 or len(idx) < 2:
            return k
        sp = _best_split(X[idx], r[idx])
        if sp is None:
            return k
        f, t, _ = sp
        mask = X[idx, f] <= t
        feat[k], thr[k] = f, t
        left[k] = grow(idx[mask], dleft - 1)
        right[k] = grow(idx[~mask], dleft - 1)
        return k

    grow(np.arange(len(r)), depth)
    return Tree(np.array(feat), np.array(thr), np.array(left), np.array(right), np.array(val))


@dataclass(frozen=True)
class BoostedTrees:
    init: float
    learning_rate: float
    depth: int
    trees: tuple[Tree, ...]

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        f = np.full(len(X), self.init)
        for t in self.trees:
            f = f + self.learning_rate * t.predict(X)
        return f


def train_boosting(X, y, n_trees: int = 50, depth: int = 2, learning_rate: float = 0.1,
                   history: list | None = None) -> BoostedTrees:
    """Least-squares gradient boosting: each tree fits the current residual
    with leaf means.  ``history`` receives the training MSE after each tree."""
    X, y = _xy(X, y)
    if n_trees < 1 or depth < 1 or not 0 < learning_rate <= 1:
        raise ValueError("need n_trees >= 1, depth >= 1, 0 < learning_rate <= 1")
    f0 = float(y.mean())
    f = np.full(len(y), f0)
    trees = []
    for _ in range(n_trees):
        t = fit_tree(X, y - f, depth)
        f = f + learning_rate * t.predict(X)
        trees.append(t)
        if history is not None:
            history.append(float(np.mean((y - f) ** 2)))
    return BoostedTrees(f0, float(learning_rate), int(depth), tuple(trees))
