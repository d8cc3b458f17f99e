"""Ridge regression on random features, lifetime sweeps and bandwidth search."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy import linalg

from .core import Dataset, RngLike, SeededRng, as_generator
from .features import PARTITION_METHODS, NodeFeaturizer, SharedCellCounts, build_feature_map, featurize
from .mondrian import cut_times


class SGDDivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class RidgeConfig:
    """Ridge penalty and solver settings.

    ``solver="sgd"`` runs mini-batch SGD.  With ``variance_reduction`` (the
    default) every epoch takes a full-gradient snapshot and uses SVRG
    corrections with a constant step; otherwise steps follow a constant then
    ``1/t`` schedule.  Iteration stops once the full gradient norm falls
    below ``tol`` times its value at zero, or after ``epochs`` epochs.
    """

    ridge: float = 1e-4
    solver: str = "exact"
    epochs: int = 2000
    batch_size: int = 32
    step_size: float | None = None
    variance_reduction: bool = True
    tol: float = 1e-7

    def __post_init__(self):
        if not self.ridge > 0:
            raise ValueError("ridge constant must be > 0")
        if self.solver not in ("exact", "sgd"):
            raise ValueError(f"unknown solver {self.solver!r}")


def _check_shapes(Z, y):
    y = np.asarray(y, dtype=float).ravel()
    if Z.shape[0] != y.shape[0]:
        raise ValueError(f"features have {Z.shape[0]} rows but targets have {y.shape[0]}")
    return y


def _dense(a):
    return np.asarray(a.todense()) if sp.issparse(a) else np.asarray(a)


def _top_eigenvalue(Z, iters: int = 100) -> float:
    """Power-iteration estimate of the largest eigenvalue of ``Z^T Z``."""
    v = np.ones(Z.shape[1]) / math.sqrt(Z.shape[1])
    val = 0.0
    for _ in range(iters):
        u = np.asarray(Z.T @ (Z @ v)).ravel()
        val = float(np.linalg.norm(u))
        if val == 0.0:
            return 0.0
        v = u / val
    return val


def ridge_objective(w, Z, y, ridge: float) -> float:
    r = Z @ w - y
    return float(r @ r + ridge * (w @ w))


def ridge_exact(Z, y, ridge: float) -> np.ndarray:
    """Minimiser of ``||Z w - y||^2 + ridge ||w||^2``.

    Solves the primal normal equations when there are no more features than
    rows, and the equivalent dual system ``(Z Z^T + ridge I) a = y``,
    ``w = Z^T a`` otherwise.
    """
    y = _check_shapes(Z, y)
    if not ridge > 0:
        raise ValueError("ridge constant must be > 0")
    n, c = Z.shape
    if c <= n:
        G = _dense(Z.T @ Z) + ridge * np.eye(c)
        return linalg.solve(G, Z.T @ y, assume_a="pos")
    G = _dense(Z @ Z.T) + ridge * np.eye(n)
    alpha = linalg.solve(G, y, assume_a="pos")
    return np.asarray(Z.T @ alpha).ravel()


def ridge_sgd(Z, y, config: RidgeConfig, rng: RngLike, w0: np.ndarray | None = None) -> np.ndarray:
    """Stochastic-gradient minimiser of the ridge objective (see :class:`RidgeConfig`)."""
    y = _check_shapes(Z, y)
    gen = as_generator(rng)
    n, c = Z.shape
    Z = Z.tocsr() if sp.issparse(Z) else np.asarray(Z, dtype=float)
    lam = config.ridge / n  # per-row share of the penalty
    w = np.zeros(c) if w0 is None else np.array(w0, dtype=float, copy=True)

    def full_grad(v):
        return (2.0 / n) * (Z.T @ (Z @ v - y)) + 2.0 * lam * v

    b = min(config.batch_size, n)
    if config.step_size is not None:
        step = config.step_size
    else:
        row_sq = np.asarray(Z.multiply(Z).sum(axis=1)).ravel() if sp.issparse(Z) else (Z * Z).sum(1)
        # smoothness of the full objective plus the mini-batch noise term
        L_full = 2.0 * (1.2 * _top_eigenvalue(Z) / n + lam)
        L_row = 2.0 * (float(row_sq.max()) + lam)
        step = 0.5 / (L_full + L_row / b)
    g0 = np.linalg.norm(full_grad(np.zeros(c)))
    if g0 == 0.0:
        return np.zeros(c)

    history = []
    rising = 0
    t = 0
    for epoch in range(config.epochs):
        if config.variance_reduction:
            snap = w.copy()
            mu = full_grad(snap)
            if np.linalg.norm(mu) <= config.tol * g0:
                break
        perm = gen.permutation(n)
        for start in range(0, n, b):
            idx = perm[start:start + b]
            Zb, yb = Z[idx], y[idx]
            g = (2.0 / len(idx)) * (Zb.T @ (Zb @ w - yb)) + 2.0 * lam * w
            if config.variance_reduction:
                g = g - ((2.0 / len(idx)) * (Zb.T @ (Zb @ snap - yb)) + 2.0 * lam * snap) + mu
                w = w - step * g
            else:
                t += 1
                decay = max(1.0, t / (n / b * 2.0))
                w = w - (step / decay) * g
        obj = ridge_objective(w, Z, y, config.ridge)
        if not math.isfinite(obj):
            raise SGDDivergenceError(f"objective became {obj} at epoch {epoch}")
        if history and obj > history[-1]:
            rising += 1
            if rising >= 5:
                raise SGDDivergenceError(
                    f"objective rose for 5 consecutive epochs (epoch {epoch}, step {step:.3g}, "
                    f"last values {[round(h, 6) for h in history[-5:]]})")
        else:
            rising = 0
        history.append(obj)
        if not config.variance_reduction and np.linalg.norm(full_grad(w)) <= config.tol * g0:
            break
    return w


def fit_ridge(Z, y, config: RidgeConfig, rng: RngLike = 0, w0=None) -> np.ndarray:
    if config.solver == "exact":
        return ridge_exact(Z, y, config.ridge)
    return ridge_sgd(Z, y, config, rng, w0)


def evaluate(weights, Z, y) -> dict:
    """RMSE and relative error ``||y_hat - y|| / ||y||`` of linear predictions."""
    y = _check_shapes(Z, y)
    pred = np.asarray(Z @ weights).ravel()
    ny = np.linalg.norm(y)
    if ny == 0.0:
        raise ValueError("relative error is undefined for an all-zero target vector")
    err = pred - y
    return {"rmse": float(np.sqrt(np.mean(err ** 2))), "relative_error": float(np.linalg.norm(err) / ny)}


def _score(pred, y, metric):
    err = pred - y
    if metric == "rmse":
        return float(np.sqrt(np.mean(err ** 2)))
    if metric == "relative":
        return float(np.linalg.norm(err) / np.linalg.norm(y))
    raise ValueError(f"unknown metric {metric!r}")


@dataclass
class SweepResult:
    lifetimes: np.ndarray
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    metric: str = "rmse"
    extra: dict = field(default_factory=dict)

    @property
    def best_index(self) -> int:
        # argmin returns the first (smallest-lifetime) minimiser
        return int(np.argmin(self.validation))

    @property
    def best_lifetime(self) -> float:
        return float(self.lifetimes[self.best_index])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "train", "validation", "test"])
            for row in zip(self.lifetimes, self.train, self.validation, self.test):
                w.writerow([repr(float(v)) for v in row])


def sweep_lifetimes(trees, lambda_max: float, max_points: int = 200) -> np.ndarray:
    """Sorted union of the trees' cut times up to ``lambda_max``, thinned geometrically.

    The partition is constant between cut times, so these are the only
    lifetimes at which the model can change.  ``lambda_max`` is always kept.
    """
    times = np.unique(np.concatenate([cut_times(t) for t in trees] + [np.array([lambda_max])]))
    times = times[times <= lambda_max]
    if times.size > max_points:
        grid = np.geomspace(times[0], lambda_max, max_points)
        pick = np.clip(np.searchsorted(times, grid, side="right") - 1, 0, times.size - 1)
        times = np.unique(np.concatenate([times[pick], [lambda_max]]))
    return times


def lifetime_sweep(train: Dataset, validation: Dataset, test: Dataset, method: str, M: int,
                   lambda_max: float, config: RidgeConfig, rng, metric: str = "rmse",
                   max_points: int = 200, n_jobs: int = 1, on_step=None) -> SweepResult:
    """Errors of ridge on partition features at every lifetime up to ``lambda_max``.

    The trees are grown once to ``lambda_max`` over all three splits and
    sliced at each evaluation lifetime.  With the SGD solver, weights carry
    over from one lifetime to the next and newly created cells start at 0.
    ``on_step(lifetime, train, validation, test)`` is called after each
    evaluation when given.
    """
    if method not in PARTITION_METHODS:
        raise ValueError(f"lifetime sweeps need a partition method, not {method!r}")
    if not lambda_max > 0:
        raise ValueError("lambda_max must be > 0")
    rng = rng if isinstance(rng, SeededRng) else SeededRng(int(rng))
    X = np.vstack([train.points, validation.points, test.points])
    n_tr, n_va = train.n, validation.n
    fmap = build_feature_map(X, method, M, lambda_max, rng.derive(0), n_jobs=n_jobs)
    lifetimes = sweep_lifetimes(fmap.trees, lambda_max, max_points)
    y_tr, y_va, y_te = train.targets, validation.targets, test.targets
    splits = (slice(0, n_tr), slice(n_tr, n_tr + n_va), slice(n_tr + n_va, None))
    out = np.empty((lifetimes.size, 3))
    if config.solver == "exact":
        # dual form: only kernel values against the training rows are needed
        counts = SharedCellCounts(fmap, X, n_columns=n_tr)
        eye = config.ridge * np.eye(n_tr)
        for i, lam in enumerate(lifetimes):
            K = counts.kernel(float(lam))
            alpha = linalg.solve(K[:n_tr] + eye, y_tr, assume_a="pos")
            pred = K @ alpha
            out[i] = [_score(pred[s], t, metric) for s, t in zip(splits, (y_tr, y_va, y_te))]
            if on_step is not None:
                on_step(float(lam), *(float(v) for v in out[i]))
    else:
        feat = NodeFeaturizer(fmap, X)
        w = None
        for i, lam in enumerate(lifetimes):
            Z = feat.advance(float(lam))
            w = ridge_sgd(Z[:n_tr], y_tr, config, rng.derive(1).derive(i), w0=w)
            pred = Z @ w
            out[i] = [_score(pred[s], t, metric) for s, t in zip(splits, (y_tr, y_va, y_te))]
            if on_step is not None:
                on_step(float(lam), *(float(v) for v in out[i]))
    return SweepResult(lifetimes, out[:, 0], out[:, 1], out[:, 2], metric)


@dataclass
class SearchResult:
    best: float
    best_error: float
    probes: list  # (lifetime, error) in evaluation order
    bracket: tuple[float, float]


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_search(objective: Callable[[float], float], lo: float, hi: float,
                          budget: int) -> SearchResult:
    """Minimise ``objective`` over ``[lo, hi]`` by golden sections in log space.

    Exactly ``budget`` evaluations are made.  The best probe is returned,
    ties going to the smallest argument.
    """
    if not (lo > 0 and hi > lo and math.isfinite(hi)):
        raise ValueError(f"invalid search range [{lo}, {hi}]")
    if budget < 3:
        raise ValueError("budget must allow at least 3 evaluations")
    probes = []

    def f(u):
        lam = math.exp(u)
        e = float(objective(lam))
        probes.append((lam, e))
        return e

    a, b = math.log(lo), math.log(hi)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while len(probes) < budget:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    best = min(probes, key=lambda p: (p[1], p[0]))
    return SearchResult(best[0], best[1], probes, (math.exp(a), math.exp(b)))


def bandwidth_search(method: str, train: Dataset, validation: Dataset, lo: float, hi: float,
                     budget: int, M: int, config: RidgeConfig, rng, metric: str = "rmse",
                     on_probe=None) -> SearchResult:
    """Golden-section search of the lifetime for Fourier or binning features.

    Every probe redraws its features from the same substream, so the
    validation curve varies smoothly with the lifetime.  ``on_probe(lifetime,
    error)`` is called after each evaluation when given.
    """
    if method not in ("fourier", "binning"):
        raise ValueError(f"bandwidth search is for fourier/binning, not {method!r}")
    rng = rng if isinstance(rng, SeededRng) else SeededRng(int(rng))
    X = np.vstack([train.points, validation.points])

    def objective(lam):
        fmap = build_feature_map(X, method, M, lam, rng.derive(0))
        Z = featurize(fmap, X)
        Z = Z.matrix if hasattr(Z, "matrix") else Z
        w = fit_ridge(Z[:train.n], train.targets, config, rng.derive(1))
        err = _score(Z[train.n:] @ w, validation.targets, metric)
        if on_probe is not None:
            on_probe(lam, err)
        return err

    return golden_section_search(objective, lo, hi, budget)
