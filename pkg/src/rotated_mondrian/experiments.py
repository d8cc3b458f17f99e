"""Reproducible experiment drivers behind the command-line interface.

Each ``run_*`` function takes a :class:`SeededRng` and returns plain rows
(lists of dicts) plus a JSON-ready summary.  Random streams are addressed
by method name rather than by position in the method list, so adding or
removing a method never changes the others' results.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .core import Dataset, Rotation, SeededRng, split_dataset
from .features import METHODS, PARTITION_METHODS, build_feature_map, component_kernels, featurize
from .kernels import KernelSpec, gp_sample, isotropic_limit_kernel
from .regression import (RidgeConfig, _score, bandwidth_search, fit_ridge, lifetime_sweep)


def parse_methods(text) -> tuple[str, ...]:
    """Validate a comma-separated (or iterable) method list, keeping its order."""
    items = [m.strip() for m in text.split(",")] if isinstance(text, str) else list(text)
    items = [m for m in items if m]
    if not items:
        raise ValueError("empty method list")
    for m in items:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected a subset of {', '.join(METHODS)}")
    if len(set(items)) != len(items):
        raise ValueError("duplicate method in list")
    return tuple(items)


def _method_stream(rng: SeededRng, method: str) -> SeededRng:
    return rng.derive(1 + METHODS.index(method))


# ---------------------------------------------------------------- convergence

def run_converge(methods, n_points: int = 100, lifetime: float = 10.0, M_max: int = 50,
                 repeats: int = 5, rng: SeededRng = SeededRng(0), dim: int = 2,
                 n_jobs: int = 1) -> list[dict]:
    """Worst-case kernel approximation error against the order ``M``.

    For every repeat, ``n_points`` uniform points in the unit cube are drawn
    and each method's running estimate ``k_M`` is compared with its limit
    over all distinct pairs: ``exp(-lifetime * ||x - x'||_1)`` for the
    axis-aligned methods and the sphere-averaged kernel for the rotated one.
    """
    methods = parse_methods(methods)
    rows = []
    iu = np.triu_indices(n_points, k=1)
    for r in range(repeats):
        sub = rng.derive(r)
        X = sub.derive(0).generator().random((n_points, dim))
        laplace = np.exp(-lifetime * pdist(X, "cityblock"))
        iso = None
        for method in methods:
            if method == "rotated-mondrian":
                if iso is None:
                    iso = isotropic_limit_kernel(pdist(X), lifetime, dim)
                limit = iso
            else:
                limit = laplace
            fmap = build_feature_map(X, method, M_max, lifetime, _method_stream(sub, method),
                                     n_jobs=n_jobs)
            comp = component_kernels(fmap, X)[:, iu[0], iu[1]]
            running = np.cumsum(comp, axis=0) / np.arange(1, M_max + 1)[:, None]
            err = np.abs(running - limit).max(axis=1)
            rows.extend({"method": method, "M": m + 1, "repeat": r, "max_error": float(err[m])}
                        for m in range(M_max))
    return rows


# ------------------------------------------------------------ lifetime recovery

def run_recover(n_per_split: int = 150, true_lifetime: float = 10.0, M: int = 50,
                lambda_max: float = 30.0, noise: float = 0.1, rng: SeededRng = SeededRng(0),
                dim: int = 2, config: RidgeConfig | None = None, n_jobs: int = 1):
    """Draw GP data from the rotated limiting kernel and sweep the lifetime.

    Returns ``(SweepResult, summary)``.
    """
    if not lambda_max > true_lifetime:
        raise ValueError("lambda_max must exceed the true lifetime")
    config = RidgeConfig() if config is None else config
    n = 3 * n_per_split
    X = rng.derive(0).generator().random((n, dim))
    y = gp_sample(X, KernelSpec("isotropic", true_lifetime, dim), noise, rng.derive(1))
    splits = [Dataset(X[i * n_per_split:(i + 1) * n_per_split],
                      y[i * n_per_split:(i + 1) * n_per_split]) for i in range(3)]
    res = lifetime_sweep(*splits, "rotated-mondrian", M, lambda_max, config, rng.derive(2),
                         n_jobs=n_jobs)
    summary = {
        "lambda_hat": res.best_lifetime,
        "lambda_true": true_lifetime,
        "lambda_max": lambda_max,
        "validation_at_hat": float(res.validation[res.best_index]),
        "test_at_hat": float(res.test[res.best_index]),
        "n_lifetimes": int(res.lifetimes.size),
    }
    return res, summary


# ------------------------------------------------------------------- regression

_SCALE_1E5 = (2, 19)
_SCALE_1E7 = (7, 8, 20)


def cpu_like_dataset(n: int, rng: SeededRng, noise: float = 2.0) -> Dataset:
    """Synthetic 21-column regression set with raw, unequal column ranges.

    Most columns range over ``[0, 1e4)``, two over ``[0, 1e5)`` and three
    over ``[0, 1e7)``; values are skewed toward zero.  The target is a smooth
    function of the wide columns around a level of 60, plus Gaussian noise.
    """
    gen = rng.generator()
    scales = np.full(21, 1e4)
    scales[list(_SCALE_1E5)] = 1e5
    scales[list(_SCALE_1E7)] = 1e7
    V = gen.random((n, 21))
    X = V ** 3 * scales
    y = (60.0 + 20.0 * np.sin(2 * np.pi * V[:, 7]) + 15.0 * np.cos(3 * np.pi * V[:, 8])
         + 10.0 * V[:, 20] * V[:, 7] + 5.0 * V[:, 2] + gen.normal(0.0, noise, n))
    return Dataset(X, y, tuple(f"x{j}" for j in range(21)) + ("target",))


def prepare_regression_splits(data: Dataset, rng: SeededRng, fractions=(0.6, 0.2, 0.2)):
    """Shuffle and split the rows, then center targets on the training mean."""
    train, val, test = split_dataset(data, fractions, rng)
    mu = float(np.mean(train.targets))
    return [Dataset(s.points, s.targets - mu, s.columns) for s in (train, val, test)], mu


def _column_prefix(Z, fmap, M: int):
    """Features of the first ``M`` components, rescaled to ``1/sqrt(M)`` weights."""
    scale = math.sqrt(fmap.n_components / M)
    if fmap.method == "fourier":
        return Z[:, :M] * scale
    if fmap.method == "binning":
        sizes = np.array([len(t) for t in fmap.bin_tables])
    else:
        sizes = fmap.n_cells()
    return Z.matrix[:, :int(sizes[:M].sum())] * scale


def run_regress_features(splits, methods, M_max: int, lifetimes: dict, config: RidgeConfig,
                         repeats: int, rng: SeededRng, grid=None, n_jobs: int = 1) -> list[dict]:
    """Validation RMSE against the number of random features actually used.

    ``lifetimes`` maps each method to its fixed lifetime.  Maps are built
    once with ``M_max`` components on training plus validation rows; the
    order-``M`` model uses the first ``M`` components.  For sparse maps the
    feature count is the number of columns touched by training rows; for
    Fourier features it is ``M``.
    """
    methods = parse_methods(methods)
    train, val = splits[0], splits[1]
    X = np.vstack([train.points, val.points])
    n_tr = train.n
    grid = list(range(1, M_max + 1)) if grid is None else sorted(set(int(m) for m in grid))
    rows = []
    for method in methods:
        for r in range(repeats):
            stream = _method_stream(rng.derive(r), method)
            fmap = build_feature_map(X, method, M_max, lifetimes[method], stream.derive(0),
                                     n_jobs=n_jobs)
            Z_full = featurize(fmap, X)
            for M in grid:
                Z = _column_prefix(Z_full, fmap, M)
                Z_tr = Z[:n_tr]
                w = fit_ridge(Z_tr, train.targets, config, stream.derive(1).derive(M))
                if method == "fourier":
                    n_feat = M
                else:
                    n_feat = int(np.count_nonzero(Z_tr.getnnz(axis=0)))
                rows.append({"method": method, "repeat": r, "M": M, "n_features": n_feat,
                             "validation_error": _score(Z[n_tr:] @ w, val.targets, "rmse")})
    return rows


def run_regress_time(splits, methods, M: int, lambda_max: float, search_range, budget: int,
                     config: RidgeConfig, rng: SeededRng, n_jobs: int = 1):
    """Validation error trajectory while each method selects its lifetime.

    Partition methods run a lifetime sweep up to ``lambda_max``; Fourier and
    binning features run a golden-section search over ``search_range``.
    Returns ``(rows, cpu_rows)``: the trajectory itself, which is
    deterministic, and the process CPU time stamp of every step.
    """
    methods = parse_methods(methods)
    rows, cpu = [], []
    for method in methods:
        stream = _method_stream(rng, method)
        stamps = []
        t0 = time.process_time()

        def record(lam, err):
            stamps.append((lam, err, time.process_time() - t0))

        if method in PARTITION_METHODS:
            lifetime_sweep(*splits, method, M, lambda_max, config, stream, n_jobs=n_jobs,
                           on_step=lambda lam, tr, va, te: record(lam, va))
        else:
            bandwidth_search(method, splits[0], splits[1], search_range[0], search_range[1],
                             budget, M, config, stream, on_probe=record)
        best = math.inf
        for k, (lam, err, secs) in enumerate(stamps):
            best = min(best, err)
            rows.append({"method": method, "step": k, "lifetime": lam, "validation_error": err,
                         "best_validation_error": best})
            cpu.append({"method": method, "step": k, "cpu_seconds": secs})
    return rows, cpu


# ---------------------------------------------------------------- Mondrian line

@dataclass(frozen=True)
class MondrianLineSpec:
    """Thin slab ``[0, 1] x [-eps, eps]^2`` turned to lie along ``direction``."""

    n_per_split: int = 500
    eps: float = 0.01
    direction: tuple[float, float, float] = (1 / math.sqrt(3),) * 3

    def __post_init__(self):
        if self.n_per_split < 1:
            raise ValueError("n_per_split must be >= 1")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        if len(self.direction) != 3 or abs(np.linalg.norm(self.direction) - 1.0) > 1e-12:
            raise ValueError("direction must be a unit 3-vector")


def rotation_to(direction) -> Rotation:
    """The rotation taking ``e_1`` to ``direction`` about their common normal."""
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    e = np.zeros_like(u)
    e[0] = 1.0
    k = np.cross(e, u)
    s, c = np.linalg.norm(k), float(e @ u)
    if s < 1e-15:
        return Rotation(np.diag([1.0, 1.0, 1.0]) if c > 0 else np.diag([-1.0, -1.0, 1.0]))
    k = k / s
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return Rotation(np.eye(3) + s * K + (1.0 - c) * K @ K)


def mondrian_line_label(points) -> np.ndarray:
    """1 where the last two coordinates share a sign (zero counts as both)."""
    p = np.atleast_2d(points)
    same = ((p[:, 1] >= 0) & (p[:, 2] >= 0)) | ((p[:, 1] <= 0) & (p[:, 2] <= 0))
    return same.astype(float)


def mondrian_line_dataset(spec: MondrianLineSpec, rng: SeededRng) -> list[Dataset]:
    """Train, validation and test sets of ``spec.n_per_split`` labelled points each."""
    gen = rng.generator()
    n = 3 * spec.n_per_split
    P = np.column_stack([gen.random(n), gen.uniform(-spec.eps, spec.eps, size=(n, 2))])
    y = mondrian_line_label(P)
    X = rotation_to(spec.direction).apply(P)
    k = spec.n_per_split
    return [Dataset(X[i * k:(i + 1) * k], y[i * k:(i + 1) * k]) for i in range(3)]


def run_mondrian_line(spec: MondrianLineSpec, methods=PARTITION_METHODS, M: int = 500,
                      lambda_max: float = 1000.0, config: RidgeConfig | None = None,
                      rng: SeededRng = SeededRng(0), n_jobs: int = 1):
    """Relative error curves of both partition kernels on the Mondrian line.

    Returns ``(rows, summary)`` with rows ``(method, lambda, split,
    relative_error)`` and, per method, the validation-optimal lifetime and
    the errors there.
    """
    methods = parse_methods(methods)
    bad = [m for m in methods if m not in PARTITION_METHODS]
    if bad:
        raise ValueError(f"the Mondrian line compares partition methods only, not {bad}")
    config = RidgeConfig() if config is None else config
    splits = mondrian_line_dataset(spec, rng.derive(0))
    rows, summary = [], {}
    for method in methods:
        res = lifetime_sweep(*splits, method, M, lambda_max, config, _method_stream(rng, method),
                             metric="relative", n_jobs=n_jobs)
        for lam, tr, va, te in zip(res.lifetimes, res.train, res.validation, res.test):
            for split, err in (("train", tr), ("validation", va), ("test", te)):
                rows.append({"method": method, "lambda": float(lam), "split": split,
                             "relative_error": float(err)})
        i = res.best_index
        summary[method] = {"best_lambda": res.best_lifetime,
                           "train": float(res.train[i]),
                           "validation": float(res.validation[i]),
                           "test": float(res.test[i])}
    if set(PARTITION_METHODS) <= set(methods):
        summary["rotated_not_worse"] = bool(
            summary["rotated-mondrian"]["test"] <= summary["mondrian"]["test"])
    return rows, summary


# ----------------------------------------------------------------- kernel table

def kernel_table(lifetime: float, dim: int, r_max: float, n_points: int) -> list[dict]:
    """Rotated limiting kernel on an even grid of distances ``[0, r_max]``."""
    r = np.linspace(0.0, r_max, n_points)
    vals = np.atleast_1d(isotropic_limit_kernel(r, lifetime, dim))
    return [{"r": float(a), "value": float(b)} for a, b in zip(r, vals)]
