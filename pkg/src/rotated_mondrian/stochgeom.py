"""Typical cells of superposed rotated Poisson Manhattan tessellations.

The typical cell of the superposition of ``M`` independently rotated
Poisson Manhattan tessellations with intensity ``lam`` in ``R^d`` is sampled
as an intersection of ``M*d`` centred slabs ``{x : |<u, x>| <= s}``: the
normals are the columns of ``M`` Haar rotations and the half-widths are
i.i.d. exponential with rate ``2*lam/d``.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import _backend
from .core import Rotation, RngLike, SeededRng, as_generator, sample_rotations
from .kernels import unit_ball_constants

COND_MAX = 1e8
REL_SLACK = 1e-9


class UnsupportedDimensionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SlabIntersection:
    normals: np.ndarray  # (M*d, d), unit rows
    half_widths: np.ndarray  # (M*d,)
    n_tessellations: int
    lifetime: float
    rotations: np.ndarray  # (M, d, d)

    @property
    def dim(self) -> int:
        return self.normals.shape[1]


@dataclass(frozen=True, eq=False)
class LiftMatrix:
    T: np.ndarray  # (M*d, d)
    rotations: np.ndarray


def lift_matrix(rotations) -> LiftMatrix:
    """Stack the frames ``u_{n,i} = R_n e_i`` as rows, scaled by ``1/sqrt(M)``.

    The result maps ``R^d`` isometrically into ``R^{M d}``.
    """
    mats = [r.matrix if isinstance(r, Rotation) else np.asarray(r, dtype=float) for r in rotations]
    if not mats:
        raise ValueError("need at least one rotation")
    d = mats[0].shape[0]
    if any(m.shape != (d, d) for m in mats):
        raise ValueError("rotations must all be d x d with the same d")
    R = np.stack(mats)
    T = np.concatenate([m.T for m in mats], axis=0) / math.sqrt(len(mats))
    return LiftMatrix(T, R)


def _frames_to_normals(R: np.ndarray) -> np.ndarray:
    # (..., M, d, d) rotations -> (..., M*d, d) normals; row i of R^T is R e_i
    Rt = np.swapaxes(R, -1, -2)
    return Rt.reshape(*R.shape[:-3], R.shape[-3] * R.shape[-1], R.shape[-1])


def _check_params(M, lam, d):
    if M < 1 or d < 1 or not lam > 0:
        raise ValueError(f"need M >= 1, d >= 1 and lifetime > 0; got M={M}, d={d}, lifetime={lam}")


def sample_typical_cell(M: int, lam: float, d: int, rng: RngLike) -> SlabIntersection:
    _check_params(M, lam, d)
    gen = as_generator(rng)
    R = sample_rotations(M, d, gen)
    s = gen.exponential(d / (2.0 * lam), size=M * d)
    return SlabIntersection(_frames_to_normals(R), s, M, lam, R)


def sample_typical_cells(n: int, M: int, lam: float, d: int, rng: RngLike):
    """Batch sampler: ``(normals (n, M*d, d), half_widths (n, M*d))``."""
    _check_params(M, lam, d)
    gen = as_generator(rng)
    R = sample_rotations(n * M, d, gen).reshape(n, M, d, d)
    s = gen.exponential(d / (2.0 * lam), size=(n, M * d))
    return np.ascontiguousarray(_frames_to_normals(R)), s


def inradius(cell: SlabIntersection) -> float:
    """Largest ball inside the cell: for centred slabs this is the smallest half-width."""
    return float(np.min(cell.half_widths))


def cell_geometry(normals: np.ndarray, half_widths: np.ndarray, backend: str | None = None):
    """Volumes and circumradii of a batch of slab intersections (d = 2 or 3)."""
    normals = np.ascontiguousarray(normals, dtype=float)
    half_widths = np.ascontiguousarray(half_widths, dtype=float)
    if normals.ndim == 2:
        normals, half_widths = normals[None], half_widths[None]
    d = normals.shape[-1]
    kern = _backend.get(backend)
    if d == 2:
        return kern.clip_cells_2d(normals, half_widths)
    if d == 3:
        return kern.polytope_cells_3d(normals, half_widths, COND_MAX, REL_SLACK)
    raise UnsupportedDimensionError(f"volume/circumradius support d in {{2, 3}}, got d={d}")


def circumradius(cell: SlabIntersection) -> float:
    """Largest vertex norm; the cell contains the origin so this bounds it from the origin."""
    return float(cell_geometry(cell.normals, cell.half_widths)[1][0])


def volume(cell: SlabIntersection) -> float:
    return float(cell_geometry(cell.normals, cell.half_widths)[0][0])


def expected_inradius(M: int, lam: float) -> float:
    return 1.0 / (2.0 * M * lam)


def volume_bounds(M: int, lam: float, d: int) -> tuple[float, float]:
    """Lower and upper bounds on the mean typical-cell volume."""
    kappa = unit_ball_constants(d).volume
    lower = (2.0 * math.sqrt(d) / (lam * M)) ** d / kappa
    upper = (2.0 * d / (M * lam)) ** d / kappa
    return lower, upper


def circumradius_tail_bound(a: float, M: int, lam: float, d: int) -> float:
    """Upper bound on ``P[circumradius >= a]``: the M-th power of an Erlang tail."""
    x = 2.0 * lam * a / d
    erlang = sum(x ** k / math.factorial(k) for k in range(d))
    return math.exp(-M * x) * erlang ** M


def typical_cell_stats(M: int, lam: float, d: int, n_samples: int, rng: RngLike,
                       thresholds=(0.5, 1.0, 2.0, 4.0), chunk: int = 20_000,
                       keep_samples: bool = False, n_jobs: int = 1) -> dict:
    """Monte Carlo summary of the typical cell set against the closed-form targets.

    Every check is a 3-standard-error comparison; the inradius law is also
    checked with a Kolmogorov-Smirnov test against ``Exp(2 M lam)`` at the 1%
    level.  With a :class:`SeededRng`, chunk ``c`` of samples draws from
    substream ``c`` and chunks are merged in order, so ``n_jobs`` does not
    change the result.
    """
    if d not in (2, 3):
        raise UnsupportedDimensionError(f"typical-cell statistics need d in {{2, 3}}, got {d}")
    if n_samples < 1000:
        raise ValueError("need at least 1000 samples")
    starts = list(range(0, n_samples, chunk))
    shared = None if isinstance(rng, SeededRng) else as_generator(rng)

    def run(c):
        k = min(chunk, n_samples - starts[c])
        src = shared if shared is not None else rng.derive(c)
        normals, s = sample_typical_cells(k, M, lam, d, src)
        v, R = cell_geometry(normals, s)
        return v, R, s.min(axis=1)

    if shared is None and n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            parts = list(ex.map(run, range(len(starts))))
    else:
        parts = [run(c) for c in range(len(starts))]
    V, R, r = (np.concatenate([p[i] for p in parts]) for i in range(3))
    n = n_samples
    se = lambda a: float(a.std(ddof=1) / math.sqrt(n))

    r_target = expected_inradius(M, lam)
    r_mean, r_se = float(r.mean()), se(r)
    ks = stats.kstest(r, "expon", args=(0.0, r_target))
    v_lo, v_hi = volume_bounds(M, lam, d)
    v_mean, v_se = float(V.mean()), se(V)
    kappa = unit_ball_constants(d).volume
    tails = []
    for a in thresholds:
        p = float(np.mean(R >= a))
        p_se = math.sqrt(max(p * (1 - p), 1e-300) / n)
        bound = circumradius_tail_bound(a, M, lam, d)
        tails.append({"a": a, "empirical": p, "se": p_se, "bound": bound,
                      "pass": p <= bound + 3 * p_se})
    geometry_ok = bool(np.all(r <= R * (1 + 1e-12))
                       and np.all(kappa * r ** d <= V * (1 + 1e-9))
                       and np.all(V <= kappa * R ** d * (1 + 1e-9)))
    report = {
        "params": {"M": M, "lifetime": lam, "d": d, "n_samples": n},
        "inradius": {"mean": r_mean, "se": r_se, "target": r_target,
                     "pass": abs(r_mean - r_target) <= 3 * r_se,
                     "ks_statistic": float(ks.statistic), "ks_pvalue": float(ks.pvalue),
                     "ks_pass": bool(ks.pvalue >= 0.01)},
        "volume": {"mean": v_mean, "se": v_se, "lower": v_lo, "upper": v_hi,
                   "pass": v_lo - 3 * v_se <= v_mean <= v_hi + 3 * v_se},
        "circumradius": {"mean": float(R.mean()), "se": se(R), "tail": tails,
                         "pass": all(t["pass"] for t in tails)},
        "geometry_pass": geometry_ok,
    }
    report["pass"] = bool(report["inradius"]["pass"] and report["inradius"]["ks_pass"]
                          and report["volume"]["pass"] and report["circumradius"]["pass"]
                          and geometry_ok)
    if keep_samples:
        report["samples"] = {"volume": V, "inradius": r, "circumradius": R}
    return report


def write_report(report: dict, path) -> None:
    clean = {k: v for k, v in report.items() if k != "samples"}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(clean, fh, indent=2, sort_keys=True)


def write_samples_csv(report: dict, path) -> None:
    smp = report["samples"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["volume", "inradius", "circumradius"])
        for row in zip(smp["volume"], smp["inradius"], smp["circumradius"]):
            w.writerow([repr(float(v)) for v in row])
