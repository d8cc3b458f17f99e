"""Seeded randomness, uniform rotations, axis-aligned boxes and CSV ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np


class InvalidDimensionError(ValueError):
    pass


class OutOfDomainError(ValueError):
    """A query point lies outside the box a partition was built on."""


class DatasetParseError(ValueError):
    pass


@dataclass(frozen=True)
class SeededRng:
    """An addressable random stream.

    The stream is identified by ``(master_seed, stream_path)``; the same pair
    always yields the same draws.  Substreams are obtained with
    :func:`derive_stream` and are hashed independently of one another, so the
    order in which they are created never matters.
    """

    master_seed: int
    stream_path: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "master_seed", int(self.master_seed) & (2**64 - 1))
        object.__setattr__(self, "stream_path", tuple(int(p) for p in self.stream_path))

    def derive(self, label: int) -> "SeededRng":
        return SeededRng(self.master_seed, self.stream_path + (int(label),))

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.stream_path)
        return np.random.Generator(np.random.PCG64(seq))


RngLike = Union[SeededRng, np.random.Generator, int]


def derive_stream(rng: SeededRng, label: int) -> SeededRng:
    return rng.derive(label)


def as_generator(rng: RngLike) -> np.random.Generator:
    """Coerce a seed, a :class:`SeededRng` or a generator to a generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, SeededRng):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return SeededRng(int(rng)).generator()
    raise TypeError(f"cannot make a generator from {type(rng).__name__}")


@dataclass(frozen=True)
class Rotation:
    """A proper rotation; construction checks ``R^T R = I`` and ``det R = 1`` to 1e-10."""

    matrix: np.ndarray

    def __post_init__(self):
        R = np.array(self.matrix, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1] or R.shape[0] < 1:
            raise InvalidDimensionError(f"rotation must be a square matrix, got shape {R.shape}")
        if (np.abs(R.T @ R - np.eye(R.shape[0])).max() > 1e-10
                or abs(np.linalg.det(R) - 1.0) > 1e-10):
            raise ValueError("matrix is not a rotation (orthogonal with determinant +1)")
        R.setflags(write=False)
        object.__setattr__(self, "matrix", R)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Rotate the rows of ``points``: ``x -> R x``."""
        return np.asarray(points, dtype=float) @ self.matrix.T


def _haar_from_gaussian(g: np.ndarray) -> np.ndarray:
    # g has shape (..., d, d); QR with sign correction gives Haar on O(d).
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    signs[signs == 0] = 1.0
    q = q * signs[..., None, :]
    det = np.linalg.det(q)
    q[..., :, 0] *= np.where(det < 0, -1.0, 1.0)[..., None]
    return q


def sample_rotation(d: int, rng: RngLike) -> Rotation:
    """Draw a Haar-uniform element of SO(d).

    Parameters
    ----------
    d : int
        Dimension, at least 1.
    rng : SeededRng, Generator or int
        Source of randomness.

    Returns
    -------
    Rotation
    """
    if d < 1:
        raise InvalidDimensionError(f"rotation dimension must be >= 1, got {d}")
    gen = as_generator(rng)
    if d == 1:
        return Rotation(np.ones((1, 1)))
    return Rotation(_haar_from_gaussian(gen.standard_normal((d, d))))


def sample_rotations(n: int, d: int, rng: RngLike) -> np.ndarray:
    """``n`` independent Haar rotations stacked as an ``(n, d, d)`` array."""
    if d < 1:
        raise InvalidDimensionError(f"rotation dimension must be >= 1, got {d}")
    gen = as_generator(rng)
    if d == 1:
        return np.ones((n, 1, 1))
    return _haar_from_gaussian(gen.standard_normal((n, d, d)))


@dataclass(frozen=True)
class AxisBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).copy()
        upper = np.asarray(self.upper, dtype=float).copy()
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if np.any(lower > upper):
            raise ValueError("box lower bound exceeds upper bound")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, points: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
        """Row mask of points inside the box, up to a rounding slack."""
        points = np.atleast_2d(points)
        slack = rtol * (np.abs(self.lower) + np.abs(self.upper) + self.widths + 1.0)
        return np.all((points >= self.lower - slack) & (points <= self.upper + slack), axis=1)


def bounding_box(points: np.ndarray) -> AxisBox:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None, :]
    if points.shape[0] == 0:
        raise ValueError("cannot bound an empty point set")
    return AxisBox(points.min(axis=0), points.max(axis=0))


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    targets: np.ndarray | None = None
    columns: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if points.shape[0] < 1:
            raise ValueError("a dataset needs at least one row")
        if not np.all(np.isfinite(points)):
            raise ValueError("dataset contains non-finite entries")
        object.__setattr__(self, "points", points)
        if self.targets is not None:
            targets = np.asarray(self.targets, dtype=float).ravel()
            if targets.shape[0] != points.shape[0]:
                raise ValueError("targets and points disagree in length")
            if not np.all(np.isfinite(targets)):
                raise ValueError("dataset contains non-finite targets")
            object.__setattr__(self, "targets", targets)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def load_csv(path: str | Path, target_column: str | None = None) -> Dataset:
    """Read a headed, comma-separated numeric table.

    Raises
    ------
    KeyError
        If ``target_column`` is not in the header.
    DatasetParseError
        On any cell that is not a finite decimal number; the message names
        the 1-based data row and the column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetParseError(f"{path}: empty file") from None
        rows = []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetParseError(
                    f"{path}: row {row_no} has {len(row)} cells, header has {len(header)}")
            values = []
            for col, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DatasetParseError(
                        f"{path}: row {row_no}, column {col!r}: {cell!r} is not a number") from None
                if not math.isfinite(v):
                    raise DatasetParseError(
                        f"{path}: row {row_no}, column {col!r}: non-finite value {cell!r}")
                values.append(v)
            rows.append(values)
    if not rows:
        raise DatasetParseError(f"{path}: no data rows")
    table = np.array(rows, dtype=float)
    if target_column is None:
        return Dataset(table, None, tuple(header))
    if target_column not in header:
        raise KeyError(f"target column {target_column!r} not in {header}")
    j = header.index(target_column)
    keep = [i for i in range(len(header)) if i != j]
    return Dataset(table[:, keep], table[:, j], tuple(header[i] for i in keep))


def split_dataset(data: Dataset, fractions: Sequence[float], rng: RngLike) -> list[Dataset]:
    """Shuffle rows and cut them into consecutive pieces of the given fractions."""
    gen = as_generator(rng)
    order = gen.permutation(data.n)
    bounds = np.round(np.cumsum([0.0, *fractions]) / sum(fractions) * data.n).astype(int)
    out = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        idx = order[a:b]
        out.append(Dataset(data.points[idx],
                           None if data.targets is None else data.targets[idx],
                           data.columns))
    return out
