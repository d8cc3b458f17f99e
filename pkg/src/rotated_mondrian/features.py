"""Random feature maps: rotated Mondrian, Mondrian, random binning, Fourier."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _backend
from .core import OutOfDomainError, Rotation, SeededRng, bounding_box, sample_rotation
from .mondrian import MondrianTree, build_mondrian

PARTITION_METHODS = ("rotated-mondrian", "mondrian")
METHODS = PARTITION_METHODS + ("binning", "fourier")


@dataclass(frozen=True)
class SparseFeatures:
    """Row-wise sparse features; ``matrix`` is CSR of shape ``(N, C)``."""

    matrix: sp.csr_matrix
    n_components: int

    @property
    def shape(self):
        return self.matrix.shape

    def row(self, i: int) -> list[tuple[int, float]]:
        r = self.matrix.getrow(i)
        return list(zip(r.indices.tolist(), r.data.tolist()))

    def gram(self, other: "SparseFeatures | None" = None) -> np.ndarray:
        other = self if other is None else other
        return np.asarray((self.matrix @ other.matrix.T).todense())

    def n_nonzero_features(self, rows=None) -> int:
        """Number of features that are nonzero on at least one of ``rows``."""
        m = self.matrix if rows is None else self.matrix[rows]
        return int(np.unique(m.indices).size)

    def to_csv(self, path) -> None:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "feature", "value"])
            for i in order:
                w.writerow([int(coo.row[i]), int(coo.col[i]), repr(float(coo.data[i]))])


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """State of ``n_components`` independent random feature components.

    Partition methods hold one tree per component (plus a rotation for the
    rotated variant); binning holds per-component pitches, shifts and the
    table of occupied bins; Fourier holds frequencies and phases.
    """

    method: str
    n_components: int
    lifetime: float
    horizon: float
    dim: int
    rotations: tuple[Rotation, ...] | None = None
    trees: tuple[MondrianTree, ...] | None = None
    pitches: np.ndarray | None = None
    shifts: np.ndarray | None = None
    bin_tables: tuple[dict, ...] | None = None
    frequencies: np.ndarray | None = None
    phases: np.ndarray | None = None

    @property
    def is_partition(self) -> bool:
        return self.method in PARTITION_METHODS

    def head(self, M: int) -> "FeatureMap":
        """The map made of the first ``M`` components only."""
        if not 1 <= M <= self.n_components:
            raise ValueError(f"M must be in [1, {self.n_components}], got {M}")

        def cut(v):
            return None if v is None else v[:M]

        return FeatureMap(self.method, M, self.lifetime, self.horizon, self.dim,
                          rotations=cut(self.rotations), trees=cut(self.trees),
                          pitches=cut(self.pitches), shifts=cut(self.shifts),
                          bin_tables=cut(self.bin_tables), frequencies=cut(self.frequencies),
                          phases=cut(self.phases))

    def transform_points(self, m: int, points: np.ndarray) -> np.ndarray:
        """Coordinates of ``points`` as seen by the ``m``-th tree."""
        points = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
        if self.rotations is None:
            return points
        return np.ascontiguousarray(self.rotations[m].apply(points))

    def n_cells(self, lifetime: float | None = None) -> np.ndarray:
        lifetime = self.lifetime if lifetime is None else lifetime
        return np.array([t.n_cells(lifetime) for t in self.trees])

    @property
    def node_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([t.n_nodes for t in self.trees])])

    def cell_nodes(self, points: np.ndarray, lifetime: float | None = None) -> np.ndarray:
        """``(M, N)`` array of tree-node ids holding each point, per component."""
        lifetime = self.lifetime if lifetime is None else lifetime
        _check_partition(self)
        out = np.empty((self.n_components, np.atleast_2d(points).shape[0]), dtype=np.int64)
        for m, tree in enumerate(self.trees):
            try:
                out[m] = tree.cell_nodes(self.transform_points(m, points), lifetime)
            except OutOfDomainError as exc:
                raise OutOfDomainError(f"component {m}: {exc}") from None
        return out

    def bin_ids(self, points: np.ndarray) -> np.ndarray:
        """``(M, N)`` array of local bin indices, per repetition."""
        if self.method != "binning":
            raise ValueError("bin_ids needs a binning feature map")
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty((self.n_components, points.shape[0]), dtype=np.int64)
        for m in range(self.n_components):
            codes = _bin_codes(points, self.pitches[m], self.shifts[m])
            table = self.bin_tables[m]
            missing = []
            for i, key in enumerate(map(tuple, codes.tolist())):
                j = table.get(key)
                if j is None:
                    missing.append(i)
                    j = -1
                out[m, i] = j
            if missing:
                shown = ", ".join(str(i) for i in missing[:10])
                raise OutOfDomainError(
                    f"repetition {m}: rows fall in bins not registered at build time: {shown}")
        return out


def _check_partition(fmap: FeatureMap) -> None:
    if not fmap.is_partition:
        raise ValueError(f"method {fmap.method!r} is not a partition method")


def _bin_codes(points, pitch, shift):
    return np.floor((points - shift) / pitch).astype(np.int64)


def _as_seeded(rng) -> SeededRng:
    if isinstance(rng, SeededRng):
        return rng
    if isinstance(rng, (int, np.integer)):
        return SeededRng(int(rng))
    raise TypeError("feature maps need a SeededRng (or int seed) so components get their own streams")


def build_feature_map(points: np.ndarray, method: str, M: int, lifetime: float, rng,
                      horizon: float | None = None, n_jobs: int = 1,
                      min_split: int = 2) -> FeatureMap:
    """Draw ``M`` independent feature components fitted to ``points``.

    ``points`` must contain every row that will later be featurized: the
    partition methods bound the (rotated) data with a tight box and the
    binning method registers the occupied bins.

    With ``min_split >= 1`` the trees stop splitting cells that hold fewer
    than ``min_split`` of ``points``.  Kernel values between rows of
    ``points`` are unaffected, which keeps tree sizes proportional to N at
    large lifetimes, but other locations in the box see coarser cells.  Use
    ``min_split=0`` to grow the full Mondrian process on each box.

    Component ``m`` draws from substream ``m`` of ``rng``, so the result
    does not depend on ``n_jobs``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if M < 1:
        raise ValueError("M must be >= 1")
    if not lifetime > 0:
        raise ValueError(f"lifetime must be > 0, got {lifetime}")
    horizon = lifetime if horizon is None else float(horizon)
    if horizon < lifetime:
        raise ValueError("horizon must be >= lifetime")
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    if points.shape[0] < 1:
        raise ValueError("need at least one point")
    d = points.shape[1]
    rng = _as_seeded(rng)

    if method in PARTITION_METHODS:
        rotate = method == "rotated-mondrian"

        def one(m):
            sub = rng.derive(m)
            rot = sample_rotation(d, sub.derive(0)) if rotate else None
            pts = rot.apply(points) if rotate else points
            pts = np.ascontiguousarray(pts)
            if min_split > 0:
                tree = build_mondrian(bounding_box(pts), horizon, sub.derive(1),
                                      points=pts, min_split=min_split)
            else:
                tree = build_mondrian(bounding_box(pts), horizon, sub.derive(1))
            return rot, tree

        if n_jobs > 1:
            with ThreadPoolExecutor(n_jobs) as ex:
                parts = list(ex.map(one, range(M)))
        else:
            parts = [one(m) for m in range(M)]
        return FeatureMap(method, M, float(lifetime), horizon, d,
                          rotations=tuple(p[0] for p in parts) if rotate else None,
                          trees=tuple(p[1] for p in parts))

    if method == "binning":
        pitches = np.empty((M, d))
        shifts = np.empty((M, d))
        tables = []
        for m in range(M):
            gen = rng.derive(m).generator()
            pitches[m] = gen.gamma(2.0, 1.0 / lifetime, size=d)
            shifts[m] = gen.random(d) * pitches[m]
            codes = _bin_codes(points, pitches[m], shifts[m])
            uniq = np.unique(codes, axis=0)
            tables.append({tuple(row): j for j, row in enumerate(uniq.tolist())})
        return FeatureMap(method, M, float(lifetime), horizon, d,
                          pitches=pitches, shifts=shifts, bin_tables=tuple(tables))

    freqs = np.empty((M, d))
    phases = np.empty(M)
    for m in range(M):
        gen = rng.derive(m).generator()
        freqs[m] = lifetime * gen.standard_cauchy(d)
        phases[m] = 2.0 * np.pi * gen.random()
    return FeatureMap(method, M, float(lifetime), horizon, d, frequencies=freqs, phases=phases)


def featurize(fmap: FeatureMap, points: np.ndarray, lifetime: float | None = None):
    """Feature rows for ``points``.

    Partition and binning maps give :class:`SparseFeatures` with exactly
    one entry ``1/sqrt(M)`` per component, indexed depth-first within each
    tree and offset by the preceding components' cell counts.  Fourier maps
    give a dense ``(N, M)`` array.  Row inner products equal the order-M
    kernel estimate.
    """
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    M = fmap.n_components
    n = points.shape[0]
    if fmap.method == "fourier":
        return np.sqrt(2.0 / M) * np.cos(points @ fmap.frequencies.T + fmap.phases)
    if fmap.method == "binning":
        local = fmap.bin_ids(points)
        sizes = np.array([len(t) for t in fmap.bin_tables])
    else:
        lifetime = fmap.lifetime if lifetime is None else lifetime
        if lifetime > fmap.horizon:
            raise ValueError(f"lifetime {lifetime} exceeds the horizon {fmap.horizon}")
        nodes = fmap.cell_nodes(points, lifetime)
        local = np.empty_like(nodes)
        sizes = np.empty(M, dtype=np.int64)
        for m, tree in enumerate(fmap.trees):
            ranks = tree.leaf_ranks(lifetime)
            local[m] = ranks[nodes[m]]
            sizes[m] = ranks.max() + 1
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    cols = (local + offsets[:-1, None]).T  # (N, M)
    data = np.full(n * M, 1.0 / np.sqrt(M))
    indptr = np.arange(0, n * M + 1, M)
    mat = sp.csr_matrix((data, cols.ravel(), indptr), shape=(n, int(offsets[-1])))
    return SparseFeatures(mat, M)


def component_kernels(fmap: FeatureMap, X: np.ndarray, Y: np.ndarray | None = None,
                      lifetime: float | None = None) -> np.ndarray:
    """Per-component kernel values, shape ``(M, len(X), len(Y))``.

    Averaging the first ``m`` slices gives the order-``m`` estimate.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    if fmap.method == "fourier":
        cx = np.cos(X @ fmap.frequencies.T + fmap.phases)
        cy = np.cos(Y @ fmap.frequencies.T + fmap.phases)
        return 2.0 * cx.T[:, :, None] * cy.T[:, None, :]
    if fmap.method == "binning":
        a, b = fmap.bin_ids(X), fmap.bin_ids(Y)
    else:
        a, b = fmap.cell_nodes(X, lifetime), fmap.cell_nodes(Y, lifetime)
    return (a[:, :, None] == b[:, None, :]).astype(float)


def kernel_estimate(fmap: FeatureMap, x, x_prime, lifetime: float | None = None) -> float:
    """Order-M kernel estimate between two points."""
    k = component_kernels(fmap, np.atleast_2d(x), np.atleast_2d(x_prime), lifetime)
    return float(k[:, 0, 0].sum() / fmap.n_components)


def kernel_matrix(fmap: FeatureMap, X, Y=None, lifetime: float | None = None) -> np.ndarray:
    """Order-M kernel estimate between all rows of ``X`` and ``Y``."""
    if fmap.method == "fourier":
        Y = X if Y is None else Y
        return featurize(fmap, X) @ featurize(fmap, Y).T
    zx = featurize(fmap, X, lifetime)
    zy = zx if Y is None else featurize(fmap, Y, lifetime)
    return zx.gram(zy)


def fourier_features(points, M: int, lifetime: float, rng) -> np.ndarray:
    """Dense random Fourier features approximating ``exp(-lifetime * ||x - x'||_1)``."""
    return featurize(build_feature_map(points, "fourier", M, lifetime, rng), points)


def binning_features(points, M: int, lifetime: float, rng) -> SparseFeatures:
    """Random binning features approximating ``exp(-lifetime * ||x - x'||_1)``."""
    return featurize(build_feature_map(points, "binning", M, lifetime, rng), points)


class NodeFeaturizer:
    """Incremental feature rows for a partition map over increasing lifetimes.

    Columns are global tree-node ids (fixed across lifetimes), so weights
    learned at one lifetime stay attached to the same cell at the next and
    freshly created cells start from zero.  Rows are pushed down the trees
    from where they were at the previous lifetime.
    """

    def __init__(self, fmap: FeatureMap, points: np.ndarray):
        _check_partition(fmap)
        self.fmap = fmap
        self.n = np.atleast_2d(points).shape[0]
        self.coords = [fmap.transform_points(m, points) for m in range(fmap.n_components)]
        for m, tree in enumerate(fmap.trees):
            if not tree.root_box.contains(self.coords[m]).all():
                raise OutOfDomainError(f"component {m}: points outside the partitioned box")
        self.offsets = fmap.node_offsets
        self.nodes = np.zeros((fmap.n_components, self.n), dtype=np.int64)
        self.lifetime = 0.0

    @property
    def n_columns(self) -> int:
        return int(self.offsets[-1])

    def advance(self, lifetime: float) -> sp.csr_matrix:
        if lifetime < self.lifetime:
            raise ValueError("lifetimes must be visited in increasing order")
        if lifetime > self.fmap.horizon:
            raise ValueError("lifetime exceeds the horizon")
        kern = _backend.kernels
        for m, tree in enumerate(self.fmap.trees):
            self.nodes[m] = kern.descend_from(self.coords[m], self.nodes[m], tree.dim, tree.loc,
                                              tree.left, tree.right, tree.cut, float(lifetime))
        self.lifetime = lifetime
        return self.matrix()

    def matrix(self) -> sp.csr_matrix:
        M = self.fmap.n_components
        cols = (self.nodes + self.offsets[:-1, None]).T
        data = np.full(self.n * M, 1.0 / np.sqrt(M))
        indptr = np.arange(0, self.n * M + 1, M)
        return sp.csr_matrix((data, cols.ravel(), indptr), shape=(self.n, self.n_columns))


class SharedCellCounts:
    """Per-pair count of components placing two points in the same cell.

    ``counts(lifetime)[i, j] / M`` is the order-M kernel estimate between
    ``points[i]`` and ``points[j]`` (only the first ``n_columns`` points are
    kept as columns).  Every split is turned once into an event separating
    two contiguous runs of points, so sweeping increasing lifetimes costs
    one decrement per separated pair over the whole sweep.
    """

    def __init__(self, fmap: FeatureMap, points: np.ndarray, n_columns: int | None = None,
                 backend: str | None = None):
        _check_partition(fmap)
        kern = self._kern = _backend.get(backend)
        points = np.atleast_2d(points)
        n = points.shape[0]
        self.n_components = fmap.n_components
        self.n_columns = n if n_columns is None else int(n_columns)
        leaves = fmap.cell_nodes(points, fmap.horizon)
        perms, cuts, starts, mids, ends, keys = [], [], [], [], [], []
        for m, tree in enumerate(fmap.trees):
            order = np.argsort(leaves[m], kind="stable")
            sorted_leaves = leaves[m][order]
            split = np.flatnonzero(tree.left >= 0)
            end_node = kern.subtree_end(tree.right)
            base = m * n
            perms.append(order)
            starts.append(base + np.searchsorted(sorted_leaves, split))
            mids.append(base + np.searchsorted(sorted_leaves, tree.right[split]))
            ends.append(base + np.searchsorted(sorted_leaves, end_node[split]))
            cuts.append(tree.cut[split])
            keys.append(np.full(split.size, m))
        cut = np.concatenate(cuts)
        # integer decrements commute; the sort only batches events by lifetime
        ev = np.lexsort((np.concatenate(keys), cut))
        self._cut = cut[ev]
        self._start = np.ascontiguousarray(np.concatenate(starts)[ev], dtype=np.int64)
        self._mid = np.ascontiguousarray(np.concatenate(mids)[ev], dtype=np.int64)
        self._end = np.ascontiguousarray(np.concatenate(ends)[ev], dtype=np.int64)
        self._perm = np.ascontiguousarray(np.concatenate(perms), dtype=np.int64) % n
        self.counts = np.full((n, self.n_columns), fmap.n_components, dtype=np.int32)
        self._applied = 0
        self.lifetime = 0.0
        self.horizon = fmap.horizon

    def advance(self, lifetime: float) -> np.ndarray:
        """Counts at ``lifetime`` (the internal array; copy before mutating)."""
        if lifetime < self.lifetime:
            raise ValueError("lifetimes must be visited in increasing order")
        if lifetime > self.horizon:
            raise ValueError("lifetime exceeds the horizon")
        stop = int(np.searchsorted(self._cut, lifetime, side="right"))
        if stop > self._applied:
            sl = slice(self._applied, stop)
            self._kern.pair_downdate(self.counts, self._perm, self._start[sl],
                                           self._mid[sl], self._end[sl])
            self._applied = stop
        self.lifetime = lifetime
        return self.counts

    def kernel(self, lifetime: float) -> np.ndarray:
        return self.advance(lifetime) / float(self.n_components)
