"""Mondrian partition trees on axis-aligned boxes."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _backend
from .core import AxisBox, OutOfDomainError, RngLike, as_generator


@dataclass(frozen=True, eq=False)
class MondrianTree:
    """A Mondrian partition stored as flat node arrays in depth-first order.

    Node 0 is the root.  ``birth[i]`` is the time node ``i`` was created and
    ``cut[i]`` the time it was split (``inf`` for nodes never split before
    ``lambda_max``).  An internal node's left child holds ``x[dim] <= loc``.
    """

    root_box: AxisBox
    lambda_max: float
    dim: np.ndarray
    loc: np.ndarray
    birth: np.ndarray
    cut: np.ndarray
    left: np.ndarray
    right: np.ndarray
    parent: np.ndarray
    node_lower: np.ndarray
    node_upper: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.dim.shape[0]

    def alive(self, lifetime: float) -> np.ndarray:
        """Mask of the nodes that are cells of the partition at ``lifetime``."""
        return (self.birth <= lifetime) & (self.cut > lifetime)

    def n_cells(self, lifetime: float | None = None) -> int:
        lifetime = self.lambda_max if lifetime is None else lifetime
        return int(np.count_nonzero(self.alive(lifetime)))

    def leaf_ranks(self, lifetime: float) -> np.ndarray:
        """Depth-first cell index of every node alive at ``lifetime``, -1 elsewhere.

        Nodes are stored in pre-order, so ranking the alive ones by position
        enumerates the cells left-first.
        """
        alive = self.alive(lifetime)
        ranks = np.cumsum(alive) - 1
        return np.where(alive, ranks, -1)

    def cell_nodes(self, points: np.ndarray, lifetime: float, check: bool = True) -> np.ndarray:
        """Node id of the cell containing each row of ``points`` at ``lifetime``."""
        points = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
        _check_lifetime(self, lifetime)
        if check:
            _check_inside(self.root_box, points)
        return _backend.kernels.descend(points, self.dim, self.loc, self.left, self.right,
                                        self.cut, float(lifetime))

    def to_dict(self) -> dict:
        return {
            "lambda_max": self.lambda_max,
            "root_box": {"lower": self.root_box.lower.tolist(), "upper": self.root_box.upper.tolist()},
            "nodes": [
                {
                    "id": i,
                    "lower": self.node_lower[i].tolist(),
                    "upper": self.node_upper[i].tolist(),
                    "birth_time": float(self.birth[i]),
                    "cut": None if self.dim[i] < 0 else {
                        "dim": int(self.dim[i]), "location": float(self.loc[i]),
                        "time": float(self.cut[i]),
                    },
                    "children": [] if self.dim[i] < 0 else [int(self.left[i]), int(self.right[i])],
                }
                for i in range(self.n_nodes)
            ],
        }

    def dump_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def _check_lifetime(tree: MondrianTree, lifetime: float) -> None:
    if not 0.0 <= lifetime <= tree.lambda_max:
        raise ValueError(f"lifetime {lifetime} outside [0, {tree.lambda_max}]")


def _check_inside(box: AxisBox, points: np.ndarray) -> None:
    inside = box.contains(points)
    if not inside.all():
        bad = np.flatnonzero(~inside)
        shown = ", ".join(str(i) for i in bad[:10])
        more = "" if bad.size <= 10 else f" (+{bad.size - 10} more)"
        raise OutOfDomainError(f"rows outside the partitioned box: {shown}{more}")


def build_mondrian(box: AxisBox, lambda_max: float, rng: RngLike,
                   points: np.ndarray | None = None, min_split: int = 1,
                   backend: str | None = None) -> MondrianTree:
    """Run the Mondrian process on ``box`` up to time ``lambda_max``.

    Each cell waits an exponential time with rate equal to the sum of its
    side lengths, then splits along a dimension chosen proportionally to its
    length at a uniform location; the two halves continue independently.

    Parameters
    ----------
    box : AxisBox
    lambda_max : float
        Generation horizon.  The returned tree can be sliced at any
        lifetime up to this value.
    rng : SeededRng, Generator or int
    points : array of shape (n, d), optional
        If given, cells holding fewer than ``min_split`` of these points
        are not split further.  Cells only ever separate the given points
        the way the full process would, so kernel values between them are
        unchanged while the tree stays proportional to ``n``.
    min_split : int
        See ``points``.
    backend : {"cython", "python"}, optional
        Kernel implementation; both produce identical trees.

    Returns
    -------
    MondrianTree
    """
    if lambda_max < 0:
        raise ValueError(f"lambda_max must be >= 0, got {lambda_max}")
    gen = as_generator(rng)
    kern = _backend.get(backend)
    d = box.dim
    lower = np.ascontiguousarray(box.lower, dtype=float)
    upper = np.ascontiguousarray(box.upper, dtype=float)
    if points is None:
        pts = np.zeros((0, d))
        use_points = False
        size = 256
    else:
        pts = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
        if pts.shape[1] != d:
            raise ValueError("points and box disagree in dimension")
        _check_inside(box, pts)
        use_points = True
        size = max(256, 16 * pts.shape[0])
    pool = gen.random(size)
    while True:
        res = kern.build_tree(lower, upper, float(lambda_max), pts, use_points, int(min_split), pool)
        if res is not None:
            break
        pool = np.concatenate([pool, gen.random(pool.shape[0])])
    _, _, dim, loc, birth, cut, left, right, parent, nlo, nup = res
    return MondrianTree(box, float(lambda_max), dim, loc, birth, cut, left, right, parent, nlo, nup)


def cell_index(tree: MondrianTree, point: np.ndarray, lifetime: float) -> int:
    """Depth-first index of the cell holding ``point`` at ``lifetime``."""
    node = tree.cell_nodes(np.atleast_2d(point), lifetime)[0]
    return int(tree.leaf_ranks(lifetime)[node])


def cell_indices(tree: MondrianTree, points: np.ndarray, lifetime: float) -> np.ndarray:
    nodes = tree.cell_nodes(points, lifetime)
    return tree.leaf_ranks(lifetime)[nodes]


def cut_times(tree: MondrianTree) -> np.ndarray:
    """Sorted split times of the internal nodes."""
    return np.sort(tree.cut[np.isfinite(tree.cut)])
