import os
import subprocess
import sys

import numpy as np
import pytest

from rotated_mondrian import _backend
from rotated_mondrian.core import SeededRng, bounding_box
from rotated_mondrian.features import SharedCellCounts, build_feature_map
from rotated_mondrian.mondrian import build_mondrian
from rotated_mondrian.stochgeom import cell_geometry, sample_typical_cells

compiled = pytest.importorskip("rotated_mondrian._kernels")
py = _backend.get("python")


def test_default_backend_is_compiled():
    assert _backend.BACKEND == "cython"
    assert _backend.get("cython") is compiled


def test_unknown_backend():
    with pytest.raises(ValueError):
        _backend.get("fortran")


def test_env_var_selects_fallback():
    env = dict(os.environ, ROTATED_MONDRIAN_BACKEND="python")
    out = subprocess.run([sys.executable, "-c",
                          "from rotated_mondrian import _backend; print(_backend.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.parametrize("use_points", [False, True])
def test_trees_bit_identical(use_points):
    pts = SeededRng(0).generator().random((200, 3))
    kw = dict(points=pts, min_split=2) if use_points else {}
    a = build_mondrian(bounding_box(pts), 40.0, SeededRng(1), backend="cython", **kw)
    b = build_mondrian(bounding_box(pts), 40.0, SeededRng(1), backend="python", **kw)
    for f in ("dim", "loc", "birth", "cut", "left", "right", "parent", "node_lower",
              "node_upper"):
        assert np.array_equal(getattr(a, f), getattr(b, f)), f


def test_descend_and_ascend_agree():
    pts = SeededRng(2).generator().random((300, 2))
    t = build_mondrian(bounding_box(pts), 30.0, SeededRng(3))
    Q = np.ascontiguousarray(pts[::-1])
    for lam in (0.0, 5.0, 30.0):
        a = compiled.descend(Q, t.dim, t.loc, t.left, t.right, t.cut, lam)
        b = py.descend(Q, t.dim, t.loc, t.left, t.right, t.cut, lam)
        assert np.array_equal(a, b)
    leaves = py.descend(Q, t.dim, t.loc, t.left, t.right, t.cut, 30.0)
    for lam in (1.0, 10.0):
        assert np.array_equal(compiled.ascend(leaves, t.parent, t.birth, lam),
                              py.ascend(leaves, t.parent, t.birth, lam))
    assert np.array_equal(compiled.subtree_end(t.right), py.subtree_end(t.right))


@pytest.mark.parametrize("d", [2, 3])
def test_cell_geometry_agrees(d):
    normals, s = sample_typical_cells(200, 3, 1.0, d, SeededRng(4))
    Vc, Rc = cell_geometry(normals, s, backend="cython")
    Vp, Rp = cell_geometry(normals, s, backend="python")
    assert np.allclose(Vc, Vp, rtol=1e-12) and np.allclose(Rc, Rp, rtol=1e-12)


def test_pair_downdate_agrees():
    X = SeededRng(5).generator().random((120, 2))
    fmap = build_feature_map(X, "rotated-mondrian", 6, 30.0, SeededRng(6))
    a = SharedCellCounts(fmap, X, 70, backend="cython")
    b = SharedCellCounts(fmap, X, 70, backend="python")
    for lam in (2.0, 12.0, 30.0):
        assert np.array_equal(a.kernel(lam), b.kernel(lam))
