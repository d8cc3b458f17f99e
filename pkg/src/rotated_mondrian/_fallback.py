"""Pure-Python implementations of the hot kernels.

Every function here has a compiled twin in ``_kernels.pyx`` with the same
signature and the same floating-point operation order, so tree construction
is bit-identical across backends.
"""

import math

import numpy as np

NAME = "python"


def build_tree(lower, upper, lambda_max, points, use_points, min_split, uniforms):
    """Grow a Mondrian tree in depth-first, left-first order.

    Random numbers are consumed from ``uniforms`` in a fixed order: one per
    visited node for the split time, two more per split (dimension and
    location).  Returns ``None`` if the pool runs out, otherwise a tuple
    ``(n_nodes, n_used, dim, loc, birth, cut, left, right, parent,
    node_lower, node_upper)`` of arrays trimmed to ``n_nodes``.
    """
    d = len(lower)
    pool = uniforms.tolist()
    n_pool = len(pool)
    X = points.tolist() if use_points else []
    idx = list(range(len(X)))

    dim, loc, birth, cut = [], [], [], []
    left, right, parent = [], [], []
    node_lo, node_up = [], []
    used = 0
    inf = math.inf
    # stack entries: (parent, side, start, end, birth, lo, up)
    stack = [(-1, 0, 0, len(X), 0.0, [float(v) for v in lower], [float(v) for v in upper])]
    while stack:
        p, side, start, end, b, lo, up = stack.pop()
        node = len(dim)
        if node >= n_pool:
            return None
        dim.append(-1)
        loc.append(0.0)
        birth.append(b)
        cut.append(inf)
        left.append(-1)
        right.append(-1)
        parent.append(p)
        node_lo.append(lo)
        node_up.append(up)
        if p >= 0:
            if side == 0:
                left[p] = node
            else:
                right[p] = node
        if use_points and end - start < min_split:
            continue
        rate = 0.0
        for i in range(d):
            rate += up[i] - lo[i]
        if rate <= 0.0:
            continue
        if used >= n_pool:
            return None
        t = b + (-math.log1p(-pool[used])) / rate
        used += 1
        if not t < lambda_max:
            continue
        if used + 2 > n_pool:
            return None
        target = pool[used] * rate
        used += 1
        j = -1
        acc = 0.0
        for i in range(d):
            w = up[i] - lo[i]
            acc += w
            if w > 0.0:
                j = i
                if target < acc:
                    break
        w = up[j] - lo[j]
        a = lo[j] + pool[used] * w
        used += 1
        if not (lo[j] < a < up[j]):
            a = 0.5 * (lo[j] + up[j])
        # partition idx[start:end] so that x[j] <= a comes first
        mid = start
        for k in range(start, end):
            q = idx[k]
            if X[q][j] <= a:
                idx[k], idx[mid] = idx[mid], q
                mid += 1
        dim[node] = j
        loc[node] = a
        cut[node] = t
        up_left = list(up)
        up_left[j] = a
        lo_right = list(lo)
        lo_right[j] = a
        stack.append((node, 1, mid, end, t, lo_right, up))
        stack.append((node, 0, start, mid, t, lo, up_left))

    n = len(dim)
    return (
        n, used,
        np.array(dim, dtype=np.int64), np.array(loc), np.array(birth), np.array(cut),
        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
        np.array(parent, dtype=np.int64),
        np.array(node_lo, dtype=float).reshape(n, d), np.array(node_up, dtype=float).reshape(n, d),
    )


def descend(X, dim, loc, left, right, cut, lifetime):
    """Node reached by each row of ``X`` when cuts later than ``lifetime`` are ignored."""
    return descend_from(X, np.zeros(X.shape[0], dtype=np.int64), dim, loc, left, right, cut,
                        lifetime)


def descend_from(X, start, dim, loc, left, right, cut, lifetime):
    """Like :func:`descend` but resuming from the given nodes."""
    n = X.shape[0]
    node = np.array(start, dtype=np.int64, copy=True)
    active = np.ones(n, dtype=bool)
    rows = np.arange(n)
    while True:
        cur = node[active]
        go = cut[cur] <= lifetime
        if not go.any():
            break
        act_rows = rows[active][go]
        cur = cur[go]
        goes_left = X[act_rows, dim[cur]] <= loc[cur]
        node[act_rows] = np.where(goes_left, left[cur], right[cur])
        active[:] = False
        active[act_rows] = True
    return node


def ascend(nodes, parent, birth, lifetime):
    """Walk each node up to its ancestor alive at ``lifetime``."""
    nodes = np.array(nodes, dtype=np.int64, copy=True)
    while True:
        late = birth[nodes] > lifetime
        if not late.any():
            return nodes
        nodes[late] = parent[nodes[late]]


def _clip(poly, a0, a1, c):
    out = []
    n = len(poly)
    for i in range(n):
        px, py = poly[i]
        qx, qy = poly[(i + 1) % n]
        fp = a0 * px + a1 * py - c
        fq = a0 * qx + a1 * qy - c
        if fp <= 0.0:
            out.append((px, py))
        if (fp < 0.0 < fq) or (fq < 0.0 < fp):
            t = fp / (fp - fq)
            out.append((px + t * (qx - px), py + t * (qy - py)))
    return out


def clip_cells_2d(normals, halfwidths):
    """Area and circumradius of planar cells ``{x : |<a_k, x>| <= s_k}``.

    Each cell is obtained by clipping a large square successively by the
    two half-planes of every slab.
    """
    n, K = halfwidths.shape
    area = np.empty(n)
    radius = np.empty(n)
    for i in range(n):
        A = normals[i].tolist()
        s = halfwidths[i].tolist()
        h = 10.0 * sum(s)
        poly = [(-h, -h), (h, -h), (h, h), (-h, h)]
        for k in range(K):
            a0, a1 = A[k]
            poly = _clip(poly, a0, a1, s[k])
            poly = _clip(poly, -a0, -a1, s[k])
        acc = 0.0
        r2 = 0.0
        m = len(poly)
        for j in range(m):
            px, py = poly[j]
            qx, qy = poly[(j + 1) % m]
            acc += px * qy - qx * py
            rr = px * px + py * py
            if rr > r2:
                r2 = rr
        area[i] = 0.5 * abs(acc)
        radius[i] = math.sqrt(r2)
    return area, radius


def _cross(u, v):
    return (u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0])


def _dot(u, v):
    return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]


def polytope_cells_3d(normals, halfwidths, cond_max, rel_slack):
    """Volume and circumradius of 3-D cells ``{x : |<a_k, x>| <= s_k}``.

    Vertices come from all well-conditioned plane triples that satisfy every
    slab constraint.  The volume is the sum over facets of the pyramids with
    apex at the origin: ``sum_f s_f * area_f / 3``.
    """
    n, K = halfwidths.shape
    volume = np.empty(n)
    radius = np.empty(n)
    for i in range(n):
        A = [tuple(r) for r in normals[i].tolist()]
        s = halfwidths[i].tolist()
        tol = rel_slack * max(s)
        verts = []
        for a in range(K):
            for b in range(a + 1, K):
                for c in range(b + 1, K):
                    bc = _cross(A[b], A[c])
                    ca = _cross(A[c], A[a])
                    ab = _cross(A[a], A[b])
                    det = _dot(A[a], bc)
                    if det == 0.0:
                        continue
                    inv_f2 = (_dot(bc, bc) + _dot(ca, ca) + _dot(ab, ab)) / (det * det)
                    if math.sqrt(3.0 * inv_f2) >= cond_max:
                        continue
                    for sa in (-1.0, 1.0):
                        for sb in (-1.0, 1.0):
                            for sc in (-1.0, 1.0):
                                ra = sa * s[a] / det
                                rb = sb * s[b] / det
                                rc = sc * s[c] / det
                                x = (ra * bc[0] + rb * ca[0] + rc * ab[0],
                                     ra * bc[1] + rb * ca[1] + rc * ab[1],
                                     ra * bc[2] + rb * ca[2] + rc * ab[2])
                                ok = True
                                for k in range(K):
                                    if abs(_dot(A[k], x)) > s[k] + tol:
                                        ok = False
                                        break
                                if ok:
                                    verts.append(x)
        r2 = 0.0
        for x in verts:
            rr = _dot(x, x)
            if rr > r2:
                r2 = rr
        vol = 0.0
        for k in range(K):
            for sign in (-1.0, 1.0):
                nrm = (sign * A[k][0], sign * A[k][1], sign * A[k][2])
                face = [x for x in verts if abs(_dot(nrm, x) - s[k]) <= tol]
                if len(face) < 3:
                    continue
                vol += s[k] * _polygon_area_3d(face, nrm) / 3.0
        volume[i] = vol
        radius[i] = math.sqrt(r2)
    return volume, radius


def _polygon_area_3d(face, nrm):
    m = len(face)
    cx = sum(p[0] for p in face) / m
    cy = sum(p[1] for p in face) / m
    cz = sum(p[2] for p in face) / m
    # in-plane orthonormal basis
    if abs(nrm[0]) < 0.9:
        e1 = _cross(nrm, (1.0, 0.0, 0.0))
    else:
        e1 = _cross(nrm, (0.0, 1.0, 0.0))
    l1 = math.sqrt(_dot(e1, e1))
    e1 = (e1[0] / l1, e1[1] / l1, e1[2] / l1)
    e2 = _cross(nrm, e1)
    pts = []
    for p in face:
        q = (p[0] - cx, p[1] - cy, p[2] - cz)
        u = _dot(q, e1)
        v = _dot(q, e2)
        pts.append((math.atan2(v, u), u, v))
    pts.sort()
    acc = 0.0
    for j in range(m):
        _, ux, uy = pts[j]
        _, vx, vy = pts[(j + 1) % m]
        acc += ux * vy - vx * uy
    return 0.5 * abs(acc)


def subtree_end(right):
    """One past the last pre-order id in each node's subtree."""
    n = len(right)
    end = np.empty(n, dtype=np.int64)
    for k in range(n - 1, -1, -1):
        end[k] = k + 1 if right[k] < 0 else end[right[k]]
    return end


def pair_downdate(counts, perm, start, mid, end):
    """Decrement ``counts`` for every pair separated by a split event.

    Event ``e`` separates ``perm[start[e]:mid[e]]`` from
    ``perm[mid[e]:end[e]]``.  Only entries whose column lies inside
    ``counts`` are touched, so ``counts`` may keep a leading subset of
    columns.
    """
    ncol = counts.shape[1]
    for e in range(len(start)):
        a = perm[start[e]:mid[e]]
        b = perm[mid[e]:end[e]]
        bc = b[b < ncol]
        ac = a[a < ncol]
        if bc.size:
            counts[np.ix_(a, bc)] -= 1
        if ac.size:
            counts[np.ix_(b, ac)] -= 1
