# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_fallback.py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log1p, sqrt, fabs, atan2, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

NAME = "cython"


def build_tree(const double[::1] lower, const double[::1] upper, double lambda_max,
               const double[:, ::1] points, bint use_points, Py_ssize_t min_split,
               const double[::1] uniforms):
    cdef Py_ssize_t d = lower.shape[0]
    cdef Py_ssize_t n_pool = uniforms.shape[0]
    cdef Py_ssize_t n_pts = points.shape[0] if use_points else 0
    cdef Py_ssize_t cap = n_pool

    dim_a = np.full(cap, -1, dtype=np.int64)
    loc_a = np.zeros(cap)
    birth_a = np.zeros(cap)
    cut_a = np.full(cap, np.inf)
    left_a = np.full(cap, -1, dtype=np.int64)
    right_a = np.full(cap, -1, dtype=np.int64)
    parent_a = np.full(cap, -1, dtype=np.int64)
    nlo_a = np.zeros((cap, d))
    nup_a = np.zeros((cap, d))
    idx_a = np.arange(n_pts, dtype=np.int64)
    # pending stack; depth-first so at most cap entries
    s_par_a = np.empty(cap + 1, dtype=np.int64)
    s_side_a = np.empty(cap + 1, dtype=np.int64)
    s_start_a = np.empty(cap + 1, dtype=np.int64)
    s_end_a = np.empty(cap + 1, dtype=np.int64)
    s_birth_a = np.empty(cap + 1)
    s_lo_a = np.empty((cap + 1, d))
    s_up_a = np.empty((cap + 1, d))

    cdef cnp.int64_t[::1] dim = dim_a
    cdef double[::1] loc = loc_a
    cdef double[::1] birth = birth_a
    cdef double[::1] cut = cut_a
    cdef cnp.int64_t[::1] left = left_a
    cdef cnp.int64_t[::1] right = right_a
    cdef cnp.int64_t[::1] parent = parent_a
    cdef double[:, ::1] nlo = nlo_a
    cdef double[:, ::1] nup = nup_a
    cdef cnp.int64_t[::1] idx = idx_a
    cdef cnp.int64_t[::1] s_par = s_par_a
    cdef cnp.int64_t[::1] s_side = s_side_a
    cdef cnp.int64_t[::1] s_start = s_start_a
    cdef cnp.int64_t[::1] s_end = s_end_a
    cdef double[::1] s_birth = s_birth_a
    cdef double[:, ::1] s_lo = s_lo_a
    cdef double[:, ::1] s_up = s_up_a

    cdef Py_ssize_t sp = 0, node = 0, used = 0, i, j, k, mid, start, end, p, side
    cdef cnp.int64_t q
    cdef double b, rate, t, target, acc, w, a
    cdef bint exhausted = False

    s_par[0] = -1
    s_side[0] = 0
    s_start[0] = 0
    s_end[0] = n_pts
    s_birth[0] = 0.0
    for i in range(d):
        s_lo[0, i] = lower[i]
        s_up[0, i] = upper[i]
    sp = 1

    with nogil:
        while sp > 0:
            sp -= 1
            p = s_par[sp]
            side = s_side[sp]
            start = s_start[sp]
            end = s_end[sp]
            b = s_birth[sp]
            if node >= n_pool:
                exhausted = True
                break
            birth[node] = b
            parent[node] = p
            for i in range(d):
                nlo[node, i] = s_lo[sp, i]
                nup[node, i] = s_up[sp, i]
            if p >= 0:
                if side == 0:
                    left[p] = node
                else:
                    right[p] = node
            node += 1
            if use_points and end - start < min_split:
                continue
            rate = 0.0
            for i in range(d):
                rate += nup[node - 1, i] - nlo[node - 1, i]
            if rate <= 0.0:
                continue
            if used >= n_pool:
                exhausted = True
                break
            t = b + (-log1p(-uniforms[used])) / rate
            used += 1
            if not t < lambda_max:
                continue
            if used + 2 > n_pool:
                exhausted = True
                break
            target = uniforms[used] * rate
            used += 1
            j = -1
            acc = 0.0
            for i in range(d):
                w = nup[node - 1, i] - nlo[node - 1, i]
                acc += w
                if w > 0.0:
                    j = i
                    if target < acc:
                        break
            w = nup[node - 1, j] - nlo[node - 1, j]
            a = nlo[node - 1, j] + uniforms[used] * w
            used += 1
            if not (nlo[node - 1, j] < a and a < nup[node - 1, j]):
                a = 0.5 * (nlo[node - 1, j] + nup[node - 1, j])
            mid = start
            for k in range(start, end):
                q = idx[k]
                if points[q, j] <= a:
                    idx[k] = idx[mid]
                    idx[mid] = q
                    mid += 1
            dim[node - 1] = j
            loc[node - 1] = a
            cut[node - 1] = t
            # right child first so the left child is visited next
            s_par[sp] = node - 1
            s_side[sp] = 1
            s_start[sp] = mid
            s_end[sp] = end
            s_birth[sp] = t
            for i in range(d):
                s_lo[sp, i] = nlo[node - 1, i]
                s_up[sp, i] = nup[node - 1, i]
            s_lo[sp, j] = a
            sp += 1
            s_par[sp] = node - 1
            s_side[sp] = 0
            s_start[sp] = start
            s_end[sp] = mid
            s_birth[sp] = t
            for i in range(d):
                s_lo[sp, i] = nlo[node - 1, i]
                s_up[sp, i] = nup[node - 1, i]
            s_up[sp, j] = a
            sp += 1

    if exhausted:
        return None
    n = node
    return (n, used, dim_a[:n].copy(), loc_a[:n].copy(), birth_a[:n].copy(), cut_a[:n].copy(),
            left_a[:n].copy(), right_a[:n].copy(), parent_a[:n].copy(),
            nlo_a[:n].copy(), nup_a[:n].copy())


def descend(const double[:, ::1] X, const cnp.int64_t[::1] dim, const double[::1] loc,
            const cnp.int64_t[::1] left, const cnp.int64_t[::1] right, const double[::1] cut,
            double lifetime):
    cdef Py_ssize_t n = X.shape[0], r
    cdef cnp.int64_t node
    out_a = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_a
    with nogil:
        for r in range(n):
            node = 0
            while cut[node] <= lifetime:
                if X[r, dim[node]] <= loc[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[r] = node
    return out_a


def ascend(const cnp.int64_t[::1] nodes, const cnp.int64_t[::1] parent, const double[::1] birth,
           double lifetime):
    cdef Py_ssize_t n = nodes.shape[0], r
    cdef cnp.int64_t node
    out_a = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_a
    with nogil:
        for r in range(n):
            node = nodes[r]
            while birth[node] > lifetime:
                node = parent[node]
            out[r] = node
    return out_a


cdef Py_ssize_t _clip(double* px, double* py, Py_ssize_t n, double a0, double a1, double c,
                      double* ox, double* oy) noexcept nogil:
    cdef Py_ssize_t i, m = 0, i2
    cdef double fp, fq, t
    for i in range(n):
        i2 = i + 1
        if i2 == n:
            i2 = 0
        fp = a0 * px[i] + a1 * py[i] - c
        fq = a0 * px[i2] + a1 * py[i2] - c
        if fp <= 0.0:
            ox[m] = px[i]
            oy[m] = py[i]
            m += 1
        if (fp < 0.0 and 0.0 < fq) or (fq < 0.0 and 0.0 < fp):
            t = fp / (fp - fq)
            ox[m] = px[i] + t * (px[i2] - px[i])
            oy[m] = py[i] + t * (py[i2] - py[i])
            m += 1
    return m


def clip_cells_2d(const double[:, :, ::1] normals, const double[:, ::1] halfwidths):
    cdef Py_ssize_t n = halfwidths.shape[0], K = halfwidths.shape[1]
    cdef Py_ssize_t cap = 4 + 2 * K + 2, i, k, j, m, j2
    area_a = np.empty(n)
    radius_a = np.empty(n)
    cdef double[::1] area = area_a
    cdef double[::1] radius = radius_a
    cdef double* bx = <double*> malloc(4 * cap * sizeof(double))
    if bx == NULL:
        raise MemoryError()
    cdef double* by = bx + cap
    cdef double* cx = bx + 2 * cap
    cdef double* cy = bx + 3 * cap
    cdef double h, acc, r2, rr
    try:
        with nogil:
            for i in range(n):
                h = 0.0
                for k in range(K):
                    h += halfwidths[i, k]
                h = 10.0 * h
                bx[0] = -h; by[0] = -h
                bx[1] = h; by[1] = -h
                bx[2] = h; by[2] = h
                bx[3] = -h; by[3] = h
                m = 4
                for k in range(K):
                    m = _clip(bx, by, m, normals[i, k, 0], normals[i, k, 1], halfwidths[i, k], cx, cy)
                    m = _clip(cx, cy, m, -normals[i, k, 0], -normals[i, k, 1], halfwidths[i, k], bx, by)
                acc = 0.0
                r2 = 0.0
                for j in range(m):
                    j2 = j + 1
                    if j2 == m:
                        j2 = 0
                    acc += bx[j] * by[j2] - bx[j2] * by[j]
                    rr = bx[j] * bx[j] + by[j] * by[j]
                    if rr > r2:
                        r2 = rr
                area[i] = 0.5 * fabs(acc)
                radius[i] = sqrt(r2)
    finally:
        free(bx)
    return area_a, radius_a


cdef inline void _cross(double* u, double* v, double* out) noexcept nogil:
    out[0] = u[1] * v[2] - u[2] * v[1]
    out[1] = u[2] * v[0] - u[0] * v[2]
    out[2] = u[0] * v[1] - u[1] * v[0]


cdef inline double _dot(double* u, double* v) noexcept nogil:
    return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]


cdef double _face_area(double* verts, Py_ssize_t* face, Py_ssize_t m, double* nrm,
                       double* key, double* fu, double* fv) noexcept nogil:
    cdef double c[3]
    cdef double e1[3]
    cdef double e2[3]
    cdef double ax[3]
    cdef double q[3]
    cdef double l1, acc, tk, tu, tv
    cdef Py_ssize_t j, l, j2
    c[0] = 0.0; c[1] = 0.0; c[2] = 0.0
    for j in range(m):
        c[0] += verts[3 * face[j]]
        c[1] += verts[3 * face[j] + 1]
        c[2] += verts[3 * face[j] + 2]
    c[0] /= m; c[1] /= m; c[2] /= m
    ax[0] = 0.0; ax[1] = 0.0; ax[2] = 0.0
    if fabs(nrm[0]) < 0.9:
        ax[0] = 1.0
    else:
        ax[1] = 1.0
    _cross(nrm, ax, e1)
    l1 = sqrt(_dot(e1, e1))
    e1[0] /= l1; e1[1] /= l1; e1[2] /= l1
    _cross(nrm, e1, e2)
    for j in range(m):
        q[0] = verts[3 * face[j]] - c[0]
        q[1] = verts[3 * face[j] + 1] - c[1]
        q[2] = verts[3 * face[j] + 2] - c[2]
        fu[j] = _dot(q, e1)
        fv[j] = _dot(q, e2)
        key[j] = atan2(fv[j], fu[j])
    # insertion sort by angle
    for j in range(1, m):
        tk = key[j]; tu = fu[j]; tv = fv[j]
        l = j - 1
        while l >= 0 and key[l] > tk:
            key[l + 1] = key[l]; fu[l + 1] = fu[l]; fv[l + 1] = fv[l]
            l -= 1
        key[l + 1] = tk; fu[l + 1] = tu; fv[l + 1] = tv
    acc = 0.0
    for j in range(m):
        j2 = j + 1
        if j2 == m:
            j2 = 0
        acc += fu[j] * fv[j2] - fu[j2] * fv[j]
    return 0.5 * fabs(acc)


def polytope_cells_3d(const double[:, :, ::1] normals, const double[:, ::1] halfwidths,
                      double cond_max, double rel_slack):
    cdef Py_ssize_t n = halfwidths.shape[0], K = halfwidths.shape[1]
    cdef Py_ssize_t max_v = 8 * K * (K - 1) * (K - 2) // 6 + 1
    volume_a = np.empty(n)
    radius_a = np.empty(n)
    cdef double[::1] volume = volume_a
    cdef double[::1] radius = radius_a
    cdef double* verts = <double*> malloc(3 * max_v * sizeof(double))
    cdef double* key = <double*> malloc(3 * max_v * sizeof(double))
    cdef Py_ssize_t* face = <Py_ssize_t*> malloc(max_v * sizeof(Py_ssize_t))
    cdef double* A = <double*> malloc(3 * K * sizeof(double) + 1)
    if verts == NULL or key == NULL or face == NULL or A == NULL:
        free(verts); free(key); free(face); free(A)
        raise MemoryError()
    cdef double* fu = key + max_v
    cdef double* fv = key + 2 * max_v
    cdef double bc[3]
    cdef double ca[3]
    cdef double ab[3]
    cdef double x[3]
    cdef double nrm[3]
    cdef double det, inv_f2, ra, rb, rc, tol, smax, r2, rr, vol, sa, sb, sc, sign
    cdef Py_ssize_t i, a, b, c, k, nv, m, v, ia, ib, ic, isg
    cdef bint ok
    try:
        with nogil:
            for i in range(n):
                smax = 0.0
                for k in range(K):
                    A[3 * k] = normals[i, k, 0]
                    A[3 * k + 1] = normals[i, k, 1]
                    A[3 * k + 2] = normals[i, k, 2]
                    if halfwidths[i, k] > smax:
                        smax = halfwidths[i, k]
                tol = rel_slack * smax
                nv = 0
                for a in range(K):
                    for b in range(a + 1, K):
                        for c in range(b + 1, K):
                            _cross(&A[3 * b], &A[3 * c], bc)
                            _cross(&A[3 * c], &A[3 * a], ca)
                            _cross(&A[3 * a], &A[3 * b], ab)
                            det = _dot(&A[3 * a], bc)
                            if det == 0.0:
                                continue
                            inv_f2 = (_dot(bc, bc) + _dot(ca, ca) + _dot(ab, ab)) / (det * det)
                            if sqrt(3.0 * inv_f2) >= cond_max:
                                continue
                            for ia in range(2):
                                sa = -1.0 if ia == 0 else 1.0
                                for ib in range(2):
                                    sb = -1.0 if ib == 0 else 1.0
                                    for ic in range(2):
                                        sc = -1.0 if ic == 0 else 1.0
                                        ra = sa * halfwidths[i, a] / det
                                        rb = sb * halfwidths[i, b] / det
                                        rc = sc * halfwidths[i, c] / det
                                        x[0] = ra * bc[0] + rb * ca[0] + rc * ab[0]
                                        x[1] = ra * bc[1] + rb * ca[1] + rc * ab[1]
                                        x[2] = ra * bc[2] + rb * ca[2] + rc * ab[2]
                                        ok = True
                                        for k in range(K):
                                            if fabs(_dot(&A[3 * k], x)) > halfwidths[i, k] + tol:
                                                ok = False
                                                break
                                        if ok:
                                            verts[3 * nv] = x[0]
                                            verts[3 * nv + 1] = x[1]
                                            verts[3 * nv + 2] = x[2]
                                            nv += 1
                r2 = 0.0
                for v in range(nv):
                    rr = _dot(&verts[3 * v], &verts[3 * v])
                    if rr > r2:
                        r2 = rr
                vol = 0.0
                for k in range(K):
                    for isg in range(2):
                        sign = -1.0 if isg == 0 else 1.0
                        nrm[0] = sign * A[3 * k]
                        nrm[1] = sign * A[3 * k + 1]
                        nrm[2] = sign * A[3 * k + 2]
                        m = 0
                        for v in range(nv):
                            if fabs(_dot(nrm, &verts[3 * v]) - halfwidths[i, k]) <= tol:
                                face[m] = v
                                m += 1
                        if m < 3:
                            continue
                        vol += halfwidths[i, k] * _face_area(verts, face, m, nrm, key, fu, fv) / 3.0
                volume[i] = vol
                radius[i] = sqrt(r2)
    finally:
        free(verts); free(key); free(face); free(A)
    return volume_a, radius_a


def descend_from(const double[:, ::1] X, const cnp.int64_t[::1] start,
                 const cnp.int64_t[::1] dim, const double[::1] loc,
                 const cnp.int64_t[::1] left, const cnp.int64_t[::1] right,
                 const double[::1] cut, double lifetime):
    cdef Py_ssize_t n = X.shape[0], r
    cdef cnp.int64_t node
    out_a = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_a
    with nogil:
        for r in range(n):
            node = start[r]
            while cut[node] <= lifetime:
                if X[r, dim[node]] <= loc[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[r] = node
    return out_a


def subtree_end(const cnp.int64_t[::1] right):
    cdef Py_ssize_t n = right.shape[0], k
    end_a = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] end = end_a
    with nogil:
        for k in range(n - 1, -1, -1):
            end[k] = k + 1 if right[k] < 0 else end[right[k]]
    return end_a


def pair_downdate(cnp.int32_t[:, ::1] counts, const cnp.int64_t[::1] perm,
                  const cnp.int64_t[::1] start, const cnp.int64_t[::1] mid,
                  const cnp.int64_t[::1] end):
    cdef Py_ssize_t ncol = counts.shape[1], e, p, q
    cdef cnp.int64_t i, j
    with nogil:
        for e in range(start.shape[0]):
            for p in range(start[e], mid[e]):
                i = perm[p]
                for q in range(mid[e], end[e]):
                    j = perm[q]
                    if j < ncol:
                        counts[i, j] -= 1
                    if i < ncol:
                        counts[j, i] -= 1
