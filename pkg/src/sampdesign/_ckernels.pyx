# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sampling kernels.

Line-for-line port of ``_pykernels``; see that module for the contracts.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double EPS = 1e-12
cdef double KERNEL_TOL = 1e-12


cdef inline bint _is_free(double x) noexcept nogil:
    return EPS < x < 1.0 - EPS


cdef inline double _snap(double x) noexcept nogil:
    if x < EPS:
        return 0.0
    if x > 1.0 - EPS:
        return 1.0
    return x


cdef inline Py_ssize_t _pick(double u, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i = <Py_ssize_t>(u * m)
    if i >= m:
        return m - 1
    return i


cdef int _kernel(double* M, Py_ssize_t p, Py_ssize_t m, double* u, Py_ssize_t* pivcols) noexcept nogil:
    """Null vector of the row-major p x m matrix M (destroyed). Returns 0 if
    M has full column rank."""
    cdef Py_ssize_t i, j, c, r, best, f
    cdef double scale = 0.0, a, bv, tol, piv, fac, tmp
    cdef bint is_piv
    for i in range(p):
        for j in range(m):
            a = fabs(M[i * m + j])
            if a > scale:
                scale = a
    for j in range(m):
        u[j] = 0.0
    if scale == 0.0:
        u[m - 1] = 1.0
        return 1
    tol = KERNEL_TOL * scale
    r = 0
    for c in range(m):
        if r == p:
            break
        best = r
        bv = fabs(M[r * m + c])
        for i in range(r + 1, p):
            a = fabs(M[i * m + c])
            if a > bv:
                best = i
                bv = a
        if bv <= tol:
            continue
        if best != r:
            for j in range(m):
                tmp = M[r * m + j]
                M[r * m + j] = M[best * m + j]
                M[best * m + j] = tmp
        piv = M[r * m + c]
        for j in range(c, m):
            M[r * m + j] = M[r * m + j] / piv
        for i in range(p):
            if i != r:
                fac = M[i * m + c]
                if fac != 0.0:
                    for j in range(c, m):
                        M[i * m + j] = M[i * m + j] - fac * M[r * m + j]
        pivcols[r] = c
        r += 1
    if r == m:
        return 0
    f = m - 1
    while True:
        is_piv = False
        for i in range(r):
            if pivcols[i] == f:
                is_piv = True
                break
        if not is_piv:
            break
        f -= 1
    u[f] = 1.0
    for i in range(r):
        u[pivcols[i]] = -M[i * m + f]
    return 1


def kernel_vector(B, Py_ssize_t p, Py_ssize_t m):
    cdef double* M = <double*>malloc(p * m * sizeof(double) + 1)
    cdef double* u = <double*>malloc(m * sizeof(double) + 1)
    cdef Py_ssize_t* pc = <Py_ssize_t*>malloc(m * sizeof(Py_ssize_t) + 1)
    cdef Py_ssize_t i, j
    try:
        for i in range(p):
            for j in range(m):
                M[i * m + j] = B[i][j]
        if not _kernel(M, p, m, u, pc):
            return None
        return [u[j] for j in range(m)]
    finally:
        free(M)
        free(u)
        free(pc)


cdef void _step_lengths(double* u, double* vals, Py_ssize_t m, double* lam1, double* lam2) noexcept nogil:
    cdef Py_ssize_t i
    cdef double ui, vk, t
    lam1[0] = INFINITY
    lam2[0] = INFINITY
    for i in range(m):
        ui = u[i]
        vk = vals[i]
        if ui > 0.0:
            t = (1.0 - vk) / ui
            if t < lam1[0]:
                lam1[0] = t
            t = vk / ui
            if t < lam2[0]:
                lam2[0] = t
        elif ui < 0.0:
            t = -vk / ui
            if t < lam1[0]:
                lam1[0] = t
            t = (vk - 1.0) / ui
            if t < lam2[0]:
                lam2[0] = t


cdef void _cube_step(double[::1] v, Py_ssize_t* cluster, Py_ssize_t m, double* u,
                     double uniform, double* vals, object trace):
    cdef double lam1, lam2, prob_plus, step
    cdef bint plus
    cdef Py_ssize_t i, k
    for i in range(m):
        vals[i] = v[cluster[i]]
    _step_lengths(u, vals, m, &lam1, &lam2)
    prob_plus = lam2 / (lam1 + lam2)
    plus = uniform < prob_plus
    step = lam1 if plus else -lam2
    if trace is not None:
        trace.append({
            "before": np.array(v, dtype=np.float64),
            "cluster": [cluster[i] for i in range(m)],
            "direction": [u[i] for i in range(m)],
            "lam1": lam1,
            "lam2": lam2,
            "prob_plus": prob_plus,
            "plus": bool(plus),
        })
    for i in range(m):
        k = cluster[i]
        v[k] = _snap(v[k] + step * u[i])


def flight(A, v, order, uniforms, trace=None):
    cdef const double[:, ::1] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef cnp.ndarray out = np.array(v, dtype=np.float64)
    cdef double[::1] vv = out
    cdef const cnp.int64_t[::1] od = np.ascontiguousarray(order, dtype=np.int64)
    cdef const double[::1] un = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t N = Av.shape[0], p = Av.shape[1]
    cdef Py_ssize_t nfree = 0, ptr = 0, m = 0, i, j, k, t, ui = 0
    cdef Py_ssize_t* freelist = <Py_ssize_t*>malloc((N + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* cluster = <Py_ssize_t*>malloc((p + 2) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* pc = <Py_ssize_t*>malloc((p + 2) * sizeof(Py_ssize_t))
    cdef double* M = <double*>malloc((p * (p + 1) + 1) * sizeof(double))
    cdef double* u = <double*>malloc((p + 2) * sizeof(double))
    cdef double* vals = <double*>malloc((p + 2) * sizeof(double))
    try:
        for t in range(od.shape[0]):
            k = od[t]
            if _is_free(vv[k]):
                freelist[nfree] = k
                nfree += 1
        while True:
            while m < p + 1 and ptr < nfree:
                cluster[m] = freelist[ptr]
                m += 1
                ptr += 1
            if m == 0:
                break
            for j in range(p):
                for i in range(m):
                    M[j * m + i] = Av[cluster[i], j]
            if not _kernel(M, p, m, u, pc):
                break
            _cube_step(vv, cluster, m, u, un[ui], vals, trace)
            ui += 1
            t = 0
            for i in range(m):
                if _is_free(vv[cluster[i]]):
                    cluster[t] = cluster[i]
                    t += 1
            m = t
    finally:
        free(freelist)
        free(cluster)
        free(pc)
        free(M)
        free(u)
        free(vals)
    return out


cdef inline void _pivot(double a, double b, double u, double* ra, double* rb) noexcept nogil:
    cdef double s = a + b
    if s > 1.0:
        if u < (1.0 - b) / (2.0 - s):
            ra[0] = 1.0
            rb[0] = s - 1.0
        else:
            ra[0] = s - 1.0
            rb[0] = 1.0
    else:
        if u < b / s:
            ra[0] = 0.0
            rb[0] = s
        else:
            ra[0] = s
            rb[0] = 0.0


def pivot(double a, double b, double u):
    cdef double ra, rb
    _pivot(a, b, u, &ra, &rb)
    return ra, rb


def pivotal_sequential(v, uniforms):
    cdef cnp.ndarray out = np.array(v, dtype=np.float64)
    cdef double[::1] vv = out
    cdef const double[::1] un = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t N = vv.shape[0], k, i = -1, ui = 0
    cdef double a, b
    with nogil:
        for k in range(N):
            if not _is_free(vv[k]):
                continue
            if i < 0:
                i = k
                continue
            _pivot(vv[i], vv[k], un[ui], &a, &b)
            ui += 1
            vv[i] = _snap(a)
            vv[k] = _snap(b)
            if _is_free(vv[k]):
                i = k
            elif not _is_free(vv[i]):
                i = -1
        if i >= 0:
            vv[i] = 1.0 if un[ui] < vv[i] else 0.0
    return out


cdef inline double _sq(const double[:, ::1] X, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    cdef Py_ssize_t c, d = X.shape[1]
    cdef double diff = X[a, 0] - X[b, 0]
    cdef double out = diff * diff
    for c in range(1, d):
        diff = X[a, c] - X[b, c]
        out = out + diff * diff
    return out


cdef inline void _remove(Py_ssize_t* items, Py_ssize_t* pos, Py_ssize_t* m, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t t = pos[k]
    cdef Py_ssize_t last = items[m[0] - 1]
    items[t] = last
    pos[last] = t
    pos[k] = -1
    m[0] -= 1


cdef Py_ssize_t _take_tie(double* d, Py_ssize_t m, double u) noexcept nogil:
    cdef Py_ssize_t t, count = 0, target
    cdef double best = INFINITY
    for t in range(m):
        if d[t] < best:
            best = d[t]
            count = 1
        elif d[t] == best:
            count += 1
    target = _pick(u, count)
    count = 0
    for t in range(m):
        if d[t] == best:
            if count == target:
                return t
            count += 1
    return -1


def local_pivotal(v, X, uniforms):
    cdef cnp.ndarray out = np.array(v, dtype=np.float64)
    cdef double[::1] vv = out
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] un = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t N = vv.shape[0], m = 0, k, t, i, j, ui = 0
    cdef double a, b
    cdef Py_ssize_t* items = <Py_ssize_t*>malloc((N + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* pos = <Py_ssize_t*>malloc((N + 1) * sizeof(Py_ssize_t))
    cdef double* d = <double*>malloc((N + 1) * sizeof(double))
    try:
        with nogil:
            for k in range(N):
                pos[k] = -1
                if _is_free(vv[k]):
                    items[m] = k
                    pos[k] = m
                    m += 1
            while m >= 2:
                i = items[_pick(un[ui], m)]
                ui += 1
                for t in range(m):
                    d[t] = _sq(Xv, items[t], i)
                d[pos[i]] = INFINITY
                j = items[_take_tie(d, m, un[ui])]
                ui += 1
                _pivot(vv[i], vv[j], un[ui], &a, &b)
                ui += 1
                vv[i] = _snap(a)
                vv[j] = _snap(b)
                if not _is_free(vv[i]):
                    _remove(items, pos, &m, i)
                if not _is_free(vv[j]):
                    _remove(items, pos, &m, j)
            if m == 1:
                k = items[0]
                vv[k] = 1.0 if un[ui] < vv[k] else 0.0
    finally:
        free(items)
        free(pos)
        free(d)
    return out


def local_cube(A, v, X, uniforms, trace=None):
    cdef const double[:, ::1] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef cnp.ndarray out = np.array(v, dtype=np.float64)
    cdef double[::1] vv = out
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] un = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t N = vv.shape[0], p = Av.shape[1]
    cdef Py_ssize_t m = 0, k, t, i, j, r, ui = 0
    cdef Py_ssize_t* items = <Py_ssize_t*>malloc((N + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* pos = <Py_ssize_t*>malloc((N + 1) * sizeof(Py_ssize_t))
    cdef double* d = <double*>malloc((N + 1) * sizeof(double))
    cdef Py_ssize_t* cluster = <Py_ssize_t*>malloc((p + 2) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* pc = <Py_ssize_t*>malloc((p + 2) * sizeof(Py_ssize_t))
    cdef double* M = <double*>malloc((p * (p + 1) + 1) * sizeof(double))
    cdef double* u = <double*>malloc((p + 2) * sizeof(double))
    cdef double* vals = <double*>malloc((p + 2) * sizeof(double))
    try:
        for k in range(N):
            pos[k] = -1
            if _is_free(vv[k]):
                items[m] = k
                pos[k] = m
                m += 1
        while m >= p + 1:
            i = items[_pick(un[ui], m)]
            ui += 1
            for t in range(m):
                d[t] = _sq(Xv, items[t], i)
            d[pos[i]] = INFINITY
            cluster[0] = i
            for r in range(p):
                t = _take_tie(d, m, un[ui])
                ui += 1
                cluster[r + 1] = items[t]
                d[t] = INFINITY
            for j in range(p):
                for r in range(p + 1):
                    M[j * (p + 1) + r] = Av[cluster[r], j]
            _kernel(M, p, p + 1, u, pc)
            _cube_step(vv, cluster, p + 1, u, un[ui], vals, trace)
            ui += 1
            for r in range(p + 1):
                if not _is_free(vv[cluster[r]]):
                    _remove(items, pos, &m, cluster[r])
    finally:
        free(items)
        free(pos)
        free(d)
        free(cluster)
        free(pc)
        free(M)
        free(u)
        free(vals)
    return out


def nearest_assign(X, centers):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const cnp.int64_t[::1] cv = np.ascontiguousarray(centers, dtype=np.int64)
    cdef Py_ssize_t N = Xv.shape[0], n = cv.shape[0], k, i, best_i
    cdef double best, dd
    cdef cnp.ndarray out = np.empty(N, dtype=np.int64)
    cdef cnp.int64_t[::1] ov = out
    with nogil:
        for k in range(N):
            best = INFINITY
            best_i = 0
            for i in range(n):
                dd = _sq(Xv, k, cv[i])
                if dd < best:
                    best = dd
                    best_i = i
            ov[k] = best_i
    return out


def cps_draw(lam, logB, Py_ssize_t n, uniforms):
    cdef const double[::1] lv = np.ascontiguousarray(lam, dtype=np.float64)
    cdef const double[:, ::1] Bv = np.ascontiguousarray(logB, dtype=np.float64)
    cdef const double[::1] un = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t N = lv.shape[0], k, t, r = n
    cdef double prob
    cdef cnp.ndarray out = np.zeros(N, dtype=np.uint8)
    cdef cnp.uint8_t[::1] ov = out
    with nogil:
        for k in range(N):
            if r == 0:
                break
            if N - k == r:
                for t in range(k, N):
                    ov[t] = 1
                break
            prob = exp(lv[k] + Bv[k + 1, r - 1] - Bv[k, r])
            if un[k] < prob:
                ov[k] = 1
                r -= 1
    return out
