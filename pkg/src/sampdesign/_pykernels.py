"""Pure-Python sampling kernels.

Reference implementation of the hot loops. ``_ckernels.pyx`` mirrors every
function here operation for operation, so both backends consume the uniform
buffer identically and return bit-identical results for identical inputs.

All randomness enters through ``uniforms``, a float64 buffer of U(0, 1)
draws supplied by the caller. Each function documents how many it may use.
"""

import math

import numpy as np

EPS = 1e-12
KERNEL_TOL = 1e-12


def _is_free(x):
    return EPS < x < 1.0 - EPS


def _snap(x):
    if x < EPS:
        return 0.0
    if x > 1.0 - EPS:
        return 1.0
    return x


def _pick(u, m):
    i = int(u * m)
    return m - 1 if i >= m else i


def kernel_vector(B, p, m):
    """Nonzero vector of the null space of the p x m matrix ``B``.

    Gauss-Jordan elimination with partial pivoting; the returned vector is the
    basis vector of the last non-pivot column. ``None`` when B has full
    column rank.
    """
    M = [list(row) for row in B]
    scale = 0.0
    for i in range(p):
        for j in range(m):
            a = abs(M[i][j])
            if a > scale:
                scale = a
    u = [0.0] * m
    if scale == 0.0:
        u[m - 1] = 1.0
        return u
    tol = KERNEL_TOL * scale
    pivcols = []
    r = 0
    for c in range(m):
        if r == p:
            break
        best = r
        bv = abs(M[r][c])
        for i in range(r + 1, p):
            a = abs(M[i][c])
            if a > bv:
                best = i
                bv = a
        if bv <= tol:
            continue
        if best != r:
            M[r], M[best] = M[best], M[r]
        piv = M[r][c]
        for j in range(c, m):
            M[r][j] = M[r][j] / piv
        for i in range(p):
            if i != r:
                f = M[i][c]
                if f != 0.0:
                    for j in range(c, m):
                        M[i][j] = M[i][j] - f * M[r][j]
        pivcols.append(c)
        r += 1
    if r == m:
        return None
    f = m - 1
    while f in pivcols:
        f -= 1
    u[f] = 1.0
    for i in range(r):
        u[pivcols[i]] = -M[i][f]
    return u


def _step_lengths(u, vals):
    lam1 = math.inf
    lam2 = math.inf
    for i in range(len(u)):
        ui = u[i]
        vk = vals[i]
        if ui > 0.0:
            t = (1.0 - vk) / ui
            if t < lam1:
                lam1 = t
            t = vk / ui
            if t < lam2:
                lam2 = t
        elif ui < 0.0:
            t = -vk / ui
            if t < lam1:
                lam1 = t
            t = (vk - 1.0) / ui
            if t < lam2:
                lam2 = t
    return lam1, lam2


def _cube_step(v, cluster, u, uniform, trace):
    """Apply one two-point lottery along ``u`` restricted to ``cluster``."""
    vals = [v[k] for k in cluster]
    lam1, lam2 = _step_lengths(u, vals)
    prob_plus = lam2 / (lam1 + lam2)
    plus = uniform < prob_plus
    step = lam1 if plus else -lam2
    if trace is not None:
        trace.append({
            "before": np.array(v, dtype=np.float64),
            "cluster": list(cluster),
            "direction": list(u),
            "lam1": lam1,
            "lam2": lam2,
            "prob_plus": prob_plus,
            "plus": plus,
        })
    for i in range(len(cluster)):
        k = cluster[i]
        v[k] = _snap(v[k] + step * u[i])


def flight(A, v, order, uniforms, trace=None):
    """Cube-method flight phase on the free units of ``v``.

    Works on clusters of p + 1 free units taken in ``order``; any null vector
    of the cluster's constraint columns is a null vector of the whole free
    submatrix, so balance is kept exactly. Stops when the remaining free
    units have full column rank. Uses at most one uniform per step and at
    most ``len(v)`` steps.
    """
    A = np.asarray(A, dtype=np.float64)
    v = np.array(v, dtype=np.float64)
    N, p = A.shape
    free = [int(k) for k in order if _is_free(v[k])]
    nfree = len(free)
    ptr = 0
    cluster = []
    ui = 0
    while True:
        while len(cluster) < p + 1 and ptr < nfree:
            cluster.append(free[ptr])
            ptr += 1
        m = len(cluster)
        if m == 0:
            break
        B = [[A[k, j] for k in cluster] for j in range(p)]
        u = kernel_vector(B, p, m)
        if u is None:
            break
        _cube_step(v, cluster, u, uniforms[ui], trace)
        ui += 1
        cluster = [k for k in cluster if _is_free(v[k])]
    return v


def pivot(a, b, u):
    """Pivotal two-point lottery on a pair of fractional inclusion values."""
    s = a + b
    if s > 1.0:
        if u < (1.0 - b) / (2.0 - s):
            return 1.0, s - 1.0
        return s - 1.0, 1.0
    if u < b / s:
        return 0.0, s
    return s, 0.0


def pivotal_sequential(v, uniforms):
    """Sequential (ordered) pivotal method. Uses at most ``len(v)`` uniforms."""
    v = np.array(v, dtype=np.float64)
    N = v.shape[0]
    ui = 0
    i = -1
    for k in range(N):
        if not _is_free(v[k]):
            continue
        if i < 0:
            i = k
            continue
        a, b = pivot(v[i], v[k], uniforms[ui])
        ui += 1
        v[i] = _snap(a)
        v[k] = _snap(b)
        if _is_free(v[k]):
            i = k
        elif not _is_free(v[i]):
            i = -1
    if i >= 0:
        v[i] = 1.0 if uniforms[ui] < v[i] else 0.0
    return v


def _sqdist(X, idx, i):
    d = X.shape[1]
    xi = X[i]
    diff = X[idx, 0] - xi[0]
    out = diff * diff
    for c in range(1, d):
        diff = X[idx, c] - xi[c]
        out = out + diff * diff
    return out


class _ActiveSet:
    __slots__ = ("items", "pos", "m")

    def __init__(self, v):
        N = v.shape[0]
        self.items = np.empty(N, dtype=np.int64)
        self.pos = np.full(N, -1, dtype=np.int64)
        m = 0
        for k in range(N):
            if _is_free(v[k]):
                self.items[m] = k
                self.pos[k] = m
                m += 1
        self.m = m

    def remove(self, k):
        t = self.pos[k]
        last = self.items[self.m - 1]
        self.items[t] = last
        self.pos[last] = t
        self.pos[k] = -1
        self.m -= 1


def _take_tie(d, u):
    best = d.min()
    ties = np.flatnonzero(d == best)
    return int(ties[_pick(u, ties.shape[0])])


def local_pivotal(v, X, uniforms):
    """Local pivotal method: a random free unit competes with its nearest
    free neighbour (ties broken uniformly). Uses at most ``3 * len(v) + 1``
    uniforms."""
    v = np.array(v, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    act = _ActiveSet(v)
    ui = 0
    while act.m >= 2:
        m = act.m
        i = int(act.items[_pick(uniforms[ui], m)])
        ui += 1
        idx = act.items[:m]
        d = _sqdist(X, idx, i)
        d[act.pos[i]] = math.inf
        j = int(idx[_take_tie(d, uniforms[ui])])
        ui += 1
        a, b = pivot(v[i], v[j], uniforms[ui])
        ui += 1
        v[i] = _snap(a)
        v[j] = _snap(b)
        if not _is_free(v[i]):
            act.remove(i)
        if not _is_free(v[j]):
            act.remove(j)
    if act.m == 1:
        k = int(act.items[0])
        v[k] = 1.0 if uniforms[ui] < v[k] else 0.0
    return v


def local_cube(A, v, X, uniforms, trace=None):
    """Local cube flight: repeatedly runs one flight step on a random free
    unit and its p nearest free neighbours until fewer than p + 1 free units
    remain. Uses at most ``(p + 2) * len(v)`` uniforms."""
    A = np.asarray(A, dtype=np.float64)
    v = np.array(v, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    p = A.shape[1]
    act = _ActiveSet(v)
    ui = 0
    while act.m >= p + 1:
        m = act.m
        i = int(act.items[_pick(uniforms[ui], m)])
        ui += 1
        idx = act.items[:m]
        d = _sqdist(X, idx, i)
        d[act.pos[i]] = math.inf
        cluster = [i]
        for _ in range(p):
            t = _take_tie(d, uniforms[ui])
            ui += 1
            cluster.append(int(idx[t]))
            d[t] = math.inf
        B = [[A[k, j] for k in cluster] for j in range(p)]
        u = kernel_vector(B, p, p + 1)
        _cube_step(v, cluster, u, uniforms[ui], trace)
        ui += 1
        for k in cluster:
            if not _is_free(v[k]):
                act.remove(k)
    return v


def nearest_assign(X, centers):
    """Index (into ``centers``) of the nearest centre for every row of X.

    ``centers`` must be sorted ascending; equidistant ties go to the first
    (smallest) centre.
    """
    X = np.asarray(X, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.int64)
    N, d = X.shape
    C = X[centers]
    out = np.empty(N, dtype=np.int64)
    chunk = 4096
    for lo in range(0, N, chunk):
        P = X[lo:lo + chunk]
        diff = P[:, None, 0] - C[None, :, 0]
        D = diff * diff
        for c in range(1, d):
            diff = P[:, None, c] - C[None, :, c]
            D = D + diff * diff
        out[lo:lo + chunk] = np.argmin(D, axis=1)
    return out


def cps_draw(lam, logB, n, uniforms):
    """Sequential list draw of a conditional Poisson sample.

    ``logB[k, r]`` is the log elementary symmetric function of order r of the
    weights exp(lam[k:]). Uses at most ``len(lam)`` uniforms.
    """
    N = lam.shape[0]
    out = np.zeros(N, dtype=np.uint8)
    r = n
    for k in range(N):
        if r == 0:
            break
        if N - k == r:
            out[k:] = 1
            break
        prob = math.exp(lam[k] + logB[k + 1, r - 1] - logB[k, r])
        if uniforms[k] < prob:
            out[k] = 1
            r -= 1
    return out
