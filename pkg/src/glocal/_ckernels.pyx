# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``.

Signatures and semantics match the numpy versions; accumulation order is
fixed, so results are reproducible run to run.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, floor

cnp.import_array()

cdef double ABSORB_HIGH = 1e30
cdef double ABSORB_LOW = 1e-30
cdef double TINY = 1e-300


def self_correlation(const double[:, :, ::1] F, int r, int d):
    cdef Py_ssize_t C = F.shape[0], H = F.shape[1], W = F.shape[2]
    cdef int side = 2 * d + 1
    out_arr = np.zeros((side * side, H, W))
    cdef double[:, :, ::1] out = out_arr
    G_arr = np.zeros((H + 2 * r, W + 2 * r))
    cdef double[:, ::1] G = G_arr
    cdef Py_ssize_t idx, y, x, c, py, px
    cdef int dy, dx, yy, xx
    cdef double acc
    for idx in range(side * side):
        dy = <int>(idx // side) - d
        dx = <int>(idx % side) - d
        for y in range(H):
            yy = <int>y + dy
            for x in range(W):
                xx = <int>x + dx
                acc = 0.0
                if 0 <= yy < H and 0 <= xx < W:
                    for c in range(C):
                        acc += F[c, y, x] * F[c, yy, xx]
                G[y + r, x + r] = acc
        for y in range(H):
            for x in range(W):
                acc = 0.0
                for py in range(2 * r + 1):
                    for px in range(2 * r + 1):
                        acc += G[y + py, x + px]
                out[idx, y, x] = acc
    return out_arr


def loc_conv(const double[:, :, ::1] xn, const double[:, :, :, ::1] f,
             const double[:, :, ::1] b, int k, double bias_scale):
    cdef Py_ssize_t C = xn.shape[0], H = xn.shape[1], W = xn.shape[2]
    cdef int h = k // 2
    out_arr = np.empty((C, H, W))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t c, y, x, t
    cdef int yy, xx
    cdef double acc
    for c in range(C):
        for y in range(H):
            for x in range(W):
                acc = 0.0
                for t in range(k * k):
                    yy = <int>y + <int>(t // k) - h
                    xx = <int>x + <int>(t % k) - h
                    if 0 <= yy < H and 0 <= xx < W:
                        acc += f[y, x, c, t] * xn[c, yy, xx]
                out[c, y, x] = acc + bias_scale * b[y, x, c]
    return out_arr


def bilinear_warp(const double[:, :, ::1] F, const double[:, :, ::1] flow):
    cdef Py_ssize_t C = F.shape[0], H = F.shape[1], W = F.shape[2]
    out_arr = np.zeros((C, H, W))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t c, y, x
    cdef double sy, sx, wy, wx, w
    cdef int y0, x0, oy, ox, yy, xx
    for y in range(H):
        for x in range(W):
            sy = y + flow[0, y, x]
            sx = x + flow[1, y, x]
            y0 = <int>floor(sy)
            x0 = <int>floor(sx)
            wy = sy - y0
            wx = sx - x0
            for oy in range(2):
                for ox in range(2):
                    yy = y0 + oy
                    xx = x0 + ox
                    if yy < 0 or yy >= H or xx < 0 or xx >= W:
                        continue
                    w = (wy if oy else 1.0 - wy) * (wx if ox else 1.0 - wx)
                    for c in range(C):
                        out[c, y, x] += w * F[c, yy, xx]
    return out_arr


cdef inline void _matvec(double[:, ::1] K, double[::1] x, double[::1] out) nogil:
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(K.shape[0]):
        acc = 0.0
        for j in range(K.shape[1]):
            acc += K[i, j] * x[j]
        out[i] = acc if acc > TINY else TINY


cdef inline void _rmatvec(double[:, ::1] K, double[::1] x, double[::1] out) nogil:
    cdef Py_ssize_t i, j
    for j in range(K.shape[1]):
        out[j] = 0.0
    for i in range(K.shape[0]):
        for j in range(K.shape[1]):
            out[j] += K[i, j] * x[i]
    for j in range(K.shape[1]):
        if out[j] < TINY:
            out[j] = TINY


def sinkhorn(const double[:, ::1] cost, const double[::1] a, const double[::1] b,
             double eps, double exponent, int max_iters, double tol):
    cdef Py_ssize_t n = cost.shape[0], m = cost.shape[1], i, j
    K_arr = np.exp(-np.asarray(cost) / eps)
    cdef double[:, ::1] K = K_arr
    cdef double[::1] fpot = np.zeros(n), gpot = np.zeros(m)
    cdef double[::1] u = np.ones(n), v = np.ones(m)
    cdef double[::1] Kv = np.empty(n), KTu = np.empty(m)
    cdef bint balanced = exponent == 1.0
    cdef bint converged = False, absorb
    cdef int it = 0
    cdef double viol, change, nu, nv
    while it < max_iters:
        _matvec(K, v, Kv)
        if balanced and it > 0:
            viol = 0.0
            for i in range(n):
                viol = max(viol, fabs(u[i] * Kv[i] - a[i]))
            if viol < tol:
                converged = True
                break
        change = 0.0
        for i in range(n):
            nu = a[i] / Kv[i]
            if not balanced:
                nu = nu ** exponent
                change = max(change, fabs(log(nu) - log(u[i])))
            u[i] = nu
        _rmatvec(K, u, KTu)
        for j in range(m):
            nv = b[j] / KTu[j]
            if not balanced:
                nv = nv ** exponent
                change = max(change, fabs(log(nv) - log(v[j])))
            v[j] = nv
        it += 1
        absorb = False
        for i in range(n):
            if u[i] > ABSORB_HIGH or u[i] < ABSORB_LOW:
                absorb = True
        for j in range(m):
            if v[j] > ABSORB_HIGH or v[j] < ABSORB_LOW:
                absorb = True
        if absorb:
            for i in range(n):
                fpot[i] += eps * log(u[i])
                u[i] = 1.0
            for j in range(m):
                gpot[j] += eps * log(v[j])
                v[j] = 1.0
            for i in range(n):
                for j in range(m):
                    K[i, j] = exp((fpot[i] + gpot[j] - cost[i, j]) / eps)
        if not balanced and change < tol:
            converged = True
            break
    plan = np.asarray(u)[:, None] * K_arr * np.asarray(v)[None, :]
    f = np.asarray(fpot) + eps * np.log(np.asarray(u))
    g = np.asarray(gpot) + eps * np.log(np.asarray(v))
    return plan, f, g, it, bool(converged)
