"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Inputs are float64 C-contiguous arrays prepared by the public wrappers;
outputs are float64.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ABSORB_HIGH = 1e30
ABSORB_LOW = 1e-30
TINY = 1e-300


def self_correlation(F, r, d):
    """Raw patch correlations, channels ordered row-major over (dy, dx)."""
    C, H, W = F.shape
    pad = np.zeros((C, H + 2 * d, W + 2 * d))
    pad[:, d : d + H, d : d + W] = F
    side = 2 * d + 1
    out = np.empty((side * side, H, W))
    G = np.zeros((H + 2 * r, W + 2 * r))
    for idx in range(side * side):
        dy, dx = idx // side - d, idx % side - d
        shifted = pad[:, d + dy : d + dy + H, d + dx : d + dx + W]
        G[r : r + H, r : r + W] = np.einsum("chw,chw->hw", F, shifted)
        acc = np.zeros((H, W))
        for py in range(2 * r + 1):
            for px in range(2 * r + 1):
                acc += G[py : py + H, px : px + W]
        out[idx] = acc
    return out


def loc_conv(xn, f, b, k, bias_scale):
    C, H, W = xn.shape
    h = k // 2
    pad = np.zeros((C, H + 2 * h, W + 2 * h))
    pad[:, h : h + H, h : h + W] = xn
    win = sliding_window_view(pad, (k, k), axis=(1, 2)).reshape(C, H, W, k * k)
    out = np.einsum("chwt,hwct->chw", win, f)
    return out + bias_scale * np.moveaxis(b, -1, 0)


def bilinear_warp(F, flow):
    C, H, W = F.shape
    ys, xs = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    sy = ys + flow[0]
    sx = xs + flow[1]
    y0 = np.floor(sy)
    x0 = np.floor(sx)
    wy = sy - y0
    wx = sx - x0
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    out = np.zeros((C, H, W))
    for oy, ox, w in (
        (0, 0, (1 - wy) * (1 - wx)),
        (0, 1, (1 - wy) * wx),
        (1, 0, wy * (1 - wx)),
        (1, 1, wy * wx),
    ):
        yy = y0 + oy
        xx = x0 + ox
        ok = (yy >= 0) & (yy < H) & (xx >= 0) & (xx < W)
        vals = F[:, np.clip(yy, 0, H - 1), np.clip(xx, 0, W - 1)]
        out += np.where(ok, w, 0.0) * vals
    return out


def sinkhorn(cost, a, b, eps, exponent, max_iters, tol):
    """Stabilized scaling iterations; see ``glocal.transport.sinkhorn``.

    ``exponent`` is 1 for balanced transport and ``tau / (tau + eps)`` for the
    relaxed problem.  Returns ``(plan, f, g, iterations, converged)`` where
    ``f`` and ``g`` are the dual potentials of the returned plan.
    """
    n, m = cost.shape
    fpot = np.zeros(n)
    gpot = np.zeros(m)
    K = np.exp(-cost / eps)
    u = np.ones(n)
    v = np.ones(m)
    balanced = exponent == 1.0
    converged = False
    it = 0
    while it < max_iters:
        Kv = np.maximum(K @ v, TINY)
        if balanced and it > 0 and np.max(np.abs(u * Kv - a)) < tol:
            converged = True
            break
        u_new = a / Kv
        if not balanced:
            u_new = u_new**exponent
        KTu = np.maximum(K.T @ u_new, TINY)
        v_new = b / KTu
        if not balanced:
            v_new = v_new**exponent
        it += 1
        if not balanced:
            change = max(
                np.max(np.abs(np.log(u_new) - np.log(u))),
                np.max(np.abs(np.log(v_new) - np.log(v))),
            )
        u, v = u_new, v_new
        if (
            u.max() > ABSORB_HIGH
            or u.min() < ABSORB_LOW
            or v.max() > ABSORB_HIGH
            or v.min() < ABSORB_LOW
        ):
            fpot += eps * np.log(u)
            gpot += eps * np.log(v)
            K = np.exp((fpot[:, None] + gpot[None, :] - cost) / eps)
            u = np.ones(n)
            v = np.ones(m)
        if not balanced and change < tol:
            converged = True
            break
    plan = u[:, None] * K * v[None, :]
    return plan, fpot + eps * np.log(u), gpot + eps * np.log(v), it, converged
