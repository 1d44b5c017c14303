"""Pure-numpy implementations of the hot kernels.

Same call signatures as the compiled extension (``_kernels_c``); the
``backend`` module picks whichever is available at import time.  Everything
here is float64 and allocation-honest rather than clever — these are the
fallback paths.
"""

import numpy as np

NAME = "numpy"


def conv_same(u, k, pi_r, pi_c):
    """Centered "same" convolution s[i,j] = sum_ab k[a,b] * u_ext[i+c-a, j+c-b].

    ``pi_r``/``pi_c`` are per-axis index maps of length H+K-1 / W+K-1 that
    realize the boundary extension (wrap or clamp), with c = K//2.
    """
    H, W = u.shape
    K = k.shape[0]
    ue = u[pi_r][:, pi_c]
    kf = k[::-1, ::-1]
    out = np.zeros((H, W))
    for a in range(K):
        for b in range(K):
            out += kf[a, b] * ue[a : a + H, b : b + W]
    return out


def conv_same_grad_u(g, k, pi_r, pi_c, H, W):
    """Adjoint of conv_same in its image argument: accumulate g back onto u."""
    K = k.shape[0]
    kf = k[::-1, ::-1]
    He, We = H + K - 1, W + K - 1
    ueg = np.zeros((He, We))
    for a in range(K):
        for b in range(K):
            ueg[a : a + H, b : b + W] += kf[a, b] * g
    # fold the extended grid back through the index maps
    tmp = np.zeros((H, We))
    np.add.at(tmp, pi_r, ueg)
    out_t = np.zeros((W, H))
    np.add.at(out_t, pi_c, tmp.T)
    return np.ascontiguousarray(out_t.T)


def conv_same_grad_k(g, u, K, pi_r, pi_c):
    """Gradient of sum(g * conv_same(u, k)) with respect to the kernel."""
    H, W = g.shape
    ue = u[pi_r][:, pi_c]
    gk = np.empty((K, K))
    for a in range(K):
        for b in range(K):
            gk[a, b] = np.sum(g * ue[a : a + H, b : b + W])
    return gk[::-1, ::-1].copy()


def im2col3(x):
    """Unfold (C,H,W) with 3x3 windows and zero padding 1 into (C*9, H*W)."""
    C, H, W = x.shape
    xp = np.zeros((C, H + 2, W + 2))
    xp[:, 1:-1, 1:-1] = x
    cols = np.empty((C, 9, H, W))
    i = 0
    for a in range(3):
        for b in range(3):
            cols[:, i] = xp[:, a : a + H, b : b + W]
            i += 1
    return cols.reshape(C * 9, H * W)


def col2im3(cols, C, H, W):
    """Adjoint of im2col3: fold (C*9, H*W) back to (C,H,W)."""
    cols = cols.reshape(C, 9, H, W)
    xp = np.zeros((C, H + 2, W + 2))
    i = 0
    for a in range(3):
        for b in range(3):
            xp[:, a : a + H, b : b + W] += cols[:, i]
            i += 1
    return np.ascontiguousarray(xp[:, 1:-1, 1:-1])
