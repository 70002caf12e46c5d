"""Vectorized numpy kernels for convolution and pooling.

This is the fallback backend: convolution is im2col plus a stacked
matmul (BLAS), pooling is a strided window view plus a reduction.
Signatures mirror ``kernels_numba`` exactly so the two modules are
interchangeable behind :mod:`ghostdet.backend`.
"""

import numpy as np


def _pad2d(x, ph, pw, value=0.0):
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)),
                  constant_values=value)


def _window_view(xp, kh, kw, sh, sw, ho, wo):
    # (N, C, kh, kw, Ho, Wo) read-only view onto the padded input
    n, c = xp.shape[:2]
    sn, sc, sy, sx = xp.strides
    shape = (n, c, kh, kw, ho, wo)
    strides = (sn, sc, sy, sx, sy * sh, sx * sw)
    return np.lib.stride_tricks.as_strided(xp, shape, strides,
                                           writeable=False)


def conv2d_forward(x, w, sh, sw, ph, pw, groups):
    n, cin, h, wd = x.shape
    cout, cin_g, kh, kw = w.shape
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    xp = _pad2d(x, ph, pw)
    cols = _window_view(xp, kh, kw, sh, sw, ho, wo)
    cols = cols.reshape(n, groups, cin_g, kh, kw, ho, wo)
    colmat = np.ascontiguousarray(cols).reshape(
        n, groups, cin_g * kh * kw, ho * wo)
    wmat = w.reshape(groups, cout // groups, cin_g * kh * kw)
    out = np.matmul(wmat[None], colmat)          # (n, g, cout/g, Ho*Wo)
    return np.ascontiguousarray(out).reshape(n, cout, ho, wo)


def conv2d_backward_input(dy, w, h, wd, sh, sw, ph, pw, groups):
    n, cout, ho, wo = dy.shape
    _, cin_g, kh, kw = w.shape
    cin = cin_g * groups
    wmat = w.reshape(groups, cout // groups, cin_g * kh * kw)
    dyg = dy.reshape(n, groups, cout // groups, ho * wo)
    dcols = np.matmul(wmat.transpose(0, 2, 1)[None], dyg)
    dcols = dcols.reshape(n, cin, kh, kw, ho, wo)
    dxp = np.zeros((n, cin, h + 2 * ph, wd + 2 * pw), dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += dcols[:, :, i, j]
    return dxp[:, :, ph:ph + h, pw:pw + wd]


def conv2d_backward_weight(dy, x, kh, kw, sh, sw, ph, pw, groups):
    n, cin, h, wd = x.shape
    cout, ho, wo = dy.shape[1:]
    cin_g = cin // groups
    xp = _pad2d(x, ph, pw)
    cols = _window_view(xp, kh, kw, sh, sw, ho, wo)
    cols = cols.reshape(n, groups, cin_g, kh, kw, ho, wo)
    colmat = np.ascontiguousarray(cols).reshape(
        n, groups, cin_g * kh * kw, ho * wo)
    dyg = dy.reshape(n, groups, cout // groups, ho * wo)
    dw = np.matmul(dyg, colmat.transpose(0, 1, 3, 2)).sum(axis=0)
    return dw.reshape(cout, cin_g, kh, kw)


def maxpool2d_forward(x, kh, kw, sh, sw, ph, pw):
    n, c, h, wd = x.shape
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    xp = _pad2d(x, ph, pw, value=-np.inf)
    win = _window_view(xp, kh, kw, sh, sw, ho, wo)
    flat = np.ascontiguousarray(win).reshape(n, c, kh * kw, ho, wo)
    arg = flat.argmax(axis=2)
    out = np.take_along_axis(flat, arg[:, :, None], axis=2)[:, :, 0]
    # window-local argmax -> flat index into the unpadded input
    wy = arg // kw
    wx = arg % kw
    oy = np.arange(ho)[:, None]
    ox = np.arange(wo)[None, :]
    gy = oy * sh + wy - ph
    gx = ox * sw + wx - pw
    idx = (gy * wd + gx).astype(np.int64)
    return out, idx


def maxpool2d_backward(dy, idx, h, wd):
    n, c = dy.shape[:2]
    dx = np.zeros((n * c, h * wd), dtype=dy.dtype)
    rows = np.arange(n * c)[:, None]
    np.add.at(dx, (rows, idx.reshape(n * c, -1)), dy.reshape(n * c, -1))
    return dx.reshape(n, c, h, wd)


def _pool_counts(h, wd, kh, kw, sh, sw, ph, pw, ho, wo, dtype):
    # number of non-padding cells in each window (true-mean denominator)
    cy = np.zeros(ho, dtype=dtype)
    for oy in range(ho):
        lo = oy * sh - ph
        cy[oy] = min(lo + kh, h) - max(lo, 0)
    cx = np.zeros(wo, dtype=dtype)
    for ox in range(wo):
        lo = ox * sw - pw
        cx[ox] = min(lo + kw, wd) - max(lo, 0)
    return np.outer(cy, cx)


def avgpool2d_forward(x, kh, kw, sh, sw, ph, pw):
    n, c, h, wd = x.shape
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    xp = _pad2d(x, ph, pw)
    win = _window_view(xp, kh, kw, sh, sw, ho, wo)
    sums = win.sum(axis=(2, 3))
    counts = _pool_counts(h, wd, kh, kw, sh, sw, ph, pw, ho, wo, x.dtype)
    return sums / counts, counts


def avgpool2d_backward(dy, counts, h, wd, kh, kw, sh, sw, ph, pw):
    n, c, ho, wo = dy.shape
    share = dy / counts
    dxp = np.zeros((n, c, h + 2 * ph, wd + 2 * pw), dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += share
    return dxp[:, :, ph:ph + h, pw:pw + wd]
