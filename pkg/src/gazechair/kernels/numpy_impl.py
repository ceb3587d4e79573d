"""Vectorized numpy reference implementations of the hot kernels.

Selected by setting ``GAZECHAIR_KERNELS=numpy``; otherwise the numba
implementations in :mod:`gazechair.kernels.numba_impl` are preferred.
Both backends compute identical quantities (tie-breaking included) so the
test suite cross-checks them against each other.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x, w, b):
    """Valid 2-D convolution (cross-correlation), stride 1.

    x: (N, H, W, C), w: (KH, KW, C, F), b: (F,) -> (N, OH, OW, F)

    Decomposed into one GEMM per kernel tap so the working set stays at
    O(N*OH*OW*C) instead of a full im2col buffer.
    """
    n, h, wd, c = x.shape
    kh, kw, _, f = w.shape
    oh, ow = h - kh + 1, wd - kw + 1
    z = np.zeros((n, oh, ow, f), dtype=x.dtype)
    z2 = z.reshape(n * oh * ow, f)
    for dkh in range(kh):
        for dkw in range(kw):
            xs = np.ascontiguousarray(x[:, dkh:dkh + oh, dkw:dkw + ow, :])
            z2 += xs.reshape(n * oh * ow, c) @ w[dkh, dkw]
    z += b
    return z


def conv2d_backward(x, w, dz, need_dx=True):
    """Gradients of conv2d_forward: returns (dx, dw, db).

    need_dx=False skips the input gradient (first layer of a net).
    """
    n, h, wd, c = x.shape
    kh, kw, _, f = w.shape
    oh, ow = h - kh + 1, wd - kw + 1
    dz2 = dz.reshape(n * oh * ow, f)
    db = dz2.sum(axis=0)
    dw = np.empty_like(w)
    dx = np.zeros_like(x)
    for dkh in range(kh):
        for dkw in range(kw):
            xs = np.ascontiguousarray(x[:, dkh:dkh + oh, dkw:dkw + ow, :])
            dw[dkh, dkw] = xs.reshape(n * oh * ow, c).T @ dz2
            if need_dx:
                dx[:, dkh:dkh + oh, dkw:dkw + ow, :] += (dz2 @ w[dkh, dkw].T).reshape(n, oh, ow, c)
    return dx, dw, db


def maxpool_forward(x, factor):
    """Non-overlapping max pooling with floor division of spatial dims.

    Returns (y, idx) where idx is the row-major position of the (first)
    maximal element inside each factor*factor window, kept for routing the
    gradient back.
    """
    n, h, w, c = x.shape
    oh, ow = h // factor, w // factor
    t = x[:, :oh * factor, :ow * factor, :].reshape(n, oh, factor, ow, factor, c)
    t = np.ascontiguousarray(t.transpose(0, 1, 3, 2, 4, 5)).reshape(n, oh, ow, factor * factor, c)
    idx = t.argmax(axis=3).astype(np.int64)
    y = np.take_along_axis(t, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return y, idx


def maxpool_backward(dy, idx, x_shape, factor):
    """Route dy back to the argmax positions recorded by maxpool_forward."""
    n, h, w, c = x_shape
    oh, ow = h // factor, w // factor
    dt = np.zeros((n, oh, ow, factor * factor, c), dtype=dy.dtype)
    np.put_along_axis(dt, idx[:, :, :, None, :], dy[:, :, :, None, :], axis=3)
    dx = np.zeros(x_shape, dtype=dy.dtype)
    dx[:, :oh * factor, :ow * factor, :] = (
        dt.reshape(n, oh, ow, factor, factor, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(n, oh * factor, ow * factor, c)
    )
    return dx


# Neighbor offsets read clockwise from the top-left pixel; the first one
# lands in the most significant bit of the 8-bit code.
_LBP_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


def lbp_codes(img):
    """8-neighbor binary-pattern codes; output shrinks by 2 in each axis.

    img: (H, W) integer array, H, W >= 3 -> (H-2, W-2) uint8.
    """
    a = np.asarray(img, dtype=np.int32)
    h, w = a.shape
    center = a[1:-1, 1:-1]
    code = np.zeros(center.shape, dtype=np.int32)
    for dy, dx in _LBP_OFFSETS:
        nb = a[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
        code = (code << 1) | (nb >= center)
    return code.astype(np.uint8)


def zncc_sliding(frame, patch):
    """Zero-mean normalized cross-correlation of patch over every placement.

    frame: (H, W) float64, patch: (ph, pw) float64 with ph<=H, pw<=W.
    Returns (H-ph+1, W-pw+1) scores in [-1, 1]; windows (or patches) with
    zero variance score 0.
    """
    f = np.asarray(frame, dtype=np.float64)
    p = np.asarray(patch, dtype=np.float64)
    ph, pw = p.shape
    n = ph * pw
    pz = p - p.mean()
    pnorm = np.sqrt((pz * pz).sum())
    win = sliding_window_view(f, (ph, pw))
    cross = np.tensordot(win, pz, axes=([2, 3], [0, 1]))
    s1 = win.sum(axis=(2, 3))
    s2 = np.einsum("ijkl,ijkl->ij", win, win, optimize=True)
    var = np.maximum(s2 - s1 * s1 / n, 0.0)
    denom = np.sqrt(var) * pnorm
    out = np.zeros_like(cross)
    np.divide(cross, denom, out=out, where=denom > 0)
    return np.clip(out, -1.0, 1.0)
