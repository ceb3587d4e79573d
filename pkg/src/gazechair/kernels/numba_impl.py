"""Numba-compiled implementations of the hot kernels.

These carry the per-frame classification latency and the training loop.
The convolution kernels gather each kernel tap into a contiguous buffer and
hand the contraction to np.dot (BLAS inside numba); the per-pixel kernels
(pooling, binary patterns, sliding correlation) are plain jitted loops.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _gather_tap(x, dkh, dkw, oh, ow, out):
    # out[(i*oh + a)*ow + b, :] = x[i, a + dkh, b + dkw, :], copied as one
    # contiguous run of ow*c elements per (i, a) row.
    n = x.shape[0]
    c = x.shape[3]
    xf = x.reshape(-1)
    of = out.reshape(-1)
    row = x.shape[2] * c
    img = x.shape[1] * row
    run = ow * c
    for i in range(n):
        for a in range(oh):
            src = i * img + (a + dkh) * row + dkw * c
            dst = (i * oh + a) * run
            for t in range(run):
                of[dst + t] = xf[src + t]


@njit(cache=True)
def conv2d_forward(x, w, b):
    n, h, wd, c = x.shape
    kh, kw, _, f = w.shape
    oh = h - kh + 1
    ow = wd - kw + 1
    m = n * oh * ow
    z2 = np.zeros((m, f), dtype=x.dtype)
    xs = np.empty((m, c), dtype=x.dtype)
    for dkh in range(kh):
        for dkw in range(kw):
            _gather_tap(x, dkh, dkw, oh, ow, xs)
            z2 += np.dot(xs, np.ascontiguousarray(w[dkh, dkw]))
    z = z2.reshape(n, oh, ow, f)
    for i in range(n):
        for a in range(oh):
            for bcol in range(ow):
                for ff in range(f):
                    z[i, a, bcol, ff] += b[ff]
    return z


@njit(cache=True)
def conv2d_backward(x, w, dz, need_dx=True):
    n, h, wd, c = x.shape
    kh, kw, _, f = w.shape
    oh = h - kh + 1
    ow = wd - kw + 1
    m = n * oh * ow
    dz2 = np.ascontiguousarray(dz).reshape(m, f)
    db = np.zeros(f, dtype=x.dtype)
    for r in range(m):
        for ff in range(f):
            db[ff] += dz2[r, ff]
    dzt = np.ascontiguousarray(dz2.T)
    dw = np.empty_like(w)
    dx = np.zeros_like(x)
    xs = np.empty((m, c), dtype=x.dtype)
    dxf = dx.reshape(-1)
    row = wd * c
    img = h * row
    run = ow * c
    for dkh in range(kh):
        for dkw in range(kw):
            _gather_tap(x, dkh, dkw, oh, ow, xs)
            dwkk = np.dot(dzt, xs)  # (F, C)
            for ch in range(c):
                for ff in range(f):
                    dw[dkh, dkw, ch, ff] = dwkk[ff, ch]
            if need_dx:
                dxs = np.dot(dz2, np.ascontiguousarray(w[dkh, dkw].T)).reshape(-1)
                for i in range(n):
                    for a in range(oh):
                        dst = i * img + (a + dkh) * row + dkw * c
                        src = (i * oh + a) * run
                        for t in range(run):
                            dxf[dst + t] += dxs[src + t]
    return dx, dw, db


@njit(cache=True)
def maxpool_forward(x, factor):
    n, h, w, c = x.shape
    oh = h // factor
    ow = w // factor
    y = np.empty((n, oh, ow, c), dtype=x.dtype)
    idx = np.empty((n, oh, ow, c), dtype=np.int64)
    for i in range(n):
        for a in range(oh):
            for bcol in range(ow):
                for ch in range(c):
                    best = x[i, a * factor, bcol * factor, ch]
                    bi = 0
                    for p in range(factor):
                        for q in range(factor):
                            v = x[i, a * factor + p, bcol * factor + q, ch]
                            if v > best:
                                best = v
                                bi = p * factor + q
                    y[i, a, bcol, ch] = best
                    idx[i, a, bcol, ch] = bi
    return y, idx


@njit(cache=True)
def maxpool_backward(dy, idx, x_shape, factor):
    n, h, w, c = x_shape
    oh = h // factor
    ow = w // factor
    dx = np.zeros((n, h, w, c), dtype=dy.dtype)
    for i in range(n):
        for a in range(oh):
            for bcol in range(ow):
                for ch in range(c):
                    k = idx[i, a, bcol, ch]
                    p = k // factor
                    q = k % factor
                    dx[i, a * factor + p, bcol * factor + q, ch] += dy[i, a, bcol, ch]
    return dx


@njit(cache=True)
def _lbp_codes(a):
    h, w = a.shape
    out = np.empty((h - 2, w - 2), dtype=np.uint8)
    for i in range(1, h - 1):
        for j in range(1, w - 1):
            cv = a[i, j]
            code = 0
            # clockwise from the top-left neighbor, MSB first
            if a[i - 1, j - 1] >= cv:
                code |= 128
            if a[i - 1, j] >= cv:
                code |= 64
            if a[i - 1, j + 1] >= cv:
                code |= 32
            if a[i, j + 1] >= cv:
                code |= 16
            if a[i + 1, j + 1] >= cv:
                code |= 8
            if a[i + 1, j] >= cv:
                code |= 4
            if a[i + 1, j - 1] >= cv:
                code |= 2
            if a[i, j - 1] >= cv:
                code |= 1
            out[i - 1, j - 1] = code
    return out


def lbp_codes(img):
    return _lbp_codes(np.ascontiguousarray(img, dtype=np.int32))


@njit(cache=True)
def _zncc_sliding(f, p):
    fh, fw = f.shape
    ph, pw = p.shape
    oh = fh - ph + 1
    ow = fw - pw + 1
    n = ph * pw
    pmean = 0.0
    for i in range(ph):
        for j in range(pw):
            pmean += p[i, j]
    pmean /= n
    pvar = 0.0
    for i in range(ph):
        for j in range(pw):
            d = p[i, j] - pmean
            pvar += d * d
    pnorm = np.sqrt(pvar)
    out = np.zeros((oh, ow), dtype=np.float64)
    for y in range(oh):
        for x in range(ow):
            s1 = 0.0
            s2 = 0.0
            cross = 0.0
            for i in range(ph):
                for j in range(pw):
                    v = f[y + i, x + j]
                    s1 += v
                    s2 += v * v
                    cross += v * (p[i, j] - pmean)
            var = s2 - s1 * s1 / n
            if var < 0.0:
                var = 0.0
            denom = np.sqrt(var) * pnorm
            if denom > 0.0:
                r = cross / denom
                if r > 1.0:
                    r = 1.0
                elif r < -1.0:
                    r = -1.0
                out[y, x] = r
    return out


def zncc_sliding(frame, patch):
    return _zncc_sliding(
        np.ascontiguousarray(frame, dtype=np.float64),
        np.ascontiguousarray(patch, dtype=np.float64),
    )
