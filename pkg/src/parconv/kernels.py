"""Hot numeric kernels.

Every kernel exists twice: a loop version compiled with numba (``*_jit``)
and a vectorised numpy version (``*_np``).  The public name dispatches on
``parconv._accel.USE_JIT``.  Both paths must agree to floating-point
round-off; ``tests/test_kernels.py`` holds them to that.
"""
import math

import numpy as np

from ._accel import USE_JIT, optional_njit


# ---------------------------------------------------------------- FFT


def _bitrev_indices(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@optional_njit(cache=True)
def _fft_rows_jit(x, out):
    n_rows, n = x.shape
    bits = 0
    while (1 << bits) < n:
        bits += 1
    for i in range(n):
        r = 0
        v = i
        for _ in range(bits):
            r = (r << 1) | (v & 1)
            v >>= 1
        for f in range(n_rows):
            out[f, r] = x[f, i]
    tw = np.empty(n // 2, dtype=np.complex128)
    for j in range(n // 2):
        ang = -2.0 * math.pi * j / n
        tw[j] = complex(math.cos(ang), math.sin(ang))
    size = 2
    while size <= n:
        half = size // 2
        step = n // size
        for f in range(n_rows):
            for start in range(0, n, size):
                for j in range(half):
                    a = out[f, start + j]
                    b = out[f, start + j + half] * tw[j * step]
                    out[f, start + j] = a + b
                    out[f, start + j + half] = a - b
        size *= 2
    return out


def _fft_rows_np(x):
    n_rows, n = x.shape
    out = x[:, _bitrev_indices(n)]
    ang = -2.0 * np.pi * np.arange(n // 2) / n
    tw_full = np.cos(ang) + 1j * np.sin(ang)
    size = 2
    while size <= n:
        half = size // 2
        tw = tw_full[:: n // size]
        v = out.reshape(n_rows, n // size, size)
        a = v[:, :, :half].copy()
        b = v[:, :, half:] * tw
        v[:, :, :half] = a + b
        v[:, :, half:] = a - b
        size *= 2
    return out


def fft_rows(x):
    """Radix-2 DIT FFT of every row of a 2-D array; row length must be a power of two."""
    x = np.ascontiguousarray(x, dtype=np.complex128)
    if x.ndim != 2:
        raise ValueError("fft_rows expects a 2-D array")
    n = x.shape[1]
    if n < 1 or n & (n - 1):
        raise ValueError(f"row length {n} is not a power of two")
    if n == 1:
        return x.copy()
    if USE_JIT:
        return _fft_rows_jit(x, np.empty_like(x))
    return _fft_rows_np(x)


# ---------------------------------------------------------------- im2col


@optional_njit(cache=True)
def _im2col_jit(xp, k, h, w, cols):
    n_batch, c = xp.shape[0], xp.shape[1]
    for n in range(n_batch):
        for ch in range(c):
            for ki in range(k):
                for kj in range(k):
                    row = (ch * k + ki) * k + kj
                    for i in range(h):
                        base = i * w
                        for j in range(w):
                            cols[n, row, base + j] = xp[n, ch, i + ki, j + kj]
    return cols


def _im2col_np(xp, k, h, w):
    n_batch, c = xp.shape[0], xp.shape[1]
    cols = np.empty((n_batch, c, k, k, h, w), dtype=xp.dtype)
    for ki in range(k):
        for kj in range(k):
            cols[:, :, ki, kj] = xp[:, :, ki : ki + h, kj : kj + w]
    return cols.reshape(n_batch, c * k * k, h * w)


def im2col(xp, k, h, w):
    """Unfold padded input (N, C, h+k-1, w+k-1) into (N, C*k*k, h*w) patches."""
    xp = np.ascontiguousarray(xp)
    if USE_JIT:
        # output buffers are allocated by numpy for every jit kernel
        cols = np.empty((xp.shape[0], xp.shape[1] * k * k, h * w), dtype=xp.dtype)
        return _im2col_jit(xp, k, h, w, cols)
    return _im2col_np(xp, k, h, w)


@optional_njit(cache=True)
def _col2im_jit(cols, c, k, h, w, xp):
    n_batch = cols.shape[0]
    for n in range(n_batch):
        for ch in range(c):
            for ki in range(k):
                for kj in range(k):
                    row = (ch * k + ki) * k + kj
                    for i in range(h):
                        base = i * w
                        for j in range(w):
                            xp[n, ch, i + ki, j + kj] += cols[n, row, base + j]
    return xp


def _col2im_np(cols, c, k, h, w):
    n_batch = cols.shape[0]
    v = cols.reshape(n_batch, c, k, k, h, w)
    xp = np.zeros((n_batch, c, h + k - 1, w + k - 1), dtype=cols.dtype)
    for ki in range(k):
        for kj in range(k):
            xp[:, :, ki : ki + h, kj : kj + w] += v[:, :, ki, kj]
    return xp


def col2im(cols, c, k, h, w):
    """Adjoint of :func:`im2col`: scatter-add patches back to the padded grid."""
    cols = np.ascontiguousarray(cols)
    if USE_JIT:
        xp = np.zeros((cols.shape[0], c, h + k - 1, w + k - 1), dtype=cols.dtype)
        return _col2im_jit(cols, c, k, h, w, xp)
    return _col2im_np(cols, c, k, h, w)


# ---------------------------------------------------------------- pooling


@optional_njit(cache=True)
def _avg_pool2_jit(x, out):
    n_batch, c, h, w = x.shape
    for n in range(n_batch):
        for ch in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    top = x[n, ch, 2 * i, 2 * j] + x[n, ch, 2 * i, 2 * j + 1]
                    bottom = x[n, ch, 2 * i + 1, 2 * j] + x[n, ch, 2 * i + 1, 2 * j + 1]
                    out[n, ch, i, j] = (top + bottom) * 0.25
    return out


def _avg_pool2_np(x):
    n_batch, c, h, w = x.shape
    v = x.reshape(n_batch, c, h // 2, 2, w // 2, 2)
    return ((v[:, :, :, 0, :, 0] + v[:, :, :, 0, :, 1]) + (v[:, :, :, 1, :, 0] + v[:, :, :, 1, :, 1])) * x.dtype.type(0.25)


def avg_pool2(x):
    x = np.ascontiguousarray(x)
    if USE_JIT:
        n, c, h, w = x.shape
        return _avg_pool2_jit(x, np.empty((n, c, h // 2, w // 2), dtype=x.dtype))
    return _avg_pool2_np(x)


@optional_njit(cache=True)
def _avg_pool2_backward_jit(g, out):
    n_batch, c, h, w = g.shape
    for n in range(n_batch):
        for ch in range(c):
            for i in range(h):
                for j in range(w):
                    v = g[n, ch, i, j] * 0.25
                    out[n, ch, 2 * i, 2 * j] = v
                    out[n, ch, 2 * i, 2 * j + 1] = v
                    out[n, ch, 2 * i + 1, 2 * j] = v
                    out[n, ch, 2 * i + 1, 2 * j + 1] = v
    return out


def _avg_pool2_backward_np(g):
    q = g * g.dtype.type(0.25)
    return np.repeat(np.repeat(q, 2, axis=2), 2, axis=3)


def avg_pool2_backward(g):
    g = np.ascontiguousarray(g)
    if USE_JIT:
        n, c, h, w = g.shape
        return _avg_pool2_backward_jit(g, np.empty((n, c, 2 * h, 2 * w), dtype=g.dtype))
    return _avg_pool2_backward_np(g)


# ---------------------------------------------------------------- direct convolution with multiply counter


@optional_njit(cache=True)
def _conv2d_direct_counted_jit(x, w, groups):
    n_batch, c, h, wd = x.shape
    o, cg, k, _ = w.shape
    og = o // groups
    pad = (k - 1) // 2
    out = np.zeros((n_batch, o, h, wd), dtype=np.float64)
    count = 0
    for n in range(n_batch):
        for oc in range(o):
            gi = oc // og
            for i in range(h):
                for j in range(wd):
                    acc = 0.0
                    for ci in range(cg):
                        ch = gi * cg + ci
                        for ki in range(k):
                            ii = i + ki - pad
                            for kj in range(k):
                                jj = j + kj - pad
                                v = 0.0
                                if ii >= 0 and ii < h and jj >= 0 and jj < wd:
                                    v = x[n, ch, ii, jj]
                                acc += v * w[oc, ci, ki, kj]
                                count += 1
                    out[n, oc, i, j] = acc
    return out, count


def _conv2d_direct_counted_np(x, w, groups):
    n_batch, c, h, wd = x.shape
    o, cg, k, _ = w.shape
    og = o // groups
    pad = (k - 1) // 2
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n_batch, o, h, wd))
    count = 0
    for gi in range(groups):
        xs = xp[:, gi * cg : (gi + 1) * cg]
        ws = w[gi * og : (gi + 1) * og].astype(np.float64)
        for ki in range(k):
            for kj in range(k):
                tap = xs[:, :, ki : ki + h, kj : kj + wd]
                out[:, gi * og : (gi + 1) * og] += np.einsum("nchw,oc->nohw", tap, ws[:, :, ki, kj])
                count += n_batch * og * cg * h * wd
    return out, count


def conv2d_direct_counted(x, w, groups=1):
    """Stride-1, same-padded grouped convolution by explicit loops.

    Returns ``(output, n_multiplies)``.  Multiplies against the implicit
    zero padding are counted, as the analytic cost formulas assume.
    Accumulates in float64.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if USE_JIT:
        out, count = _conv2d_direct_counted_jit(x, w, groups)
        return out, int(count)
    return _conv2d_direct_counted_np(x, w, groups)


KERNELS = {
    "fft_rows": (_fft_rows_jit, _fft_rows_np),
    "im2col": (_im2col_jit, _im2col_np),
    "col2im": (_col2im_jit, _col2im_np),
    "avg_pool2": (_avg_pool2_jit, _avg_pool2_np),
    "avg_pool2_backward": (_avg_pool2_backward_jit, _avg_pool2_backward_np),
    "conv2d_direct_counted": (_conv2d_direct_counted_jit, _conv2d_direct_counted_np),
}
