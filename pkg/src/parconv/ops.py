"""Differentiable primitives for the Parallel-Conv network.

All convolutions are stride 1 with same padding, lowered to im2col + GEMM.
Only the forward GEMMs are reported to :func:`parconv.tensor.count_macs`.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import GroupError, LabelError, ShapeError
from .tensor import Tensor, as_tensor, make_result, record_macs

STANDARD = "standard"
GROUPED = "grouped"
POINTWISE = "pointwise"
PARALLEL = "parallel"
CONV_KINDS = (STANDARD, GROUPED, POINTWISE, PARALLEL)

# upper bound on one im2col buffer; batches are split to stay under it
_COLS_BUDGET_BYTES = 64 * 1024 * 1024


@dataclass(frozen=True)
class ConvLayerSpec:
    kind: str
    d_m: int
    d_n: int
    d_k: int = 3
    groups: int = 1
    stride: int = 1
    bias: bool = True

    @property
    def padding(self):
        return (self.d_k - 1) // 2

    def validate(self):
        if self.kind not in CONV_KINDS:
            raise ShapeError(f"unknown conv kind {self.kind!r}")
        if self.groups < 1:
            raise GroupError(f"groups must be >= 1, got {self.groups}")
        if min(self.d_m, self.d_n, self.d_k) < 1:
            raise ShapeError(f"non-positive dimension in {self}")
        if self.stride != 1:
            raise ShapeError("only stride 1 is supported")
        if self.d_k % 2 == 0:
            raise ShapeError(f"kernel size {self.d_k} must be odd for same padding")
        if self.kind == POINTWISE and (self.d_k != 1 or self.groups != 1):
            raise ShapeError("pointwise layers need d_k == 1 and groups == 1")
        if self.kind == STANDARD and self.groups != 1:
            raise GroupError("standard convolution has exactly one group")
        if self.d_m % self.groups or self.d_n % self.groups:
            raise GroupError(
                f"groups={self.groups} must divide input channels {self.d_m} "
                f"and output channels {self.d_n}"
            )
        return self

    def weight_shapes(self):
        """Shapes of (primary weight, pointwise weight or None, bias or None)."""
        bias = (self.d_n,) if self.bias else None
        if self.kind == PARALLEL:
            return (self.d_n, self.d_m // self.groups, self.d_k, self.d_k), (self.d_n, self.d_m, 1, 1), bias
        return (self.d_n, self.d_m // self.groups, self.d_k, self.d_k), None, bias


# ---------------------------------------------------------------- convolution core


def _check_conv(x, w, groups):
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv expects 4-D input and weight, got {x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    o, cg, k, k2 = w.shape
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"kernel must be square with odd size, got {k}x{k2}")
    if groups < 1 or c % groups or o % groups:
        raise GroupError(f"groups={groups} must divide input channels {c} and output channels {o}")
    if cg * groups != c:
        raise ShapeError(f"weight expects {cg * groups} input channels ({cg} per group), input has {c}")
    return n, c, h, wd, o, cg, k


def _chunks(n, per_sample_bytes):
    step = max(1, _COLS_BUDGET_BYTES // max(per_sample_bytes, 1))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def _unfold(x, k):
    n, c, h, w = x.shape
    if k == 1:
        return x.reshape(n, c, h * w)
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    return kernels.im2col(xp, k, h, w)


def _conv_forward(x, w, groups, op):
    n, c, h, wd, o, cg, k = _check_conv(x, w, groups)
    og, rows = o // groups, cg * k * k
    wmat = w.reshape(o, rows)
    out = np.empty((n, o, h * wd), dtype=np.result_type(x, w))
    for sl in _chunks(n, c * k * k * h * wd * x.itemsize):
        cols = _unfold(x[sl], k)
        # 2-D GEMMs per sample: stacked np.matmul misses the fast BLAS path
        for i, s in enumerate(range(sl.start, sl.stop)):
            for g in range(groups):
                np.matmul(wmat[g * og : (g + 1) * og], cols[i, g * rows : (g + 1) * rows], out=out[s, g * og : (g + 1) * og])
        record_macs(op, (sl.stop - sl.start) * groups * og * rows * h * wd)
    return out.reshape(n, o, h, wd)


def _conv_backward(x, w, gout, groups, need_dx=True):
    n, c, h, wd, o, cg, k = _check_conv(x, w, groups)
    og, rows = o // groups, cg * k * k
    pad = (k - 1) // 2
    wmat = w.reshape(o, rows)
    gmat = np.ascontiguousarray(gout).reshape(n, o, h * wd)
    dw = np.zeros((o, rows), dtype=w.dtype)
    dx = np.empty_like(x) if need_dx else None
    for sl in _chunks(n, c * k * k * h * wd * x.itemsize):
        cols = _unfold(x[sl], k)
        dcols = np.empty_like(cols) if need_dx else None
        for i, s in enumerate(range(sl.start, sl.stop)):
            for g in range(groups):
                go = gmat[s, g * og : (g + 1) * og]
                dw[g * og : (g + 1) * og] += go @ cols[i, g * rows : (g + 1) * rows].T
                if need_dx:
                    np.matmul(wmat[g * og : (g + 1) * og].T, go, out=dcols[i, g * rows : (g + 1) * rows])
        if not need_dx:
            continue
        if k == 1:
            dx[sl] = dcols.reshape(dx[sl].shape)
        else:
            dxp = kernels.col2im(dcols, c, k, h, wd)
            dx[sl] = dxp[:, :, pad : pad + h, pad : pad + wd]
    return dx, dw.reshape(w.shape)


def _conv(x, w, groups, op):
    x, w = as_tensor(x), as_tensor(w)
    out = _conv_forward(x.data, w.data, groups, op)

    def backward(g):
        # the network input never needs a gradient; skip the col2im for it
        need_dx = x.requires_grad or x._backward is not None
        return _conv_backward(x.data, w.data, g, groups, need_dx)

    return make_result(out, (x, w), backward, op)


def conv2d_grouped(x, w, groups, bias=None):
    """Grouped convolution: output group i sees only input channel group i."""
    out = _conv(x, w, groups, "conv2d_grouped")
    return out if bias is None else add_channel_bias(out, bias)


def conv2d_standard(x, w, bias=None):
    """Dense cross-correlation, stride 1, zero same-padding."""
    out = _conv(x, w, 1, "conv2d_standard")
    return out if bias is None else add_channel_bias(out, bias)


def conv2d_pointwise(x, w, bias=None):
    w = as_tensor(w)
    if w.ndim != 4 or w.shape[2:] != (1, 1):
        raise ShapeError(f"pointwise weight must be (out, in, 1, 1), got {w.shape}")
    out = _conv(x, w, 1, "conv2d_pointwise")
    return out if bias is None else add_channel_bias(out, bias)


def parallel_conv(x, w3, w1, groups, bias=None):
    """Grouped k x k branch and pointwise branch over the same input, summed.

    Both branches map D_M -> D_N channels, so the cost is the plain sum of the
    two branch costs.
    """
    w3, w1 = as_tensor(w3), as_tensor(w1)
    if w3.shape[0] != w1.shape[0]:
        raise ShapeError(f"branch output channels differ: {w3.shape[0]} vs {w1.shape[0]}")
    out = add(conv2d_grouped(x, w3, groups), conv2d_pointwise(x, w1))
    return out if bias is None else add_channel_bias(out, bias)


def conv_layer(x, spec, w, w1=None, bias=None):
    """Dispatch on ``spec.kind``."""
    spec.validate()
    if spec.kind == PARALLEL:
        return parallel_conv(x, w, w1, spec.groups, bias)
    if spec.kind == POINTWISE:
        return conv2d_pointwise(x, w, bias)
    if spec.kind == GROUPED:
        return conv2d_grouped(x, w, spec.groups, bias)
    return conv2d_standard(x, w, bias)


# ---------------------------------------------------------------- elementwise and reductions


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add needs equal shapes, got {a.shape} and {b.shape}")
    return make_result(a.data + b.data, (a, b), lambda g: (g, g), "add")


def add_channel_bias(x, b):
    x, b = as_tensor(x), as_tensor(b)
    if b.ndim != 1 or x.ndim < 2 or b.shape[0] != x.shape[1]:
        raise ShapeError(f"bias of shape {b.shape} does not match channels of {x.shape}")
    view = (1, -1) + (1,) * (x.ndim - 2)
    out = x.data + b.data.reshape(view)
    axes = (0,) + tuple(range(2, x.ndim))
    return make_result(out, (x, b), lambda g: (g, g.sum(axis=axes)), "add_channel_bias")


def tensor_sum(x):
    x = as_tensor(x)
    return make_result(np.asarray(x.data.sum()), (x,), lambda g: (np.full_like(x.data, g),), "sum")


def scale(x, c):
    x = as_tensor(x)
    c = x.data.dtype.type(c)
    return make_result(x.data * c, (x,), lambda g: (g * c,), "scale")


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    # np.maximum propagates NaN, so a blown-up activation still reaches the loss
    out = np.maximum(x.data, x.data.dtype.type(0))
    return make_result(out, (x,), lambda g: (g * mask,), "relu")


def avg_pool2(x):
    """2x2 average pooling with stride 2."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"avg_pool2 expects N x C x H x W, got {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"avg_pool2 needs even spatial dims, got {x.shape[2]}x{x.shape[3]}")
    out = kernels.avg_pool2(x.data)
    return make_result(out, (x,), lambda g: (kernels.avg_pool2_backward(g),), "avg_pool2")


def global_avg_pool(x):
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects N x C x H x W, got {x.shape}")
    n, c, h, w = x.shape
    area = h * w
    out = x.data.mean(axis=(2, 3))

    def backward(g):
        return (np.broadcast_to((g / area)[:, :, None, None], x.shape).astype(x.dtype),)

    return make_result(out, (x,), backward, "global_avg_pool")


def linear(x, w, b=None):
    """``x @ w.T + b`` with ``w`` of shape (out_features, in_features)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    out = x.data @ w.data.T
    parents = (x, w)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[0],):
            raise ShapeError(f"linear: bias shape {b.shape} != ({w.shape[0]},)")
        out = out + b.data
        parents = (x, w, b)

    def backward(g):
        grads = (g @ w.data, g.T @ x.data)
        return grads + (g.sum(axis=0),) if b is not None else grads

    return make_result(out, parents, backward, "linear")


def log_softmax_np(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_np(logits):
    return np.exp(log_softmax_np(np.asarray(logits)))


def softmax_cross_entropy(logits, labels):
    """Mean over the batch of ``-log softmax(logits)[label]``.

    ``logits`` may be (C,) with an int label or (N, C) with N labels.
    """
    logits = as_tensor(logits)
    single = logits.ndim == 1
    data = logits.data[None, :] if single else logits.data
    if data.ndim != 2:
        raise ShapeError(f"logits must be (C,) or (N, C), got {logits.shape}")
    labels = np.atleast_1d(np.asarray(labels))
    n, c = data.shape
    if labels.shape != (n,) or labels.dtype.kind not in "iu":
        raise LabelError(f"need {n} integer labels, got {labels!r}")
    if np.any(labels < 0) or np.any(labels >= c):
        raise LabelError(f"labels must lie in [0, {c}), got {labels.tolist()}")
    logp = log_softmax_np(data)
    rows = np.arange(n)
    loss = np.asarray(-logp[rows, labels].mean(), dtype=data.dtype)

    def backward(g):
        d = np.exp(logp)
        d[rows, labels] -= 1
        d *= g / n
        return (d[0] if single else d,)

    return make_result(loss, (logits,), backward, "softmax_cross_entropy")
