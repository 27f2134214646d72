import numpy as np

from oracles import numeric_grad
from parconv.tensor import Tensor


def relative_error(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def check_grads(fn, arrays, rng, h=1e-3):
    """Worst relative error between backprop and central differences.

    The scalar objective is <fn(*inputs), R> for a fixed random R, so every
    output element contributes.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    out = fn(*tensors)
    proj = rng.standard_normal(out.shape)
    out.backward(proj if out.shape else None)
    if not out.shape:
        proj = 1.0
    worst = 0.0
    for t, a in zip(tensors, arrays):

        def objective():
            return float(np.sum(fn(*[Tensor(b, dtype=np.float64) for b in arrays]).data * proj))

        # numeric_grad perturbs `a`, which is the same buffer fn reads via `arrays`
        num = numeric_grad(objective, a, h)
        worst = max(worst, relative_error(t.grad, num))
    return worst
