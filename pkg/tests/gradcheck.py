"""Central-difference gradient checking for the tensor engine."""

import numpy as np

from srnah.nn.tensor import Tensor


def numeric_grad(fn, tensors, weights, eps=1e-6):
    """d/dx of sum(fn(*tensors) * weights) for every tensor, by central differences."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        for idx in np.ndindex(t.shape):
            orig = t.data[idx]
            t.data[idx] = orig + eps
            fp = float((fn(*tensors).data * weights).sum())
            t.data[idx] = orig - eps
            fm = float((fn(*tensors).data * weights).sum())
            t.data[idx] = orig
            g[idx] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def max_rel_error(fn, shapes, rng, dtype=np.float64, eps=1e-6):
    tensors = [Tensor(rng.standard_normal(s).astype(dtype), requires_grad=True) for s in shapes]
    out = fn(*tensors)
    weights = rng.standard_normal(out.shape).astype(dtype)
    (out * Tensor(weights)).sum().backward()
    numeric = numeric_grad(fn, tensors, weights, eps)
    worst = 0.0
    for t, g in zip(tensors, numeric):
        scale = max(np.abs(g).max(), 1e-12)
        worst = max(worst, float(np.abs(t.grad - g).max() / scale))
    return worst
