"""Differentiable operations for NCHW tensors."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor, result


def _needs(t) -> bool:
    return isinstance(t, Tensor) and (t.requires_grad or bool(t._parents))


def _give(t, g):
    if _needs(t):
        t._accumulate(g)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _give(a, _unbroadcast(g, a.shape))
        _give(b, _unbroadcast(g, b.shape))

    return result(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _give(a, _unbroadcast(g * b.data, a.shape))
        _give(b, _unbroadcast(g * a.data, b.shape))

    return result(a.data * b.data, (a, b), backward)


def sum_all(x: Tensor) -> Tensor:
    def backward(g):
        _give(x, np.broadcast_to(g, x.shape).astype(x.dtype))

    return result(x.data.sum(), (x,), backward)


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0

    def backward(g):
        _give(x, g * pos)

    return result(np.where(pos, x.data, 0).astype(x.dtype), (x,), backward)


def hadamard(x: Tensor, m) -> Tensor:
    """Element-wise product with a broadcastable mask; the mask gets no gradient."""
    m = m.data if isinstance(m, Tensor) else np.asarray(m)
    m = m.astype(x.dtype, copy=False)
    try:
        out = x.data * m
    except ValueError as exc:
        raise ValueError(f"mask shape {m.shape} does not broadcast to {x.shape}") from exc
    if out.shape != x.shape:
        raise ValueError(f"mask shape {m.shape} would broadcast {x.shape} to {out.shape}")

    def backward(g):
        _give(x, g * m)

    return result(out, (x,), backward)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 4 or b.data.ndim != 4 or a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"cannot concatenate {a.shape} and {b.shape} along channels")
    ca = a.shape[1]

    def backward(g):
        _give(a, g[:, :ca])
        _give(b, g[:, ca:])

    return result(np.concatenate([a.data, b.data], axis=1), (a, b), backward)


# --- convolution -------------------------------------------------------------

def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def _same(size: int, k: int, s: int):
    out = -(-size // s)
    total = max((out - 1) * s + k - size, 0)
    return out, total // 2, total - total // 2


def _im2col(x: np.ndarray, kh, kw, stride):
    """Padded input and patch matrix ``(B, C*kh*kw, Ho*Wo)`` for same-padded correlation."""
    b, c, h, w = x.shape
    sh, sw = stride
    ho, pt, pb = _same(h, kh, sh)
    wo, pl, pr = _same(w, kw, sw)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :ho, :wo]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(b, c * kh * kw, ho * wo)
    return cols, (ho, wo, pt, pl, xp.shape)


def _col2im(dcols, x_shape, kh, kw, stride, geom):
    b, c, h, w = x_shape
    sh, sw = stride
    ho, wo, pt, pl, xp_shape = geom
    dxp = np.zeros(xp_shape, dtype=dcols.dtype)
    d = dcols.reshape(b, c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += d[:, :, i, j]
    return dxp[:, :, pt:pt + h, pl:pl + w]


def _conv_fwd(x, w, stride):
    o, c, kh, kw = w.shape
    cols, geom = _im2col(x, kh, kw, stride)
    out = np.matmul(w.reshape(o, -1), cols)
    return out.reshape(x.shape[0], o, geom[0], geom[1]), cols, geom


def _conv_wgrad(cols, g, w_shape):
    b, o = g.shape[:2]
    return np.tensordot(g.reshape(b, o, -1), cols, axes=([0, 2], [0, 2])).reshape(w_shape)


def _conv_xgrad(g, w, x_shape, stride, geom):
    o, c, kh, kw = w.shape
    b = g.shape[0]
    dcols = np.matmul(w.reshape(o, -1).T, g.reshape(b, o, -1))
    return _col2im(dcols, x_shape, kh, kw, stride, geom)


def _geom_for(x_shape, kh, kw, stride):
    _, _, h, w = x_shape
    ho, pt, pb = _same(h, kh, stride[0])
    wo, pl, pr = _same(w, kw, stride[1])
    return ho, wo, pt, pl, (x_shape[0], x_shape[1], h + pt + pb, w + pl + pr)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride=1) -> Tensor:
    """Same-padded 2-d cross-correlation; ``w`` is ``(C_out, C_in, kh, kw)``."""
    stride = _pair(stride)
    if min(stride) < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ValueError(f"conv2d shape mismatch: input {x.shape}, kernel {w.shape}")
    out, cols, geom = _conv_fwd(x.data, w.data, stride)
    if b is not None:
        out = out + b.data.reshape(1, -1, 1, 1)

    def backward(g):
        if _needs(w):
            w._accumulate(_conv_wgrad(cols, g, w.shape))
        if _needs(b):
            b._accumulate(g.sum(axis=(0, 2, 3)))
        if _needs(x):
            x._accumulate(_conv_xgrad(g, w.data, x.shape, stride, geom))

    return result(out, (x, w, b), backward)


def conv2d_transpose(x: Tensor, w: Tensor, b: Tensor | None = None, stride=(2, 2)) -> Tensor:
    """Adjoint of :func:`conv2d` with the same kernel and stride.

    ``w`` is ``(C_in, C_out, kh, kw)``: the layout of the forward convolution
    whose input gradient this computes.  Output size is ``input * stride``.
    """
    stride = _pair(stride)
    if min(stride) < 1:
        raise ValueError(f"unsupported stride {stride}")
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[0]:
        raise ValueError(f"conv2d_transpose shape mismatch: input {x.shape}, kernel {w.shape}")
    bsz, _, h, wd = x.shape
    _, cout, kh, kw = w.shape
    out_shape = (bsz, cout, h * stride[0], wd * stride[1])
    geom = _geom_for(out_shape, kh, kw, stride)
    out = _conv_xgrad(x.data, w.data, out_shape, stride, geom)
    if b is not None:
        out = out + b.data.reshape(1, -1, 1, 1)

    def backward(g):
        cols = None
        if _needs(w) or _needs(x):
            gy, cols, _ = _conv_fwd(g, w.data, stride)
            if _needs(x):
                x._accumulate(gy)
            if _needs(w):
                w._accumulate(_conv_wgrad(cols, x.data, w.shape))
        if _needs(b):
            b._accumulate(g.sum(axis=(0, 2, 3)))

    return result(out, (x, w, b), backward)


def maxpool2x2(x: Tensor) -> Tensor:
    """2x2 max pooling; ties route the gradient to the first window element (row-major)."""
    bsz, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2x2 needs even spatial dims, got {(h, w)}")
    win = x.data.reshape(bsz, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(bsz, c, h // 2, w // 2, 4)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        dwin = np.zeros(win.shape, dtype=g.dtype)
        np.put_along_axis(dwin, arg[..., None], g[..., None], axis=-1)
        dx = dwin.reshape(bsz, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        _give(x, dx.reshape(x.shape))

    return result(out, (x,), backward)


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
              running_var: np.ndarray, train: bool, momentum: float = 0.99,
              eps: float = 1e-3) -> Tensor:
    """Per-channel batch normalization over (batch, h, w).

    In training mode the running statistics are updated in place as
    ``running = momentum * running + (1 - momentum) * batch_stat`` (biased variance).
    """
    shape = (1, -1, 1, 1)
    if train:
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mean, var = running_mean, running_var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mean.reshape(shape).astype(x.dtype)) * inv_std.reshape(shape)
    out = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)

    def backward(g):
        _give(gamma, (g * xhat).sum(axis=(0, 2, 3)))
        _give(beta, g.sum(axis=(0, 2, 3)))
        if not _needs(x):
            return
        dxhat = g * gamma.data.reshape(shape)
        if train:
            n = x.data.size // x.shape[1]
            dx = (inv_std.reshape(shape) / n) * (
                n * dxhat - dxhat.sum(axis=(0, 2, 3), keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True))
        else:
            dx = dxhat * inv_std.reshape(shape)
        x._accumulate(dx)

    return result(out.astype(x.dtype), (x, gamma, beta), backward)


def mse_masked_loss(pred: Tensor, target, mask) -> Tensor:
    """``mean(((target - pred) * mask)**2)`` over every element.

    Equal to ``mean((target - pred * mask)**2)`` whenever the target vanishes
    off the mask; masking the target too makes the loss blind to it there.
    """
    target = np.asarray(target.data if isinstance(target, Tensor) else target)
    m = np.asarray(mask.data if isinstance(mask, Tensor) else mask).astype(pred.dtype)
    if target.shape != pred.shape:
        raise ValueError(f"target shape {target.shape} != prediction shape {pred.shape}")
    if np.broadcast_shapes(m.shape, pred.shape) != pred.shape:
        raise ValueError(f"mask shape {m.shape} incompatible with {pred.shape}")
    resid = (target.astype(pred.dtype) - pred.data) * m
    n = resid.size
    loss = np.asarray((resid * resid).sum() / n, dtype=pred.dtype)

    def backward(g):
        _give(pred, (g * (-2.0 / n)) * resid * m)

    return result(loss, (pred,), backward)


def he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)
