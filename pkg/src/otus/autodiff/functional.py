"""Differentiable primitives.

Each function computes its forward value with numpy and registers a backward
closure on the result. Image tensors are NCHW throughout.
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateVarianceError, InvalidArgumentError
from .tensor import Tensor, as_tensor

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _pair(a, b):
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise InvalidArgumentError("at least one operand must be a Tensor")
    dtype = a.dtype if isinstance(a, Tensor) else b.dtype
    a, b = as_tensor(a, dtype), as_tensor(b, dtype)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise InvalidArgumentError(f"cannot broadcast {a.shape} with {b.shape}") from exc
    return a, b


# -- elementwise ------------------------------------------------------------

def add(a, b):
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._result(a.data + b.data, (a, b), backward, "add")


def sub(a, b):
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b):
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._result(a.data * b.data, (a, b), backward, "mul")


def div(a, b):
    a, b = _pair(a, b)
    out = a.data / b.data

    def backward(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return Tensor._result(out, (a, b), backward, "div")


def neg(x):
    return Tensor._result(-x.data, (x,), lambda g: (-g,), "neg")


def square(x):
    return Tensor._result(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


def power(x, exponent):
    exponent = float(exponent)
    if exponent == 2.0:
        return square(x)

    def backward(g):
        return (g * exponent * np.power(x.data, exponent - 1.0),)

    return Tensor._result(np.power(x.data, exponent), (x,), backward, "power")


def abs(x):  # noqa: A001  (mirrors numpy naming)
    # np.sign gives the subgradient 0 at 0
    return Tensor._result(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),), "abs")


def relu(x):
    mask = x.data > 0
    return Tensor._result(np.where(mask, x.data, 0).astype(x.dtype), (x,),
                          lambda g: (g * mask,), "relu")


def leaky_relu(x, slope=0.2):
    mask = x.data > 0
    scale = np.where(mask, 1.0, slope).astype(x.dtype)
    return Tensor._result(x.data * scale, (x,), lambda g: (g * scale,), "leaky_relu")


# -- reductions and shape ---------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x, axis=None, keepdims=False):  # noqa: A001
    axes = _norm_axes(axis, x.ndim)
    out = np.asarray(x.data.sum(axis=axes, keepdims=keepdims), dtype=x.dtype)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._result(out, (x,), backward, "sum")


def mean(x, axis=None, keepdims=False):
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = np.asarray(x.data.mean(axis=axes, keepdims=keepdims), dtype=x.dtype)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).astype(x.dtype),)

    return Tensor._result(out, (x,), backward, "mean")


def abs_mean(x):
    """Mean absolute value, the L1 loss primitive."""
    return mean(abs(x))


def reshape(x, shape):
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise InvalidArgumentError(str(exc)) from exc
    return Tensor._result(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def getitem(x, index):
    out = x.data[index]
    if isinstance(index, np.ndarray) or (
            isinstance(index, tuple) and any(isinstance(i, (list, np.ndarray)) for i in index)):
        raise InvalidArgumentError("only basic slicing is differentiable")

    def backward(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return Tensor._result(np.array(out), (x,), backward, "getitem")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    axis = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != axis):
            raise InvalidArgumentError(f"concat extents disagree: {ref} vs {t.shape}")
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    out = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._result(out, tuple(tensors), backward, "concat")


def concat_channels(a, b):
    if a.ndim != 4 or b.ndim != 4:
        raise InvalidArgumentError("concat_channels expects NCHW tensors")
    return concat([a, b], axis=1)


# -- convolution ------------------------------------------------------------

def same_padding(size, kernel, stride):
    """(before, after) padding giving an output extent of ceil(size / stride).

    Odd totals put the extra row/column after, as TensorFlow does.
    """
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def conv_output_size(size, kernel, stride, padding):
    """floor((size + pad_total - kernel) / stride) + 1."""
    before, after = same_padding(size, kernel, stride) if padding == "same" else (0, 0)
    return (size + before + after - kernel) // stride + 1


def conv2d(x, kernel, bias=None, stride=1, padding="same"):
    """2-D cross-correlation of an NCHW input with an (Cout, Cin, kh, kw) kernel."""
    if x.ndim != 4 or kernel.ndim != 4:
        raise InvalidArgumentError("conv2d expects 4-D input and kernel")
    n, cin, h, w = x.shape
    cout, kcin, kh, kw = kernel.shape
    if kcin != cin:
        raise InvalidArgumentError(f"input has {cin} channels, kernel expects {kcin}")
    if stride < 1:
        raise InvalidArgumentError("stride must be >= 1")
    if padding == "same":
        pt, pb = same_padding(h, kh, stride)
        pl, pr = same_padding(w, kw, stride)
    elif padding == "valid":
        pt = pb = pl = pr = 0
    else:
        raise InvalidArgumentError(f"unknown padding {padding!r}")
    hp, wp = h + pt + pb, w + pl + pr
    if kh > hp or kw > wp:
        raise InvalidArgumentError(f"kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    # channel-major im2col: cols[(c, i, j), (n, ho, wo)], one strided slice copy per tap
    xc = x.data.transpose(1, 0, 2, 3)
    if pt or pb or pl or pr:
        xc = np.pad(xc, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    hs, ws = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    if kh == 1 and kw == 1:
        cols = np.ascontiguousarray(xc[:, :, :hs:stride, :ws:stride]).reshape(cin, n * ho * wo)
    else:
        cols = np.empty((cin, kh, kw, n, ho, wo), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                cols[:, i, j] = xc[:, :, i:i + hs:stride, j:j + ws:stride]
        cols = cols.reshape(cin * kh * kw, n * ho * wo)
    wmat = kernel.data.reshape(cout, cin * kh * kw)
    out = wmat @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = np.ascontiguousarray(out.reshape(cout, n, ho, wo).transpose(1, 0, 2, 3))

    def backward(g):
        gm = g.transpose(1, 0, 2, 3).reshape(cout, n * ho * wo)
        gk = (gm @ cols.T).reshape(kernel.shape)
        dcols = (wmat.T @ gm).reshape(cin, kh, kw, n, ho, wo)
        if kh == 1 and kw == 1 and stride == 1:
            dxc = dcols.reshape(cin, n, ho, wo)
        else:
            dxc = np.zeros((cin, n, hp, wp), dtype=x.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxc[:, :, i:i + hs:stride, j:j + ws:stride] += dcols[:, i, j]
            dxc = dxc[:, :, pt:pt + h, pl:pl + w]
        grads = (np.ascontiguousarray(dxc.transpose(1, 0, 2, 3)), gk)
        if bias is not None:
            grads += (gm.sum(axis=1),)
        return grads

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return Tensor._result(out, parents, backward, "conv2d")


# -- normalization ----------------------------------------------------------

class RunningStats:
    """Per-channel running mean/variance used by batch normalization in eval mode."""

    def __init__(self, channels, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)

    def update(self, mean, var_unbiased, momentum):
        self.mean = ((1 - momentum) * self.mean + momentum * mean).astype(self.mean.dtype)
        self.var = ((1 - momentum) * self.var + momentum * var_unbiased).astype(self.var.dtype)


def batchnorm2d(x, gamma, beta, running=None, training=True, eps=BN_EPS, momentum=BN_MOMENTUM):
    """Per-channel normalization over (N, H, W).

    In training mode batch statistics are used and ``running`` (if given) is
    updated; in eval mode ``running`` supplies the statistics.
    """
    if x.ndim != 4:
        raise InvalidArgumentError("batchnorm2d expects NCHW input")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise InvalidArgumentError(f"gamma/beta must have shape ({c},)")
    shp = (1, c, 1, 1)
    if training:
        m = x.shape[0] * x.shape[2] * x.shape[3]
        if m < 2:
            raise DegenerateVarianceError("batch norm in train mode needs N*H*W >= 2")
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        if running is not None:
            running.update(mu, var * m / (m - 1), momentum)
    else:
        if running is None:
            raise InvalidArgumentError("eval-mode batch norm needs running statistics")
        mu, var = running.mean, running.var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu.reshape(shp)) * inv_std.reshape(shp)
    out = gamma.data.reshape(shp) * xhat + beta.data.reshape(shp)

    def backward(g):
        ggamma = (g * xhat).sum(axis=(0, 2, 3))
        gbeta = g.sum(axis=(0, 2, 3))
        dxhat = g * gamma.data.reshape(shp)
        if training:
            m = x.shape[0] * x.shape[2] * x.shape[3]
            gx = (inv_std.reshape(shp) / m) * (
                m * dxhat
                - dxhat.sum(axis=(0, 2, 3), keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True))
        else:
            gx = dxhat * inv_std.reshape(shp)
        return gx.astype(x.dtype), ggamma, gbeta

    return Tensor._result(out.astype(x.dtype), (x, gamma, beta), backward, "batchnorm2d")


# -- pooling / resampling ---------------------------------------------------

def maxpool2d(x, window=2, stride=2):
    """Non-overlapping max pooling; gradient goes to the first maximum in each window."""
    if window != stride:
        raise InvalidArgumentError("only non-overlapping pooling (window == stride) is supported")
    n, c, h, w = x.shape
    k = window
    if h % k or w % k:
        raise InvalidArgumentError(f"extent {h}x{w} not divisible by pooling window {k}")
    ho, wo = h // k, w // k
    blocks = x.data.reshape(n, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, k * k)
    # argmax returns the first maximum, i.e. the lowest linear index in the window
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        onehot = (np.arange(k * k) == idx[..., None]).astype(x.dtype)
        gb = onehot * g[..., None]
        gx = gb.reshape(n, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (gx,)

    return Tensor._result(np.ascontiguousarray(out), (x,), backward, "maxpool2d")


def upsample_nearest(x, factor=2):
    n, c, h, w = x.shape
    out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)

    def backward(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return Tensor._result(out, (x,), backward, "upsample_nearest")
