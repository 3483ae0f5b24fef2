"""Central finite-difference checks for the tape.

Finite differences are always evaluated in 64-bit arithmetic, also when the
gradient under test was produced in 32-bit; the oracle error then sits far
below both thresholds. The relative error reported everywhere is norm-wise:
``|g_ad - g_fd| / max(|g_ad|, |g_fd|, tiny)``.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, precision

RTOL_32 = 1e-3
RTOL_64 = 1e-5
FD_EPS = 1e-6
KINK_MARGIN = 1e-4
KINK_RTOL = 1e-7
KINK_ATOL = 1e-10


def default_rtol(dtype):
    return RTOL_64 if np.dtype(dtype) == np.float64 else RTOL_32


def rel_error(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-30)
    return float(np.linalg.norm(a - b) / scale)


def _scalar(fn, tensors, weight):
    out = fn(*tensors)
    return float(np.sum(out.data.astype(np.float64) * weight))


def check_op(fn, arrays, seed=0, eps=FD_EPS, dtype=np.float64):
    """Compare autodiff and finite-difference gradients of ``sum(fn(*inputs) * r)``.

    The autodiff pass runs in ``dtype``; the finite differences perturb every
    input element in 64-bit. ``r`` is a fixed random weighting so every output
    element contributes. Returns the worst relative error over the inputs.
    """
    dtype = np.dtype(dtype)
    with precision(dtype.type):
        tensors = [Tensor(a, requires_grad=True, dtype=dtype.type) for a in arrays]
        out = fn(*tensors)
        weight = np.random.default_rng([seed, 7919]).standard_normal(out.shape)
        loss = (out * Tensor(weight, dtype=dtype.type)).sum()
        loss.backward()
    grads = [t.grad for t in tensors]

    worst = 0.0
    with precision(np.float64):
        ref = [Tensor(t.data, dtype=np.float64) for t in tensors]
        for k, t in enumerate(ref):
            fd = np.zeros(t.shape, dtype=np.float64)
            flat = t.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                plus = _scalar(fn, ref, weight)
                flat[i] = orig - eps
                minus = _scalar(fn, ref, weight)
                flat[i] = orig
                fd.reshape(-1)[i] = (plus - minus) / (2 * eps)
            worst = max(worst, rel_error(grads[k], fd))
    return worst


def check_directional(loss_fn, params, seed=0, eps=FD_EPS, trials=1, ref_loss_fn=None, ref_params=None,
                      kink_retries=0, skipped=None, pairs=None):
    """Directional (JVP) check of a scalar loss against every parameter tensor.

    ``loss_fn()`` builds the loss from ``params`` (any precision) and is
    differentiated once. For each tensor a random unit direction ``v`` is drawn
    and ``<grad, v>`` is compared with ``(L(p + eps v) - L(p - eps v)) / 2 eps``
    evaluated through ``ref_loss_fn`` on ``ref_params`` (a 64-bit copy; by
    default the same objects). Returns ``{name: worst relative error}``.

    With ``kink_retries > 0`` the difference quotient is also taken at
    ``eps / 2``; disagreement beyond smooth truncation error means the segment
    crosses a ReLU or max-pool switch, and a fresh direction is drawn. The
    number of discarded directions is added to ``skipped[name]``. A tensor
    whose every direction crosses a switch is excluded: it is missing from the
    result and from ``pairs``. When ``pairs`` is a list, every kept
    ``(autodiff, finite difference)`` pair is appended to it.
    """
    ref_loss_fn = ref_loss_fn or loss_fn
    ref_params = ref_params or params
    rng = np.random.default_rng(seed)
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    loss.backward()
    grads = {k: p.grad.astype(np.float64) for k, p in params.items()}

    def quotient(p, base, v, h):
        p.data = (base + h * v).astype(p.dtype)
        plus = float(ref_loss_fn().data)
        p.data = (base - h * v).astype(p.dtype)
        minus = float(ref_loss_fn().data)
        p.data = base
        return (plus - minus) / (2 * h)

    errors = {}
    for name, p in ref_params.items():
        worst = None
        base = p.data.copy()
        for _ in range(trials):
            smooth = True
            for attempt in range(kink_retries + 1):
                v = rng.standard_normal(p.shape)
                v /= np.linalg.norm(v)
                fd = quotient(p, base, v, eps)
                if not kink_retries:
                    break
                half = quotient(p, base, v, eps / 2)
                smooth = abs(fd - half) <= KINK_RTOL * max(abs(fd), abs(half)) + KINK_ATOL
                if smooth:
                    break
                if skipped is not None:
                    skipped[name] = skipped.get(name, 0) + 1
            if not smooth:
                continue
            ad = float(np.sum(grads[name] * v))
            if pairs is not None:
                pairs.append((ad, fd))
            worst = max(worst or 0.0, rel_error([ad], [fd]))
        if worst is not None:
            errors[name] = worst
    return errors


_SWITCHES = ("relu", "leaky_relu", "abs", "maxpool2d")


def branch_pattern(out):
    """Which side of every switch (ReLU, abs, max-pool) the graph of ``out`` took.

    Two evaluations on the same linear piece give equal patterns; the nodes
    are listed in a fixed depth-first order, so graphs of one architecture at
    different precisions compare element by element.
    """
    pattern, seen, stack = [], set(), [out]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if node._op in _SWITCHES:
            x = node._parents[0].data
            if node._op == "maxpool2d":
                n, c, h, w = x.shape
                k = h // node.shape[2]
                blocks = x.reshape(n, c, h // k, k, w // k, k).transpose(0, 1, 2, 4, 3, 5)
                pattern.append(blocks.reshape(n, c, h // k, w // k, k * k).argmax(axis=-1))
            else:
                pattern.append(np.sign(x) if node._op == "abs" else x > 0)
        stack.extend(reversed(node._parents))
    return pattern


def same_branches(a, b):
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def off_kink(rng, shape, margin=KINK_MARGIN, scale=1.0):
    """Standard-normal samples pushed at least ``margin`` away from zero."""
    x = rng.standard_normal(shape) * scale
    small = np.abs(x) < margin
    x[small] = np.where(x[small] >= 0, 1.0, -1.0) * (margin + rng.random(int(small.sum())))
    return x
