"""Cycle-consistency and least-squares adversarial losses.

``G`` maps the degraded domain Y to the target domain X; ``F`` maps X to Y.
The discriminator judging X is called ``disc_x`` and the one judging Y ``disc_y``.
"""

from __future__ import annotations

from ..autodiff import Tensor
from ..autodiff import functional as Fn
from ..errors import InvalidArgumentError

REAL = 1.0
FAKE = -1.0


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise InvalidArgumentError(f"{what}: shape {b.shape} does not match {a.shape}")


def cycle_terms(x, y, G, F):
    """Returns (cycle_x, cycle_y, F(x), G(y)); each cycle term is a per-pixel mean |.|."""
    fx = F(x)
    _same_shape(x, fx, "F(x)")
    gy = G(y)
    _same_shape(y, gy, "G(y)")
    x_rec = G(fx)
    y_rec = F(gy)
    _same_shape(x, x_rec, "G(F(x))")
    _same_shape(y, y_rec, "F(G(y))")
    return Fn.abs_mean(x - x_rec), Fn.abs_mean(y - y_rec), fx, gy


def cycle_loss(x, y, G, F):
    """mean|x - G(F(x))| + mean|y - F(G(y))|."""
    cx, cy, _, _ = cycle_terms(x, y, G, F)
    return cx + cy


def _scores_sq(scores, target):
    return Fn.mean(Fn.square(scores - target))


def lsgan_disc_loss(real, fake, disc, joint=True):
    """mean (D(real) - 1)^2 + mean (D(fake) + 1)^2, with the fake batch detached.

    ``joint=True`` scores real and fake in one batch so batch-norm statistics
    are shared between them.
    """
    fake = fake.detach() if isinstance(fake, Tensor) else fake
    if joint and isinstance(real, Tensor):
        _same_shape(real, fake, "fake batch")
        scores = disc(Fn.concat([real, fake], axis=0))
        n = real.shape[0]
        return _scores_sq(scores[:n], REAL) + _scores_sq(scores[n:], FAKE)
    return _scores_sq(disc(real), REAL) + _scores_sq(disc(fake), FAKE)


def lsgan_gen_loss(fake, disc):
    """mean (D(fake) - 1)^2: the generator pushes its output toward the real label."""
    return _scores_sq(disc(fake), REAL)
