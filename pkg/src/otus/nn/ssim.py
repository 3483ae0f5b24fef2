"""Differentiable SSIM with a Gaussian window."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor
from ..autodiff import functional as F
from ..errors import InvalidArgumentError

K1 = 0.01
K2 = 0.03
SIGMA = 1.5


def gaussian_window(size=11, sigma=SIGMA):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (ax / sigma) ** 2)
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b, window=11, data_range=1.0, sigma=SIGMA):
    """Mean SSIM over valid window positions of two N x 1 x H x W images."""
    if a.shape != b.shape:
        raise InvalidArgumentError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    if data_range <= 0:
        raise InvalidArgumentError("data_range must be positive")
    if a.ndim != 4 or a.shape[1] != 1:
        raise InvalidArgumentError("ssim expects single-channel NCHW images")
    kernel = Tensor(gaussian_window(window, sigma)[None, None], dtype=a.dtype.type)
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2

    def blur(t):
        return F.conv2d(t, kernel, padding="valid")

    mu_a, mu_b = blur(a), blur(b)
    mu_aa, mu_bb, mu_ab = F.square(mu_a), F.square(mu_b), mu_a * mu_b
    var_a = blur(F.square(a)) - mu_aa
    var_b = blur(F.square(b)) - mu_bb
    cov = blur(a * b) - mu_ab
    num = (2.0 * mu_ab + c1) * (2.0 * cov + c2)
    den = (mu_aa + mu_bb + c1) * (var_a + var_b + c2)
    return F.mean(num / den)
