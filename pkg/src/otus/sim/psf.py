"""Point spread function model and image-domain convolution."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import fftconvolve

from ..errors import InvalidArgumentError
from .geometry import SOUND_SPEED

FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))


@dataclass(frozen=True)
class PsfSpec:
    """Pulse-echo PSF: Gaussian envelope axially and laterally, carrier along depth.

    ``cycles`` is the -6 dB pulse duration in carrier periods and
    ``beamwidth_mm`` the -6 dB lateral width.
    """

    fc_mhz: float = 8.48
    fs_mhz: float = 40.0
    cycles: float = 2.0
    beamwidth_mm: float = 0.6
    c: float = SOUND_SPEED

    def __post_init__(self):
        for name in ("fc_mhz", "fs_mhz", "cycles", "beamwidth_mm", "c"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"PsfSpec.{name} must be positive")
        if self.fc_mhz >= self.fs_mhz / 2:
            raise InvalidArgumentError("carrier frequency violates Nyquist for the sampling rate")

    @property
    def wavelength_mm(self):
        return self.c / (self.fc_mhz * 1e6) * 1e3

    @property
    def axial_fwhm_mm(self):
        """-6 dB axial extent of the echo envelope (round trip halves the pulse length)."""
        return self.c * 1e3 * self.cycles / (self.fc_mhz * 1e6) / 2.0

    @property
    def sigma_z_mm(self):
        return self.axial_fwhm_mm / FWHM_PER_SIGMA

    @property
    def sigma_x_mm(self):
        return self.beamwidth_mm / FWHM_PER_SIGMA

    @property
    def pulse_sigma_us(self):
        """Temporal envelope sigma of the transmitted pulse."""
        return self.cycles / self.fc_mhz / FWHM_PER_SIGMA

    def resolution_cell_mm2(self):
        return self.axial_fwhm_mm * self.beamwidth_mm

    def widened(self, factor=2.0):
        """Blurrier PSF for the deconvolution input domain."""
        return replace(self, cycles=self.cycles * factor, beamwidth_mm=self.beamwidth_mm * factor)


def psf_kernel(psf, dz, dx, half_extent=3.5):
    """Complex PSF sampled on a raster with spacing (dz, dx) mm, odd-sized and centred."""
    check_raster(psf, dz)
    nz = int(np.ceil(half_extent * psf.sigma_z_mm / dz))
    nx = int(np.ceil(half_extent * psf.sigma_x_mm / dx))
    z = np.arange(-nz, nz + 1) * dz
    x = np.arange(-nx, nx + 1) * dx
    axial = np.exp(-z ** 2 / (2 * psf.sigma_z_mm ** 2)) * np.exp(2j * np.pi * z * 2.0 / psf.wavelength_mm)
    lateral = np.exp(-x ** 2 / (2 * psf.sigma_x_mm ** 2))
    return axial[:, None] * lateral[None, :]


def check_raster(psf, dz):
    # the echo carrier along depth has period lambda/2; sample it above Nyquist
    if not dz < psf.wavelength_mm / 4:
        raise InvalidArgumentError(
            f"raster step {dz} mm is not finer than half the axial echo period ({psf.wavelength_mm / 2:.4f} mm)")


def convolve_psf(trf, psf, dz, dx):
    """Complex RF image: ``trf`` (axial x lateral raster) convolved with the PSF."""
    trf = np.asarray(trf)
    if trf.ndim != 2:
        raise InvalidArgumentError("TRF raster must be 2-D")
    kernel = psf_kernel(psf, dz, dx)
    return fftconvolve(trf.astype(np.complex128), kernel, mode="same")


def fwhm(profile, spacing):
    """Width where ``profile`` (a single-peaked magnitude) stays above half its peak."""
    p = np.asarray(profile, dtype=np.float64)
    k = int(np.argmax(p))
    half = p[k] / 2.0
    left = k
    while left > 0 and p[left - 1] >= half:
        left -= 1
    right = k
    while right < p.size - 1 and p[right + 1] >= half:
        right += 1
    # linear interpolation of both crossings
    lo = left - (p[left] - half) / (p[left] - p[left - 1]) if left > 0 else float(left)
    hi = right + (p[right] - half) / (p[right] - p[right + 1]) if right < p.size - 1 else float(right)
    return (hi - lo) * spacing
