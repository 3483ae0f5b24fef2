"""Image-domain simulation: rasterized TRF, PSF convolution, envelope, log compression."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import InvalidArgumentError
from .bmode import BModeImage, log_compress
from .geometry import DYNAMIC_RANGE_DB
from .psf import PsfSpec, convolve_psf

RASTER_DZ = 0.025  # mm
RASTER_DX = 0.05
CLEAN_SMOOTH_PX = 0.8


def raster_indices(grid, dz=RASTER_DZ, dx=RASTER_DX):
    """Raster shape and the raster index of every output pixel centre."""
    nz = int(round((grid.axial[1] - grid.axial[0]) / dz)) + 1
    nx = int(round((grid.lateral[1] - grid.lateral[0]) / dx)) + 1
    iz = (grid.z - grid.axial[0]) / dz
    ix = (grid.x - grid.lateral[0]) / dx
    if not (np.allclose(iz, np.round(iz)) and np.allclose(ix, np.round(ix))):
        raise InvalidArgumentError("raster steps must divide the pixel-centre offsets")
    return (nz, nx), np.round(iz).astype(int), np.round(ix).astype(int)


def rasterize(phantom, dz=RASTER_DZ, dx=RASTER_DX):
    """Tissue reflectivity raster: scatterer amplitudes summed into their nearest raster node."""
    grid = phantom.grid
    (nz, nx), _, _ = raster_indices(grid, dz, dx)
    iz = np.clip(np.round((phantom.positions[:, 0] - grid.axial[0]) / dz).astype(int), 0, nz - 1)
    ix = np.clip(np.round((phantom.positions[:, 1] - grid.lateral[0]) / dx).astype(int), 0, nx - 1)
    flat = np.bincount(iz * nx + ix, weights=phantom.amplitudes, minlength=nz * nx)
    return flat.reshape(nz, nx)


def envelope_image(phantom, psf, dz=RASTER_DZ, dx=RASTER_DX):
    """Envelope |TRF * PSF| sampled at the pixel centres of ``phantom.grid``."""
    _, iz, ix = raster_indices(phantom.grid, dz, dx)
    rf = convolve_psf(rasterize(phantom, dz, dx), psf, dz, dx)
    return np.abs(rf[np.ix_(iz, ix)])


def speckle_image(phantom, psf=None, seed=None, provenance="speckled", dz=RASTER_DZ, dx=RASTER_DX):
    """Speckled B-mode image; ``seed`` draws a fresh scatterer realization."""
    psf = psf or PsfSpec()
    if seed is not None:
        phantom = phantom.realize(seed)
    db = log_compress(envelope_image(phantom, psf, dz, dx))
    g = phantom.grid
    return BModeImage(db, g.axial, g.lateral, provenance, seed=phantom.seed)


def clean_image(phantom, grid=None, smooth_px=CLEAN_SMOOTH_PX):
    """Region-multiplier map in dB, optionally Gaussian-smoothed, normalized to its max."""
    grid = grid or phantom.grid
    zz, xx = grid.mesh()
    m = phantom.multiplier(zz, xx)
    db = log_compress(m)
    if smooth_px > 0:
        db = gaussian_filter(db, smooth_px, mode="nearest")
        db = np.clip(db - db.max(), -DYNAMIC_RANGE_DB, 0.0)
    return BModeImage(db, grid.axial, grid.lateral, "clean", seed=phantom.seed)
