"""Synthetic tissue phantoms: echogenic regions plus a random scatterer field."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InvalidArgumentError
from ..metrics import RoiMask
from .geometry import ImageGrid
from .psf import PsfSpec

KINDS = ("cyst", "lesion", "layered", "random")
SCATTERERS_PER_CELL = 12.0
DENSITY_BOUNDS = (10.0, 40.0)  # scatterers per resolution cell
RA_SCALE = 0.75
RB_SCALE = (1.3, 1.8)
EXCLUDE_SCALE = 1.15
TEXTURE_DB = 1.5


@dataclass(frozen=True)
class Region:
    shape: str  # ellipse | rect
    center: tuple  # (axial mm, lateral mm)
    half: tuple  # half-axes (axial, lateral) mm
    multiplier: float

    def __post_init__(self):
        if self.shape not in ("ellipse", "rect"):
            raise InvalidArgumentError(f"unknown region shape {self.shape!r}")
        if self.multiplier < 0:
            raise InvalidArgumentError("region multipliers must be non-negative")

    def contains(self, z, x, scale=1.0):
        u = (np.asarray(z) - self.center[0]) / (self.half[0] * scale)
        v = (np.asarray(x) - self.center[1]) / (self.half[1] * scale)
        if self.shape == "ellipse":
            return u ** 2 + v ** 2 <= 1.0
        return (np.abs(u) <= 1.0) & (np.abs(v) <= 1.0)


@dataclass(frozen=True)
class Phantom:
    kind: str
    seed: int
    grid: ImageGrid
    regions: tuple
    positions: np.ndarray = field(repr=False)  # (N, 2) axial, lateral mm
    amplitudes: np.ndarray = field(repr=False)
    texture: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 4)))
    primary: int = 0

    def __post_init__(self):
        z, x = self.positions[:, 0], self.positions[:, 1]
        (z0, z1), (x0, x1) = self.grid.axial, self.grid.lateral
        if ((z < z0) | (z > z1) | (x < x0) | (x > x1)).any():
            raise InvalidArgumentError("scatterer outside phantom extent")

    @property
    def area_mm2(self):
        (z0, z1), (x0, x1) = self.grid.axial, self.grid.lateral
        return (z1 - z0) * (x1 - x0)

    @property
    def density(self):
        return self.positions.shape[0] / self.area_mm2

    def texture_db(self, z, x):
        z = np.asarray(z, dtype=np.float64)
        out = np.zeros(np.broadcast(z, x).shape)
        for amp, kz, kx, ph in self.texture:
            out += amp * np.cos(kz * z + kx * x + ph)
        return out

    def multiplier(self, z, x, with_texture=True):
        """Echogenicity map: later regions override earlier ones, background is 1."""
        z, x = np.broadcast_arrays(np.asarray(z, dtype=np.float64), np.asarray(x, dtype=np.float64))
        m = np.ones(z.shape)
        for r in self.regions:
            m = np.where(r.contains(z, x), r.multiplier, m)
        if with_texture and len(self.texture):
            m = m * 10.0 ** (self.texture_db(z, x) / 20.0)
        return m

    def realize(self, seed, density=None):
        """Same regions, fresh scatterer realization (default density unchanged)."""
        density = self.density if density is None else density
        pos, amp = _scatter(np.random.default_rng([seed, 11]), self.grid, density)
        amp = amp * self.multiplier(pos[:, 0], pos[:, 1])
        return replace(self, positions=pos, amplitudes=amp)

    def scaled(self, factor):
        return replace(self, amplitudes=self.amplitudes * factor)

    def roi_mask(self, grid=None):
        """Ra inside the primary region, Rb a surrounding annulus clear of all regions."""
        grid = grid or self.grid
        zz, xx = grid.mesh()
        reg = self.regions[self.primary]
        ra = reg.contains(zz, xx, RA_SCALE)
        rb = reg.contains(zz, xx, RB_SCALE[1]) & ~reg.contains(zz, xx, RB_SCALE[0])
        for k, other in enumerate(self.regions):
            if k != self.primary and other.shape == "ellipse":
                rb &= ~other.contains(zz, xx, EXCLUDE_SCALE)
        return RoiMask(ra, rb)


def default_density(psf=None, per_cell=SCATTERERS_PER_CELL):
    psf = psf or PsfSpec()
    return per_cell / psf.resolution_cell_mm2()


def _scatter(rng, grid, density):
    (z0, z1), (x0, x1) = grid.axial, grid.lateral
    n = int(round(density * (z1 - z0) * (x1 - x0)))
    pos = np.column_stack([rng.uniform(z0, z1, n), rng.uniform(x0, x1, n)])
    return pos, rng.standard_normal(n)


def _lesion(rng, grid, placed, radius, multiplier, tries=200):
    (z0, z1), (x0, x1) = grid.axial, grid.lateral
    margin = radius * RB_SCALE[1] * 0.9
    for _ in range(tries):
        ecc = rng.uniform(0.8, 1.25)
        half = (radius * ecc, radius / ecc)
        c = (rng.uniform(z0 + margin, z1 - margin), rng.uniform(x0 + margin, x1 - margin))
        ok = all(np.hypot(c[0] - r.center[0], c[1] - r.center[1])
                 > (max(half) + max(r.half)) * RB_SCALE[1] for r in placed)
        if ok:
            return Region("ellipse", c, half, multiplier)
    return None


def _texture(rng, n=4, amp_db=TEXTURE_DB):
    # low spatial frequencies: wavelengths of 3-12 mm
    k = 2 * np.pi / rng.uniform(3.0, 12.0, n)
    theta = rng.uniform(0, 2 * np.pi, n)
    amps = rng.uniform(0.5, 1.0, n) * amp_db / np.sqrt(n / 2)
    return np.column_stack([amps, k * np.cos(theta), k * np.sin(theta), rng.uniform(0, 2 * np.pi, n)])


def make_phantom(kind, seed, grid=None, density=None, texture=None):
    """Deterministic phantom of ``kind`` for ``seed``.

    cyst: one anechoic ellipse; lesion: one hypo- or hyperechoic ellipse;
    layered: horizontal bands plus a cyst; random: 1-3 lesions of mixed contrast.
    Smooth texture (about 1.5 dB) is on for every kind except ``cyst``.
    """
    if kind not in KINDS:
        raise InvalidArgumentError(f"unknown phantom kind {kind!r}; expected one of {KINDS}")
    grid = grid or ImageGrid()
    density = default_density() if density is None else density
    rng = np.random.default_rng([seed, 3])
    zc = (grid.axial[0] + grid.axial[1]) / 2
    xc = (grid.lateral[0] + grid.lateral[1]) / 2
    regions = []
    if kind == "cyst":
        regions.append(Region("ellipse", (zc, xc), (2.5, 2.5), 0.0))
    elif kind == "lesion":
        m = rng.choice([rng.uniform(0.15, 0.4), rng.uniform(2.5, 4.0)])
        regions.append(_lesion(rng, grid, [], rng.uniform(1.8, 3.0), m))
    elif kind == "layered":
        depth = grid.axial[1] - grid.axial[0]
        width = grid.lateral[1] - grid.lateral[0]
        for k, m in enumerate(rng.uniform(0.5, 2.0, 3)):
            cz = grid.axial[0] + depth * (k + 0.5) / 3
            regions.append(Region("rect", (cz, xc), (depth / 6, width / 2), float(m)))
        regions.append(Region("ellipse", (zc + rng.uniform(-1, 1), xc + rng.uniform(-1, 1)), (2.2, 2.2), 0.0))
    else:
        count = int(rng.integers(1, 4))
        for _ in range(count):
            kind_draw = rng.random()
            if kind_draw < 0.25:
                m = 0.0
            elif kind_draw < 0.65:
                m = rng.uniform(0.1, 0.4)
            else:
                m = rng.uniform(2.5, 4.5)
            reg = _lesion(rng, grid, regions, rng.uniform(1.5, 2.8), float(m))
            if reg is not None:
                regions.append(reg)
    primary = len(regions) - 1 if kind == "layered" else 0
    use_texture = (kind != "cyst") if texture is None else texture
    tex = _texture(rng) if use_texture else np.zeros((0, 4))
    base = Phantom(kind, seed, grid, tuple(regions), np.zeros((0, 2)), np.zeros(0), tex, primary)
    return base.realize(seed, density)
