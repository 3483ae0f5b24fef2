"""Probe and image-grid geometry shared by the simulators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError

SOUND_SPEED = 1540.0  # m/s
PITCH_MM = 0.2
N_ELEMENTS = 64
Z_START_MM = 10.0
EXTENT_MM = 12.8
DYNAMIC_RANGE_DB = 60.0


@dataclass(frozen=True)
class ImageGrid:
    """Pixel-centre grid covering ``axial`` x ``lateral`` (mm) with ``shape`` pixels."""

    shape: tuple = (64, 64)
    axial: tuple = (Z_START_MM, Z_START_MM + EXTENT_MM)
    lateral: tuple = (-EXTENT_MM / 2, EXTENT_MM / 2)

    def __post_init__(self):
        if len(self.shape) != 2 or min(self.shape) < 1:
            raise InvalidArgumentError(f"bad grid shape {self.shape}")
        if self.axial[1] <= self.axial[0] or self.lateral[1] <= self.lateral[0]:
            raise InvalidArgumentError("grid extent must be positive")

    @classmethod
    def square(cls, size=64):
        return cls((size, size))

    @property
    def dz(self):
        return (self.axial[1] - self.axial[0]) / self.shape[0]

    @property
    def dx(self):
        return (self.lateral[1] - self.lateral[0]) / self.shape[1]

    @property
    def z(self):
        return self.axial[0] + (np.arange(self.shape[0]) + 0.5) * self.dz

    @property
    def x(self):
        return self.lateral[0] + (np.arange(self.shape[1]) + 0.5) * self.dx

    def mesh(self):
        return np.meshgrid(self.z, self.x, indexing="ij")


def element_positions(n=N_ELEMENTS, pitch=PITCH_MM):
    """Lateral element centres (mm), symmetric about zero."""
    return (np.arange(n) - (n - 1) / 2) * pitch
