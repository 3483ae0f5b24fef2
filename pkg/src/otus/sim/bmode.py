"""B-mode images: log compression, the image container and its file format.

An image is stored as ``<name>.tnsr`` (TNSR v1, float32 dB pixels) plus a
sidecar ``<name>.meta`` of ``key = value`` lines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import tnsr
from ..errors import InvalidArgumentError
from .geometry import DYNAMIC_RANGE_DB

PROVENANCE = ("clean", "speckled", "das", "mla", "pw", "subsampled", "deconvolved-target", "blurred", "output")


def _check_tag(tag):
    base = tag.split("-")[0] if tag not in PROVENANCE else tag
    if base not in PROVENANCE:
        raise InvalidArgumentError(f"unknown provenance tag {tag!r}")


@dataclass
class BModeImage:
    pixels: np.ndarray  # dB, (H, W)
    axial: tuple
    lateral: tuple
    provenance: str
    dynamic_range: float = DYNAMIC_RANGE_DB
    seed: int = -1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 2:
            raise InvalidArgumentError("B-mode pixels must be 2-D")
        if not (np.isfinite(px).all() and px.max() <= 0.0 and px.min() >= -self.dynamic_range):
            raise InvalidArgumentError(f"pixels must lie in [-{self.dynamic_range}, 0] dB")
        if self.axial[1] <= self.axial[0] or self.lateral[1] <= self.lateral[0]:
            raise InvalidArgumentError("image extent must be positive")
        _check_tag(self.provenance)
        self.pixels = px

    @property
    def shape(self):
        return self.pixels.shape

    def sidecar(self):
        lines = [
            f"axial_mm = {self.axial[0]!r} {self.axial[1]!r}",
            f"lateral_mm = {self.lateral[0]!r} {self.lateral[1]!r}",
            f"dynamic_range_db = {self.dynamic_range!r}",
            f"provenance = {self.provenance}",
            f"seed = {self.seed}",
        ]
        lines += [f"meta.{k} = {v}" for k, v in sorted(self.meta.items())]
        return "\n".join(lines) + "\n"


def log_compress(envelope, dynamic_range=DYNAMIC_RANGE_DB, reference=None):
    """20 log10(env / reference) clipped to [-dynamic_range, 0]; reference defaults to the max."""
    env = np.abs(np.asarray(envelope, dtype=np.float64))
    ref = env.max() if reference is None else reference
    if ref <= 0:
        return np.full(env.shape, -float(dynamic_range))
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(env / ref)
    return np.clip(db, -dynamic_range, 0.0)


def save_image(path_stem, image):
    tnsr.save(f"{path_stem}.tnsr", image.pixels)
    with open(f"{path_stem}.meta", "w") as fh:
        fh.write(image.sidecar())


def load_image(path_stem):
    if path_stem.endswith(".tnsr"):
        path_stem = path_stem[:-5]
    pixels = tnsr.load(f"{path_stem}.tnsr")
    fields, meta = {}, {}
    with open(f"{path_stem}.meta") as fh:
        for line in fh:
            if "=" not in line:
                continue
            key, value = (s.strip() for s in line.split("=", 1))
            if key.startswith("meta."):
                meta[key[5:]] = value
            else:
                fields[key] = value
    try:
        axial = tuple(float(v) for v in fields["axial_mm"].split())
        lateral = tuple(float(v) for v in fields["lateral_mm"].split())
        return BModeImage(pixels, axial, lateral, fields["provenance"],
                          float(fields["dynamic_range_db"]), int(fields["seed"]), meta)
    except KeyError as exc:
        raise InvalidArgumentError(f"sidecar {path_stem}.meta lacks {exc}") from None
