"""Region contrast metrics: CR, CNR and GCNR, plus ROI masks and CSV reports.

Metrics run on dB pixels by default. ``mode="linear"`` converts the dB image
back to envelope amplitude first (``10**(dB/20)``).
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVarianceError, InvalidArgumentError

DEFAULT_BINS = 100
MIN_GCNR_PIXELS = 10
REPORT_COLUMNS = ("label", "frame_id", "cr_db", "cnr", "gcnr", "recon_ms")


def _pixels(image):
    return np.asarray(getattr(image, "pixels", image), dtype=np.float64)


@dataclass(frozen=True)
class RoiMask:
    """Two disjoint boolean regions over one image shape."""

    ra: np.ndarray
    rb: np.ndarray

    def __post_init__(self):
        ra = np.asarray(self.ra, dtype=bool)
        rb = np.asarray(self.rb, dtype=bool)
        if ra.shape != rb.shape or ra.ndim != 2:
            raise InvalidArgumentError("Ra and Rb must be 2-D masks of one shape")
        if not ra.any() or not rb.any():
            raise InvalidArgumentError("empty region in ROI mask")
        if (ra & rb).any():
            raise InvalidArgumentError("Ra and Rb overlap")
        object.__setattr__(self, "ra", ra)
        object.__setattr__(self, "rb", rb)

    @property
    def shape(self):
        return self.ra.shape

    @classmethod
    def from_indices(cls, shape, ra_idx, rb_idx):
        """Build from flat pixel indices; out-of-range indices are rejected."""
        size = int(np.prod(shape))
        masks = []
        for idx in (ra_idx, rb_idx):
            idx = np.asarray(idx, dtype=np.int64).ravel()
            if idx.size and (idx.min() < 0 or idx.max() >= size):
                raise InvalidArgumentError("ROI index out of bounds")
            m = np.zeros(size, dtype=bool)
            m[idx] = True
            masks.append(m.reshape(shape))
        return cls(*masks)

    def to_text(self):
        h, w = self.shape
        grid = np.full(self.shape, ".", dtype="<U1")
        grid[self.ra] = "a"
        grid[self.rb] = "b"
        return f"MASK v1 {h} {w}\n" + "\n".join("".join(r) for r in grid) + "\n"

    @classmethod
    def from_text(cls, text):
        rows = text.strip("\n").split("\n")
        head = rows[0].split()
        if head[:2] != ["MASK", "v1"] or len(head) != 4:
            raise InvalidArgumentError(f"bad MASK header {rows[0]!r}")
        h, w = int(head[2]), int(head[3])
        body = rows[1:]
        if len(body) != h or any(len(r) != w for r in body):
            raise InvalidArgumentError(f"mask body does not match {h}x{w}")
        grid = np.array([list(r) for r in body])
        if not np.isin(grid, [".", "a", "b"]).all():
            raise InvalidArgumentError("mask characters must be '.', 'a' or 'b'")
        return cls(grid == "a", grid == "b")

    def check_image(self, pixels):
        if pixels.shape != self.shape:
            raise InvalidArgumentError(f"mask shape {self.shape} does not match image {pixels.shape}")


def read_mask(path):
    with open(path) as fh:
        return RoiMask.from_text(fh.read())


def write_mask(path, mask):
    with open(path, "w") as fh:
        fh.write(mask.to_text())


@dataclass
class RegionStats:
    mean: float
    std: float
    count: int
    edges: np.ndarray
    hist: np.ndarray


def _values(image, mask, mode):
    px = _pixels(image)
    mask.check_image(px)
    if mode == "linear":
        px = 10.0 ** (px / 20.0)
    elif mode != "db":
        raise InvalidArgumentError(f"unknown metric mode {mode!r}")
    a, b = px[mask.ra], px[mask.rb]
    # anchoring at the joint minimum makes exactly representable global shifts cancel bit-for-bit
    ref = min(a.min(), b.min())
    return a - ref, b - ref


def shared_edges(a, b, bins=DEFAULT_BINS):
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi == lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, bins + 1)


def region_stats(values, edges):
    counts, _ = np.histogram(values, bins=edges)
    return RegionStats(float(values.mean()), float(values.std()), int(values.size), edges,
                       counts / counts.sum())


def cr(image, mask, mode="db"):
    """|mean(Ra) - mean(Rb)|; in dB for the default mode."""
    a, b = _values(image, mask, mode)
    return float(abs(a.mean() - b.mean()))


def cnr(image, mask, mode="db"):
    a, b = _values(image, mask, mode)
    denom = np.sqrt(a.var() + b.var())
    if denom == 0.0:
        raise DegenerateVarianceError("both regions are constant; CNR undefined")
    return float(abs(a.mean() - b.mean()) / denom)


def gcnr(image, mask, bins=DEFAULT_BINS, mode="db"):
    """1 - histogram overlap of the two regions over shared equal-width bins."""
    a, b = _values(image, mask, mode)
    if a.size < MIN_GCNR_PIXELS or b.size < MIN_GCNR_PIXELS:
        raise InvalidArgumentError(f"GCNR needs at least {MIN_GCNR_PIXELS} pixels per region")
    edges = shared_edges(a, b, bins)
    pa = region_stats(a, edges).hist
    pb = region_stats(b, edges).hist
    return float(np.clip(1.0 - np.minimum(pa, pb).sum(), 0.0, 1.0))


def all_metrics(image, mask, bins=DEFAULT_BINS, mode="db", strict=True):
    """CR, CNR and GCNR; with ``strict=False`` an undefined CNR becomes NaN instead of raising."""
    try:
        c = cnr(image, mask, mode)
    except DegenerateVarianceError:
        if strict:
            raise
        c = float("nan")
    return {"cr_db": cr(image, mask, mode), "cnr": c, "gcnr": gcnr(image, mask, bins, mode)}


def timed(fn, *args, **kwargs):
    """Run ``fn`` and return (result, elapsed milliseconds)."""
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, (time.perf_counter() - t0) * 1e3


def report_rows(images, masks, label, frame_ids=None, recon_ms=None, bins=DEFAULT_BINS, mode="db",
                strict=True):
    """One dict per image with the report columns; ``masks`` is one mask or a list."""
    if isinstance(masks, RoiMask):
        masks = [masks] * len(images)
    frame_ids = list(range(len(images))) if frame_ids is None else list(frame_ids)
    recon_ms = [float("nan")] * len(images) if recon_ms is None else list(recon_ms)
    rows = []
    for img, m, fid, ms in zip(images, masks, frame_ids, recon_ms):
        row = {"label": label, "frame_id": fid}
        row.update(all_metrics(img, m, bins, mode, strict))
        row["recon_ms"] = ms
        rows.append(row)
    return rows


def summary_row(rows, label, frame_id="mean"):
    out = {"label": label, "frame_id": frame_id}
    for key in ("cr_db", "cnr", "gcnr", "recon_ms"):
        vals = np.array([r[key] for r in rows], dtype=np.float64)
        out[key] = float(vals.mean()) if vals.size else float("nan")
    return out


def _fmt(v):
    if isinstance(v, float):
        return "nan" if np.isnan(v) else f"{v:.6f}"
    return str(v)


def report_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(r[c]) for c in REPORT_COLUMNS])
    return buf.getvalue()


def report(images, masks, label, **kwargs):
    """CSV text for ``images``; an empty list gives the header alone."""
    return report_csv(report_rows(images, masks, label, **kwargs))


def read_report(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for key in ("cr_db", "cnr", "gcnr", "recon_ms"):
            r[key] = float(r[key])
    return rows
