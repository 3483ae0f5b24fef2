"""Finite weighted point sets and their text format.

``MEAS v1 <n> <d>`` followed by ``n`` lines ``w p1 ... pd``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteMeasure:
    support: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        support = np.atleast_2d(np.asarray(self.support, dtype=np.float64))
        if support.shape[0] == 1 and np.ndim(self.support) == 1 and len(self.weights) != 1:
            support = support.T
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if support.shape[0] != weights.size:
            raise InvalidArgumentError(f"{support.shape[0]} atoms but {weights.size} weights")
        if np.any(weights < 0):
            raise InvalidArgumentError("weights must be non-negative")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise InvalidArgumentError(f"weights sum to {weights.sum()!r}, not 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self):
        return self.weights.size

    @property
    def dim(self):
        return self.support.shape[1]

    @classmethod
    def uniform(cls, points):
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n))

    @classmethod
    def dirac(cls, point):
        return cls(np.atleast_2d(np.asarray(point, dtype=np.float64)), np.ones(1))

    def mass_of(self, points):
        """Total weight on atoms equal to any of ``points``."""
        pts = {tuple(p) for p in np.atleast_2d(points)}
        return float(sum(w for p, w in zip(self.support, self.weights) if tuple(p) in pts))

    def to_text(self):
        lines = [f"MEAS v1 {self.n} {self.dim}"]
        for w, p in zip(self.weights, self.support):
            lines.append(" ".join(repr(float(v)) for v in (w, *p)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        rows = [r for r in text.strip().splitlines() if r.strip()]
        head = rows[0].split()
        if head[:2] != ["MEAS", "v1"] or len(head) != 4:
            raise InvalidArgumentError(f"bad MEAS header {rows[0]!r}")
        n, d = int(head[2]), int(head[3])
        if len(rows) - 1 != n:
            raise InvalidArgumentError(f"header says {n} atoms, found {len(rows) - 1}")
        data = np.array([[float(v) for v in r.split()] for r in rows[1:]]).reshape(n, d + 1)
        return cls(data[:, 1:], data[:, 0])


def read_measure(path):
    with open(path) as fh:
        return DiscreteMeasure.from_text(fh.read())


def write_measure(path, measure):
    with open(path, "w") as fh:
        fh.write(measure.to_text())


def pushforward(T, mu):
    """Image measure of ``mu`` under the point map ``T``; coinciding images pool their weight."""
    images = [tuple(np.atleast_1d(np.asarray(T(p), dtype=np.float64))) for p in mu.support]
    pooled = {}
    for img, w in zip(images, mu.weights):
        pooled[img] = pooled.get(img, 0.0) + w
    points = np.array(list(pooled.keys()))
    weights = np.array(list(pooled.values()))
    weights = weights / weights.sum()  # re-normalize float round-off only
    return DiscreteMeasure(points, weights)
