"""Embeddings psi of a compact state space into the Hilbert cube [0,1]^N.

Two realisations share one call signature ``psi(x) -> HilbertPoint``:

* :class:`CoordEmbedding` rescales box coordinates affinely and sends each
  periodic coordinate to a (sin, cos) pair so the map stays continuous across
  the seam.
* :class:`DenseEmbedding` uses normalised distances to a finite set of
  reference points (the classical distance-function embedding).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .flows import Domain


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class HilbertPoint:
    coords: np.ndarray

    def __post_init__(self):
        c = np.array(self.coords, dtype=float).ravel()
        if c.size and (c.min() < 0.0 or c.max() > 1.0):
            raise EmbeddingError(f"coordinates leave [0,1]: {c}")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def depth(self) -> int:
        return self.coords.size

    def to_json(self) -> str:
        return json.dumps([float(v) for v in self.coords])

    @classmethod
    def from_json(cls, text: str) -> "HilbertPoint":
        return cls(json.loads(text))

    def sup_distance(self, other: "HilbertPoint") -> float:
        return float(np.max(np.abs(self.coords - other.coords)))


class CoordEmbedding:
    """Affine rescaling on a box, sin/cos pairs on a torus."""

    def __init__(self, domain: Domain):
        self.domain = domain

    @property
    def depth(self) -> int:
        return 2 * self.domain.dim if self.domain.periodic else self.domain.dim

    @property
    def modulus(self) -> float:
        """Lipschitz constant of psi from the state metric to the sup norm."""
        if self.domain.periodic:
            return math.pi
        return 1.0 / min(h - l for l, h in zip(self.domain.lows, self.domain.highs))

    def coords_batch(self, xs) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if self.domain.periodic:
            ang = 2.0 * math.pi * xs
            out = np.empty((xs.shape[0], 2 * xs.shape[1]))
            out[:, 0::2] = 0.5 + 0.5 * np.sin(ang)
            out[:, 1::2] = 0.5 + 0.5 * np.cos(ang)
        else:
            lo, hi = np.array(self.domain.lows), np.array(self.domain.highs)
            out = (xs - lo) / (hi - lo)
        return np.clip(out, 0.0, 1.0)

    def __call__(self, x) -> HilbertPoint:
        return embed_coords(x, self.domain)


class DenseEmbedding:
    """Coordinate k is ``min(1, dist(x, q_k) / diam)``."""

    def __init__(self, dense: "DenseSet"):
        self.dense = dense

    @property
    def depth(self) -> int:
        return len(self.dense.points)

    @property
    def modulus(self) -> float:
        return 1.0 / self.dense.diam

    def coords_batch(self, xs) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        q = self.dense.points
        d = np.abs(xs[:, None, :] - q[None, :, :])
        if self.dense.domain.periodic:
            d = np.minimum(d, 1.0 - d)
        dist = np.sqrt(np.sum(d * d, axis=-1))
        return np.minimum(1.0, dist / self.dense.diam)

    def __call__(self, x) -> HilbertPoint:
        return embed_dense(x, self.dense)


@dataclass(frozen=True)
class DenseSet:
    points: np.ndarray
    domain: Domain
    diam: float

    def __post_init__(self):
        pts = np.atleast_2d(np.array(self.points, dtype=float))
        if pts.shape[0] == 0:
            raise EmbeddingError("dense set is empty")
        for p in pts:
            if not self.domain.contains(p):
                raise EmbeddingError(f"dense point {p} outside the domain")
        if not self.diam > 0:
            raise EmbeddingError("diam must be positive")
        object.__setattr__(self, "points", pts)

    @classmethod
    def grid(cls, domain: Domain, per_axis: int) -> "DenseSet":
        axes = [np.linspace(lo, hi, per_axis, endpoint=not domain.periodic)
                for lo, hi in zip(domain.lows, domain.highs)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
        return cls(pts, domain, domain.diameter())

    @classmethod
    def random(cls, domain: Domain, n: int, rng: np.random.Generator) -> "DenseSet":
        return cls(domain.sample(rng, n), domain, domain.diameter())

    @property
    def resolution(self) -> float:
        """Largest gap from a domain point to the nearest reference point,
        estimated on a fine probe grid."""
        probe = DenseSet.grid(self.domain, 64 if self.domain.dim == 1 else 16).points
        d = np.abs(probe[:, None, :] - self.points[None, :, :])
        if self.domain.periodic:
            d = np.minimum(d, 1.0 - d)
        return float(np.sqrt((d * d).sum(-1)).min(axis=1).max())


def embed_coords(x, domain: Domain) -> HilbertPoint:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not domain.contains(x, margin=1e-12):
        raise EmbeddingError(f"state {x} outside domain {domain}")
    return HilbertPoint(CoordEmbedding(domain).coords_batch(x)[0])


def embed_dense(x, dense: DenseSet) -> HilbertPoint:
    return HilbertPoint(DenseEmbedding(dense).coords_batch(x)[0])


@dataclass(frozen=True)
class InjectivityReport:
    pairs: int
    resolution: float
    tol: float
    # smallest image sup-distance among pairs farther apart than `resolution`
    min_separation: float
    # largest state distance among pairs whose images coincide within tol
    max_collapsed_distance: float
    passed: bool


def injectivity_check(psi, point_pairs, tol: float, distance,
                      resolution: float = 0.0) -> InjectivityReport:
    """Check that pairs of states farther apart than ``resolution`` have images
    more than ``tol`` apart in the sup norm."""
    pairs = list(point_pairs)
    xs = np.array([np.atleast_1d(p[0]) for p in pairs], dtype=float)
    ys = np.array([np.atleast_1d(p[1]) for p in pairs], dtype=float)
    img = np.max(np.abs(psi.coords_batch(xs) - psi.coords_batch(ys)), axis=1)
    sd = np.array([distance(x, y) for x, y in zip(xs, ys)])
    far = sd > resolution
    collapsed = img <= tol
    min_sep = float(img[far].min()) if far.any() else math.inf
    max_col = float(sd[collapsed].max()) if collapsed.any() else 0.0
    passed = not np.any(far & collapsed)
    return InjectivityReport(len(pairs), resolution, tol, min_sep, max_col, passed)


def make_psi(choice, domain: Domain, rng: np.random.Generator | None = None):
    """Build psi from a config entry: ``"coords"`` or
    ``{"kind": "dense", "per_axis": n}`` / ``{"kind": "dense", "points": n}``."""
    if choice in (None, "coords") or (isinstance(choice, dict) and choice.get("kind") == "coords"):
        return CoordEmbedding(domain)
    if isinstance(choice, dict) and choice.get("kind") == "dense":
        if "per_axis" in choice:
            return DenseEmbedding(DenseSet.grid(domain, int(choice["per_axis"])))
        rng = rng if rng is not None else np.random.default_rng(0)
        return DenseEmbedding(DenseSet.random(domain, int(choice.get("points", 8)), rng))
    raise EmbeddingError(f"unknown psi choice {choice!r}")
