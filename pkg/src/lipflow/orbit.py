"""The orbit map ``x -> (t -> psi(T_t x))`` into sampled sequence-valued
functions, with equivariance and continuity checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .flows import FlowSystem
from .function_space import (GRID_RTOL, Func01, FunctionSpaceError, SeqFunc,
                             restrict, translate)


@dataclass(frozen=True)
class OrbitConfig:
    """Time window ``[-T, T]`` sampled at the exact multiples ``k * step``."""

    T: float = 4.0
    step: float = 0.01
    hilbert_depth: int | None = None

    def __post_init__(self):
        if not (self.T > 0 and self.step > 0):
            raise FunctionSpaceError("T and step must be positive")
        n = self.T / self.step
        if abs(n - round(n)) > GRID_RTOL * max(1.0, n):
            raise FunctionSpaceError(f"T={self.T} is not a multiple of step={self.step}")
        if self.hilbert_depth is not None and self.hilbert_depth < 1:
            raise FunctionSpaceError("hilbert_depth must be >= 1")

    @property
    def half_nodes(self) -> int:
        return round(self.T / self.step)

    @property
    def times(self) -> np.ndarray:
        n = self.half_nodes
        return self.step * np.arange(-n, n + 1)

    @property
    def window(self):
        n = self.half_nodes
        return (-n * self.step, n * self.step)

    def with_T(self, T: float) -> "OrbitConfig":
        return OrbitConfig(T, self.step, self.hilbert_depth)


def orbit_embed(sys: FlowSystem, psi, x, cfg: OrbitConfig) -> SeqFunc:
    """Component i at grid time t is coordinate i of ``psi(T_t x)``.

    Coordinates beyond psi's own depth are the constant 0 (the remaining
    coordinates of a finite-dimensional point of the Hilbert cube).
    """
    return orbit_embed_many(sys, psi, np.atleast_1d(np.asarray(x, dtype=float))[None, :],
                            cfg)[0]


def orbit_embed_many(sys: FlowSystem, psi, xs, cfg: OrbitConfig) -> list[SeqFunc]:
    states = sys.orbits(xs, cfg.times)
    n, m, d = states.shape
    coords = psi.coords_batch(states.reshape(n * m, d)).reshape(n, m, -1)
    depth = cfg.hilbert_depth or coords.shape[2]
    keep = min(depth, coords.shape[2])
    out = []
    for c in coords:
        arr = np.zeros((depth, m))
        arr[:keep] = c[:, :keep].T
        out.append(SeqFunc.from_array(cfg.window, cfg.step, arr))
    return out


def shifted_difference(A: SeqFunc, B: SeqFunc, r: float) -> float:
    """Sup over components and common grid of ``|A(t) - B(t + r)|``."""
    worst = 0.0
    for a, b in zip(A.components, B.components):
        tb = translate(b, r)
        ta = restrict(a, tb.window)
        worst = max(worst, float(np.max(np.abs(ta.values - tb.values))))
    return worst


def equivariance_defect(sys: FlowSystem, psi, x, r: float, cfg: OrbitConfig) -> float:
    """``sup |phi(T_r x)(t) - phi(x)(t + r)|`` over the common window.

    Zero up to rounding for exact flows and grid-aligned ``r``; otherwise the
    value also carries the O(h) interpolation error of the shift.
    """
    if r == 0:
        return 0.0
    y = sys.evolve(r, x)
    return shifted_difference(orbit_embed(sys, psi, y, cfg),
                              orbit_embed(sys, psi, x, cfg), r)


def equivariance_defects(sys: FlowSystem, psi, xs, r: float, cfg: OrbitConfig,
                         base: list[SeqFunc] | None = None) -> np.ndarray:
    """Batched :func:`equivariance_defect` over the rows of ``xs``."""
    xs = np.asarray(xs, dtype=float).reshape(-1, sys.dim)
    if r == 0:
        return np.zeros(xs.shape[0])
    if base is None:
        base = orbit_embed_many(sys, psi, xs, cfg)
    ys = sys.evolve_batch(np.full(xs.shape[0], float(r)), xs)
    moved = orbit_embed_many(sys, psi, ys, cfg)
    return np.array([shifted_difference(A, B, r) for A, B in zip(moved, base)])


def continuity_defect(sys: FlowSystem, psi, x, y, cfg: OrbitConfig):
    """(state distance, sup-over-window image distance) for two states."""
    A = orbit_embed(sys, psi, x, cfg).as_array()
    B = orbit_embed(sys, psi, y, cfg).as_array()
    return sys.distance(x, y), float(np.max(np.abs(A - B)))


def continuity_budget(sys: FlowSystem, psi, state_dist: float, T: float,
                      lipschitz_bound: float | None = None) -> float:
    """Upper bound on the image distance: psi's modulus composed with the flow's
    growth ``exp(L T)`` (L = 0 for isometric rotations)."""
    if sys.kind in ("rotation", "torus-linear"):
        growth = 1.0
    else:
        growth = math.exp((lipschitz_bound or 0.0) * T)
    return psi.modulus * growth * state_dist


def window_consistency_defect(sys: FlowSystem, psi, x, cfg: OrbitConfig,
                              sub_T: float) -> float:
    """Largest difference between the orbit on ``[-sub_T, sub_T]`` and the
    restriction of the orbit on the full window."""
    full = orbit_embed(sys, psi, x, cfg)
    sub = orbit_embed(sys, psi, x, cfg.with_T(sub_T))
    return max(float(np.max(np.abs(restrict(f, s.window).values - s.values)))
               for f, s in zip(full.components, sub.components))


def write_seqfunc(F: SeqFunc, out_dir, stem: str = "component") -> Path:
    """One ``t,value`` CSV per component plus ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for i, comp in enumerate(F.components, 1):
        name = f"{stem}_{i:03d}.csv"
        comp.write_csv(out_dir / name)
        files.append(name)
    manifest = {"depth": F.depth, "window": list(F.window), "step": F.step,
                "files": files}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def read_seqfunc(manifest_path) -> SeqFunc:
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    comps = [Func01.read_csv(manifest_path.parent / f) for f in doc["files"]]
    return SeqFunc(tuple(comps))
