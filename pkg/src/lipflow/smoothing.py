"""Moving-average operators ``F_i^j(f)(t) = int_t^{t + r_j} f_i(s) ds`` with
``r_j = 1/(j+1)``, their triangular enumeration into a sequence of 1-Lipschitz
functions, and the checks that go with them.

The integral is taken exactly over the piecewise-linear interpolant of the
samples: full grid cells contribute trapezoids and the last, partial cell an
exact partial-trapezoid area. Because no quadrature error enters, the outputs
are [0, r_j]-valued and 1-Lipschitz in exact arithmetic; a final rounding
guard removes float overshoot at the ulp level so the grid certificate holds
with tolerance zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from operator import itemgetter
from pathlib import Path

import numpy as np

from .function_space import (GRID_RTOL, Func01, FunctionSpaceError, SeqFunc,
                             eval_many, is_in_L, lipschitz_defect, restrict,
                             round_guard, translate)


class SmoothingError(FunctionSpaceError):
    pass


class CertificationError(SmoothingError):
    """An output failed its [0, r_j] / 1-Lipschitz certificate."""


class PairIndex(tuple):
    """``(i, j)`` with ``1 <= i <= j``; sorts in the listing order, by j then i."""

    __slots__ = ()

    def __new__(cls, i: int, j: int):
        if not (isinstance(i, (int, np.integer)) and isinstance(j, (int, np.integer))):
            raise SmoothingError(f"pair indices must be integers, got ({i}, {j})")
        if not 1 <= i <= j:
            raise SmoothingError(f"need 1 <= i <= j, got ({i}, {j})")
        return tuple.__new__(cls, (int(i), int(j)))

    @classmethod
    def _trusted(cls, i: int, j: int) -> "PairIndex":
        return tuple.__new__(cls, (i, j))

    def __getnewargs__(self):
        return tuple(self)

    i = property(itemgetter(0))
    j = property(itemgetter(1))

    def _key(self):
        return (self[1], self[0])

    def __lt__(self, other):
        return self._key() < PairIndex._key(other)

    def __le__(self, other):
        return self._key() <= PairIndex._key(other)

    def __gt__(self, other):
        return self._key() > PairIndex._key(other)

    def __ge__(self, other):
        return self._key() >= PairIndex._key(other)

    def __repr__(self):
        return f"PairIndex(i={self[0]}, j={self[1]})"

    @property
    def r(self) -> float:
        return r_of(self[1])


def r_of(j: int) -> float:
    if j < 1:
        raise SmoothingError(f"j must be >= 1, got {j}")
    return 1.0 / (j + 1)


def pair_of(k: int) -> PairIndex:
    """k-th pair of (1,1), (1,2), (2,2), (1,3), (2,3), (3,3), ..."""
    if k < 1:
        raise SmoothingError(f"k must be >= 1, got {k}")
    # smallest j with j(j+1)/2 >= k: j(j-1)/2 < k <= j(j+1)/2 is the same as
    # (2j-1)^2 <= 8k-7 < (2j+1)^2
    k = int(k)
    j = (math.isqrt(8 * k - 7) + 1) // 2
    return PairIndex._trusted(k - j * (j - 1) // 2, j)


def index_of(p: PairIndex) -> int:
    i, j = p
    return j * (j - 1) // 2 + i


def pairs(depth_K: int) -> list[PairIndex]:
    return [pair_of(k) for k in range(1, depth_K + 1)]


@dataclass(frozen=True)
class QuadConfig:
    """``substep=None`` integrates the interpolant exactly (every grid
    breakpoint is a node). An integer ``m`` switches to an m-panel composite
    trapezoid on ``[t, t + r_j]`` that samples the interpolant."""

    substep: int | None = None

    def __post_init__(self):
        if self.substep is not None and self.substep < 1:
            raise SmoothingError("substep must be >= 1")

    @property
    def exact(self) -> bool:
        return self.substep is None

    def to_json(self) -> dict:
        return {"rule": "breakpoints" if self.exact else "uniform",
                "substep": self.substep}


def _cell_split(r: float, h: float):
    ratio = r / h
    p = round(ratio)
    if abs(ratio - p) <= GRID_RTOL * max(1.0, ratio):
        return p, 0.0
    p = math.floor(ratio)
    return p, ratio - p


def output_nodes(n: int, h: float, r: float) -> int:
    """Number of grid nodes t with t + r still inside a window of n nodes."""
    p, theta = _cell_split(r, h)
    return n - p - (1 if theta > 0 else 0)


def window_integrals(V: np.ndarray, h: float, r: float) -> np.ndarray:
    """Exact integrals of the row-wise linear interpolants over ``[t_k, t_k + r]``.

    ``V`` has shape (m, n). The result for node k depends only on the samples
    ``V[:, k : k + p + 2]`` and is computed in a fixed order, so shifting the
    input by whole cells shifts the output bit-for-bit.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    n = V.shape[1]
    p, theta = _cell_split(r, h)
    n_out = n - p - (1 if theta > 0 else 0)
    if n_out < 2:
        raise SmoothingError(
            f"window of {(n - 1) * h:g} too short for r={r:g}: need at least "
            f"{r + h:g} of data beyond the first output node")
    acc = np.zeros((V.shape[0], n_out))
    for q in range(p):
        acc += V[:, q:q + n_out] + V[:, q + 1:q + 1 + n_out]
    out = acc * (0.5 * h)
    if theta > 0:
        v0 = V[:, p:p + n_out]
        v1 = V[:, p + 1:p + 1 + n_out]
        out += (theta * h) * (v0 + 0.5 * theta * (v1 - v0))
    return out


def _uniform_integrals(f: Func01, r: float, m: int) -> np.ndarray:
    n_out = output_nodes(f.values.size, f.step, r)
    t = f.window[0] + f.step * np.arange(n_out)
    nodes = t[:, None] + r * (np.arange(m + 1) / m)[None, :]
    vals = eval_many(f, nodes.ravel()).reshape(nodes.shape)
    w = np.full(m + 1, 1.0)
    w[0] = w[-1] = 0.5
    return (vals @ w) * (r / m)


def smooth(f: SeqFunc, p: PairIndex, quad: QuadConfig = QuadConfig(),
           out_window=None) -> Func01:
    """``F_i^j(f)`` sampled on f's grid; the window loses ``r_j`` on the right."""
    if f.depth < p.i:
        raise SmoothingError(f"component {p.i} requested from depth-{f.depth} input")
    r = r_of(p.j)
    comp = f[p.i]
    a, b = comp.window
    if b - a <= r:
        raise SmoothingError(
            f"window [{a:g}, {b:g}] needs a margin of r_j={r:g} beyond the output")
    if quad.exact:
        vals = window_integrals(comp.values[None, :], comp.step, r)[0]
        vals = round_guard(vals, comp.step, upper=r)
    else:
        vals = np.clip(_uniform_integrals(comp, r, quad.substep), 0.0, r)
    out = Func01.from_start(a, comp.step, vals)
    if out_window is not None:
        if out_window[1] + r > b * (1 + GRID_RTOL) + GRID_RTOL:
            raise SmoothingError(
                f"output window {out_window} needs data up to {out_window[1] + r:g}, "
                f"input ends at {b:g}")
        out = restrict(out, out_window)
    return out


@dataclass(frozen=True)
class UniversalPoint:
    entries: tuple[Func01, ...]
    meta: tuple[tuple[PairIndex, float], ...] = field(repr=False)

    def __post_init__(self):
        if len(self.entries) != len(self.meta):
            raise SmoothingError("entries and meta differ in length")

    @property
    def depth(self) -> int:
        return len(self.entries)

    def entry(self, p: PairIndex) -> Func01:
        return self.entries[index_of(p) - 1]

    def certify(self, tol: float = 0.0) -> list[int]:
        """1-based indices of entries failing the L membership or r_j bound."""
        bad = []
        for k, (e, (_, r)) in enumerate(zip(self.entries, self.meta), 1):
            if not is_in_L(e, tol) or e.values.max() > r:
                bad.append(k)
        return bad

    def require_certified(self, tol: float = 0.0) -> None:
        bad = self.certify(tol)
        if bad:
            raise CertificationError(f"entries {bad} fail the Lipschitz/range certificate")

    def write(self, out_dir, stem: str = "entry") -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        rows = []
        for k, (e, (p, r)) in enumerate(zip(self.entries, self.meta), 1):
            name = f"{stem}_{k:03d}.csv"
            e.write_csv(out_dir / name)
            rows.append({"k": k, "i": p.i, "j": p.j, "r_j": r, "file": name})
        first = self.entries[0]
        manifest = {"depth_K": self.depth, "pairs": rows,
                    "window": list(first.window), "step": first.step}
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, manifest_path) -> "UniversalPoint":
        manifest_path = Path(manifest_path)
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
        entries, meta = [], []
        for row in doc["pairs"]:
            entries.append(Func01.read_csv(manifest_path.parent / row["file"]))
            meta.append((PairIndex(row["i"], row["j"]), float(row["r_j"])))
        return cls(tuple(entries), tuple(meta))


def universal_embed(f: SeqFunc, depth_K: int = 21,
                    quad: QuadConfig = QuadConfig()) -> UniversalPoint:
    """First ``depth_K`` entries of ``F(f)`` in the triangular order.

    All entries are cut to the window of the j=1 entry (the largest margin,
    r_1 = 1/2) so they share one grid.
    """
    if depth_K < 1:
        raise SmoothingError("depth_K must be >= 1")
    plist = pairs(depth_K)
    need = max(p.i for p in plist)
    if f.depth < need:
        raise SmoothingError(f"depth_K={depth_K} needs {need} components, input has {f.depth}")
    a, b = f.window
    if b - a <= r_of(1) + f.step:
        raise SmoothingError(f"window [{a:g}, {b:g}] shorter than the margin 1/2 plus one step")
    n_common = output_nodes(len(f[1]), f.step, r_of(1))
    V = f.as_array()
    by_j = {}
    for j in sorted({p.j for p in plist}):
        r = r_of(j)
        if quad.exact:
            rows = window_integrals(V[:j], f.step, r)
        else:
            rows = np.stack([_uniform_integrals(f[i], r, quad.substep)
                             for i in range(1, j + 1)])
        by_j[j] = rows
    entries, meta = [], []
    for p in plist:
        r = r_of(p.j)
        vals = by_j[p.j][p.i - 1][:n_common]
        vals = round_guard(vals, f.step, upper=r) if quad.exact else np.clip(vals, 0.0, r)
        entries.append(Func01.from_start(a, f.step, vals))
        meta.append((p, r))
    return UniversalPoint(tuple(entries), tuple(meta))


def smoothing_equivariance_defect(f: SeqFunc, r: float, p: PairIndex,
                                  quad: QuadConfig = QuadConfig()) -> float:
    """``sup |F_i^j(T_r f)(t) - F_i^j(f)(t + r)|`` on the common grid."""
    if r == 0:
        return 0.0
    lhs = smooth(f.map(lambda c: translate(c, r)), p, quad)
    rhs = translate(smooth(f, p, quad), r)
    lo = max(lhs.window[0], rhs.window[0])
    hi = min(lhs.window[1], rhs.window[1])
    lhs, rhs = restrict(lhs, (lo, hi)), restrict(rhs, (lo, hi))
    return float(np.max(np.abs(lhs.values - rhs.values)))


def derivative_identity_defect(f: SeqFunc, p: PairIndex,
                               quad: QuadConfig = QuadConfig()) -> float:
    """Sup over interior nodes of ``|central difference of F_i^j(f) -
    (f_i(t + r_j) - f_i(t))|``."""
    F = smooth(f, p, quad)
    comp = f[p.i]
    h = F.step
    if len(F) < 3:
        raise SmoothingError("need one extra grid node of margin on each side")
    t = F.times[1:-1]
    cd = (F.values[2:] - F.values[:-2]) / (2.0 * h)
    ident = eval_many(comp, t + p.r) - comp.values[1:len(F) - 1]
    return float(np.max(np.abs(cd - ident)))


@dataclass(frozen=True)
class Witness:
    pair: PairIndex
    t: float
    # positive by construction: sign * (F(f)(t) - F(g)(t))
    gap: float
    # +1 when f_i > g_i on the run, -1 when g_i > f_i
    sign: int
    interval: tuple[float, float]


def _runs(mask: np.ndarray):
    """(start, stop) index pairs of maximal True runs, stop exclusive."""
    m = np.concatenate([[False], mask, [False]]).astype(np.int8)
    d = np.diff(m)
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def separation_witness(f: SeqFunc, g: SeqFunc, tol: float = 1e-12,
                       quad: QuadConfig = QuadConfig(),
                       depth_K: int | None = None) -> Witness | None:
    """Constructive version of the injectivity step.

    Scans components in increasing i, and within a component the runs of
    either sign in time order, for a run of at least two grid cells on which
    ``f_i - g_i`` keeps one sign with magnitude above ``tol``. On that run
    (a, b) it takes the smallest j > i for which some grid node t has
    ``a < t < t + r_j < b`` and returns the resulting gap of the averages,
    which is positive because the integrand is. With ``depth_K`` only pairs
    among the first ``depth_K`` entries are eligible, so a run too short for
    such a pair is skipped. Returns ``None`` if nothing qualifies.
    """
    if f.depth != g.depth or not f[1].same_grid(g[1]):
        raise SmoothingError("f and g must share depth, window and step")
    h = f.step
    for i in range(1, f.depth + 1):
        if depth_K is not None and index_of(PairIndex(i, i + 1)) > depth_K:
            break
        d = f[i].values - g[i].values
        runs = sorted((start, stop, sign) for sign in (1, -1)
                      for start, stop in _runs(sign * d > tol))
        for start, stop, sign in runs:
            cells = stop - 1 - start
            if cells < 2:
                continue
            # t = node start+1; need t + r_j < node stop-1, i.e. r_j < (cells-1) h
            span = (cells - 1) * h
            j = max(i + 1, math.floor(1.0 / span))
            while r_of(j) >= span:
                j += 1
            while j - 1 > i and r_of(j - 1) < span:
                j -= 1
            pair = PairIndex(i, j)
            if depth_K is not None and index_of(pair) > depth_K:
                continue
            k = start + 1
            Ff = smooth(f, pair, quad)
            Fg = smooth(g, pair, quad)
            gap = sign * (Ff.values[k] - Fg.values[k])
            a_t, b_t = f[i].times[start], f[i].times[stop - 1]
            return Witness(pair, float(f[i].times[k]), float(gap), sign,
                           (float(a_t), float(b_t)))
    return None


def linearity_defect(f: SeqFunc, g: SeqFunc, alpha: float, p: PairIndex,
                     quad: QuadConfig = QuadConfig()) -> float:
    mix = SeqFunc.from_array(f.window, f.step,
                             alpha * f.as_array() + (1 - alpha) * g.as_array())
    lhs = smooth(mix, p, quad).values
    rhs = alpha * smooth(f, p, quad).values + (1 - alpha) * smooth(g, p, quad).values
    return float(np.max(np.abs(lhs - rhs)))


def certificate_defect(F: Func01, r: float) -> float:
    """``max(lipschitz_defect, max value - r, -min value)``; ``<= 0`` certifies."""
    return max(lipschitz_defect(F), float(F.values.max() - r), float(-F.values.min()))
