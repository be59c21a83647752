"""Sampled [0,1]-valued functions on finite windows, the uniform-on-compacts
metric, the translation action, and membership checks for the space of
1-Lipschitz functions.

A :class:`Func01` stores samples on a uniform grid ``a, a+h, ..., b`` and is
evaluated by piecewise-linear interpolation. Linear interpolation keeps both
the range and the Lipschitz constant of the samples, so a function certified on
the grid is certified everywhere on its window.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# relative slack used when deciding whether a float is "on the grid"
GRID_RTOL = 1e-9


class FunctionSpaceError(ValueError):
    """Raised on malformed functions or incompatible grids."""


def _node_count(a: float, b: float, h: float) -> int:
    if not (b > a):
        raise FunctionSpaceError(f"empty window [{a}, {b}]")
    if not (h > 0):
        raise FunctionSpaceError(f"grid step must be positive, got {h}")
    cells = (b - a) / h
    k = round(cells)
    if abs(cells - k) > GRID_RTOL * max(1.0, cells):
        raise FunctionSpaceError(
            f"window length {b - a} is not a multiple of step {h}")
    return k + 1


@dataclass(frozen=True)
class Func01:
    """Samples of a continuous function into [0,1] on the grid of ``window``."""

    window: tuple[float, float]
    step: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        a, b = (float(w) for w in self.window)
        object.__setattr__(self, "window", (a, b))
        object.__setattr__(self, "step", float(self.step))
        vals = np.array(self.values, dtype=float)
        n = _node_count(a, b, self.step)
        if vals.ndim != 1 or vals.size != n:
            raise FunctionSpaceError(
                f"expected {n} samples on {self.window} with step {self.step}, "
                f"got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise FunctionSpaceError("samples must be finite")
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise FunctionSpaceError(
                f"samples leave [0,1]: range [{vals.min()}, {vals.max()}]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_start(cls, start: float, step: float, values) -> "Func01":
        values = np.asarray(values, dtype=float)
        return cls((start, start + step * (values.size - 1)), step, values)

    @classmethod
    def sample(cls, fn, window, step) -> "Func01":
        """Sample a vectorised callable on the grid of ``window``."""
        a, b = window
        n = _node_count(a, b, step)
        return cls((a, b), step, fn(a + step * np.arange(n)))

    @property
    def times(self) -> np.ndarray:
        return self.window[0] + self.step * np.arange(self.values.size)

    def __len__(self):
        return self.values.size

    def same_grid(self, other: "Func01") -> bool:
        tol = GRID_RTOL * self.step
        return (self.values.size == other.values.size
                and abs(self.step - other.step) <= tol
                and abs(self.window[0] - other.window[0]) <= tol)

    # -- serialization -------------------------------------------------------
    def to_json(self) -> dict:
        return {"window": list(self.window), "step": self.step,
                "values": self.values.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Func01":
        return cls(tuple(obj["window"]), obj["step"], obj["values"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,value\n")
        for t, v in zip(self.times, self.values):
            buf.write(f"{t:.17g},{v:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Func01":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["t", "value"]:
            raise FunctionSpaceError("CSV header must be 't,value'")
        data = np.array([[float(x) for x in r] for r in rows[1:] if r])
        if data.shape[0] < 2:
            raise FunctionSpaceError("need at least two samples")
        a, b = data[0, 0], data[-1, 0]
        return cls((a, b), (b - a) / (data.shape[0] - 1), data[:, 1])

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8", newline="\n")

    @classmethod
    def read_csv(cls, path) -> "Func01":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class SeqFunc:
    """Finite truncation ``(f_1, ..., f_M)`` of a function R -> [0,1]^N."""

    components: tuple[Func01, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise FunctionSpaceError("SeqFunc needs at least one component")
        first = comps[0]
        for c in comps[1:]:
            if not first.same_grid(c):
                raise FunctionSpaceError("components must share window and step")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_array(cls, window, step, array) -> "SeqFunc":
        return cls(tuple(Func01(window, step, row) for row in np.atleast_2d(array)))

    @property
    def depth(self) -> int:
        return len(self.components)

    @property
    def window(self):
        return self.components[0].window

    @property
    def step(self):
        return self.components[0].step

    @property
    def times(self):
        return self.components[0].times

    def as_array(self) -> np.ndarray:
        return np.stack([c.values for c in self.components])

    def __getitem__(self, i: int) -> Func01:
        """1-based component access, matching the usual ``f_i`` indexing."""
        if not 1 <= i <= self.depth:
            raise IndexError(f"component {i} outside 1..{self.depth}")
        return self.components[i - 1]

    def map(self, fn) -> "SeqFunc":
        return SeqFunc(tuple(fn(c) for c in self.components))


@dataclass(frozen=True)
class MetricConfig:
    depth_N: int = 10
    eval_step: float | None = None

    def __post_init__(self):
        if self.depth_N < 1:
            raise FunctionSpaceError("depth_N must be >= 1")
        if self.eval_step is not None and not self.eval_step > 0:
            raise FunctionSpaceError("eval_step must be positive")


def _grid_position(f: Func01, t: float) -> float:
    a, b = f.window
    slack = GRID_RTOL * f.step
    if t < a - slack or t > b + slack:
        raise FunctionSpaceError(f"t={t} outside window [{a}, {b}]")
    return (t - a) / f.step


def eval(f: Func01, t: float) -> float:
    """Piecewise-linear interpolant of ``f`` at ``t``; grid nodes are exact."""
    u = _grid_position(f, t)
    n = f.values.size
    k = round(u)
    if abs(u - k) <= GRID_RTOL:
        return float(f.values[min(max(k, 0), n - 1)])
    k = min(int(math.floor(u)), n - 2)
    theta = u - k
    v0, v1 = f.values[k], f.values[k + 1]
    return float(v0 + theta * (v1 - v0))


def eval_many(f: Func01, ts) -> np.ndarray:
    """Vectorised :func:`eval`."""
    ts = np.asarray(ts, dtype=float)
    a, b = f.window
    slack = GRID_RTOL * f.step
    if ts.size and (ts.min() < a - slack or ts.max() > b + slack):
        raise FunctionSpaceError(f"evaluation points leave window [{a}, {b}]")
    u = (ts - a) / f.step
    n = f.values.size
    k_near = np.rint(u)
    on_grid = np.abs(u - k_near) <= GRID_RTOL
    k = np.clip(np.floor(u).astype(int), 0, n - 2)
    theta = u - k
    out = f.values[k] + theta * (f.values[k + 1] - f.values[k])
    idx = np.clip(k_near.astype(int), 0, n - 1)
    return np.where(on_grid, f.values[idx], out)


def _grid_shift(r: float, h: float) -> int | None:
    m = round(r / h)
    if abs(r - m * h) <= GRID_RTOL * h:
        return m
    return None


def translate(f: Func01, r: float) -> Func01:
    """``g(t) = f(t + r)`` on the part of ``f``'s grid where both are defined.

    Grid-aligned shifts are pure index shifts. Other shifts resample the
    interpolant and carry its O(h) error.
    """
    a, b = f.window
    h = f.step
    n = f.values.size
    if abs(r) * 2 >= (b - a):
        raise FunctionSpaceError(
            f"shift {r} too large for window of length {b - a}")
    m = _grid_shift(r, h)
    if m is not None:
        if m >= 0:
            vals = f.values[m:]
            start = a
        else:
            vals = f.values[:n + m]
            start = a + (-m) * h
        return Func01.from_start(start, h, vals)
    # nodes t of f's grid with a <= t + r <= b
    lo = max(0, math.ceil((-r) / h - GRID_RTOL))
    hi = min(n - 1, math.floor((n - 1) - r / h + GRID_RTOL))
    if hi - lo < 1:
        raise FunctionSpaceError(f"shift {r} leaves fewer than two nodes")
    ts = a + h * np.arange(lo, hi + 1)
    vals = np.clip(eval_many(f, ts + r), 0.0, 1.0)
    return Func01.from_start(a + lo * h, h, vals)


def restrict(f: Func01, window) -> Func01:
    """Restrict ``f`` to a sub-window whose endpoints lie on ``f``'s grid."""
    a, b = f.window
    lo_u = _grid_position(f, window[0])
    hi_u = _grid_position(f, window[1])
    lo, hi = round(lo_u), round(hi_u)
    if abs(lo_u - lo) > GRID_RTOL or abs(hi_u - hi) > GRID_RTOL:
        raise FunctionSpaceError(f"window {window} is not on the grid of f")
    return Func01.from_start(a + lo * f.step, f.step, f.values[lo:hi + 1])


def common_window(f: Func01, g: Func01):
    return max(f.window[0], g.window[0]), min(f.window[1], g.window[1])


def _check_grids(f: Func01, g: Func01) -> None:
    if not f.same_grid(g):
        raise FunctionSpaceError(
            f"grids differ: {f.window}/{f.step} vs {g.window}/{g.step}")


def _stride(f: Func01, cfg: MetricConfig) -> int:
    if cfg.eval_step is None:
        return 1
    s = cfg.eval_step / f.step
    k = round(s)
    if k < 1 or abs(s - k) > GRID_RTOL * s:
        raise FunctionSpaceError("eval_step must be a multiple of the grid step")
    return k


def metric(f: Func01, g: Func01, cfg: MetricConfig = MetricConfig()) -> float:
    """Truncated sum of ``2^-n * max_{|t|<=n} |f(t) - g(t)|`` over n = 1..N.

    The discarded tail is at most ``2^-N``; the max runs over grid nodes only.
    """
    _check_grids(f, g)
    k = _stride(f, cfg)
    t = f.times[::k]
    d = np.abs(f.values[::k] - g.values[::k])
    abst = np.abs(t)
    total = 0.0
    for n in range(1, cfg.depth_N + 1):
        mask = abst <= n * (1 + GRID_RTOL)
        if mask.any():
            total += math.ldexp(float(d[mask].max()), -n)
    return total


def seq_metric(F: SeqFunc, G: SeqFunc, cfg: MetricConfig = MetricConfig()) -> float:
    """Product metric ``sum_m 2^-m metric(F_m, G_m)``."""
    if F.depth != G.depth:
        raise FunctionSpaceError(f"depth mismatch: {F.depth} vs {G.depth}")
    return sum(math.ldexp(metric(f, g, cfg), -m)
               for m, (f, g) in enumerate(zip(F.components, G.components), 1))


def lipschitz_defect(f: Func01) -> float:
    """Worst ``|f(t+h) - f(t)| - h`` over adjacent nodes; ``<= 0`` is 1-Lipschitz."""
    return float(np.max(np.abs(np.diff(f.values))) - f.step)


def is_in_L(f: Func01, tol: float = 0.0) -> bool:
    if tol < 0:
        raise FunctionSpaceError("tol must be nonnegative")
    v = f.values
    return bool(v.min() >= 0.0 and v.max() <= 1.0 and lipschitz_defect(f) <= tol)


def round_guard(values: np.ndarray, h: float, upper: float = 1.0,
                slack: float = 1e-12) -> np.ndarray:
    """Remove floating-point overshoot from samples that are exactly
    1-Lipschitz and ``[0, upper]``-valued in exact arithmetic.

    Each violating pair is closed by resetting the later sample to the earlier
    one plus or minus h, then stepping it toward the earlier one by single ulps
    until the computed difference is at most h. The pass follows the chain forward,
    since the moved sample may now overshoot its own successor. Excesses larger
    than ``slack`` are genuine and left alone.
    """
    v = np.clip(np.array(values, dtype=float), 0.0, upper)
    excess = np.abs(np.diff(v)) - h
    todo = np.flatnonzero((excess > 0) & (excess <= slack))
    k_done = -1
    for k in todo:
        if k <= k_done:
            continue
        while k < v.size - 1:
            e = abs(v[k + 1] - v[k]) - h
            if not 0 < e <= slack:
                break
            v[k + 1] = v[k] + math.copysign(h, v[k + 1] - v[k])
            while abs(v[k + 1] - v[k]) > h:
                v[k + 1] = np.nextafter(v[k + 1], v[k])
            k_done = k
            k += 1
    return v


def epsilon_net(eps: float, window, step: float, cap: int = 100_000) -> list[Func01]:
    """Finite family of 1-Lipschitz piecewise-linear functions covering every
    1-Lipschitz [0,1]-valued function on ``window`` to uniform distance ``eps``.

    Knots are spaced ``tau <= eps/2`` in time; knot values lie on the grid
    ``{0, tau, 2 tau, ...}`` and consecutive knot values differ by at most one
    level. Rounding a member down to the level grid at each knot costs < tau,
    interpolation between knots costs <= tau/2, so the net is a 1.5*tau <= 0.75
    eps cover.
    """
    if not eps > 0:
        raise FunctionSpaceError("eps must be positive")
    a, b = window
    n_grid = _node_count(a, b, step)
    cells = math.ceil((b - a) / (eps / 2) - GRID_RTOL)
    tau = (b - a) / cells
    levels = math.floor(1.0 / tau + GRID_RTOL) + 1
    # number of level paths with |jump| <= 1, counted by dynamic programming
    counts = np.ones(levels, dtype=object)
    for _ in range(cells):
        nxt = counts.copy()
        nxt[1:] += counts[:-1]
        nxt[:-1] += counts[1:]
        counts = nxt
    size = int(sum(counts))
    if size > cap:
        raise FunctionSpaceError(
            f"epsilon net has {size} elements, exceeding cap {cap}; "
            f"pass cap >= {size}")
    knots = a + tau * np.arange(cells + 1)
    knots[-1] = b
    grid = a + step * np.arange(n_grid)
    net = []

    def extend(path):
        if len(path) == cells + 1:
            vals = np.interp(grid, knots, np.minimum(np.array(path) * tau, 1.0))
            net.append(Func01((a, b), step, round_guard(vals, step)))
            return
        last = path[-1]
        for nxt in (last - 1, last, last + 1):
            if 0 <= nxt < levels:
                extend(path + [nxt])

    for start in range(levels):
        extend([start])
    return net


def net_projection(f: Func01, eps: float) -> np.ndarray:
    """Knot levels of the net element that the covering argument assigns to f."""
    a, b = f.window
    cells = math.ceil((b - a) / (eps / 2) - GRID_RTOL)
    tau = (b - a) / cells
    knots = a + tau * np.arange(cells + 1)
    knots[-1] = b
    return np.floor(eval_many(f, knots) / tau + GRID_RTOL).astype(int)


def sup_distance(f: Func01, g: Func01) -> float:
    _check_grids(f, g)
    return float(np.max(np.abs(f.values - g.values)))


def write_json(f: Func01, path) -> None:
    Path(path).write_text(json.dumps(f.to_json()), encoding="utf-8")


def read_json(path) -> Func01:
    return Func01.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


__all__ = [
    "Func01", "SeqFunc", "MetricConfig", "FunctionSpaceError",
    "eval", "eval_many", "translate", "restrict", "common_window",
    "metric", "seq_metric", "lipschitz_defect", "is_in_L", "round_guard",
    "epsilon_net", "net_projection", "sup_distance",
]
