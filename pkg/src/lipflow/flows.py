"""Concrete flows ``(X, T_t)``: circle rotation, linear torus flows and
fixed-step RK4 flows of planar vector fields with a compact invariant set."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np


class FlowError(ValueError):
    pass


@dataclass(frozen=True)
class Domain:
    """Compact state domain: a coordinate box, a d-torus, or the circle.

    Torus and circle coordinates live in ``[0, 1)``.
    """

    kind: str
    lows: tuple[float, ...]
    highs: tuple[float, ...]

    @classmethod
    def box(cls, lows, highs) -> "Domain":
        lows, highs = tuple(map(float, lows)), tuple(map(float, highs))
        if len(lows) != len(highs) or any(h <= l for l, h in zip(lows, highs)):
            raise FlowError(f"bad box {lows} x {highs}")
        return cls("box", lows, highs)

    @classmethod
    def torus(cls, dim: int) -> "Domain":
        return cls("circle" if dim == 1 else "torus", (0.0,) * dim, (1.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lows)

    @property
    def periodic(self) -> bool:
        return self.kind in ("torus", "circle")

    def contains(self, x, margin: float = 0.0) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            return False
        lo, hi = np.array(self.lows), np.array(self.highs)
        if self.periodic:
            return bool(np.all(x >= 0.0) and np.all(x < 1.0))
        return bool(np.all(x >= lo - margin) and np.all(x <= hi + margin))

    def distance(self, x, y) -> float:
        """Euclidean distance; periodic coordinates wrap around."""
        d = np.abs(np.atleast_1d(np.asarray(x, dtype=float))
                   - np.atleast_1d(np.asarray(y, dtype=float)))
        if self.periodic:
            d = np.minimum(d, 1.0 - d)
        return float(np.sqrt(np.sum(d * d)))

    def diameter(self) -> float:
        if self.periodic:
            return 0.5 * math.sqrt(self.dim)
        return float(np.linalg.norm(np.array(self.highs) - np.array(self.lows)))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        lo, hi = np.array(self.lows), np.array(self.highs)
        return lo + (hi - lo) * rng.random((n, self.dim))


@dataclass(frozen=True)
class VectorField:
    dim: int
    f: Callable[[np.ndarray], np.ndarray]
    lipschitz_bound: float
    name: str = "custom"
    # optional membership test for the invariant set inside the bounding box
    invariant: Callable[[np.ndarray], bool] | None = field(default=None, compare=False)


@dataclass(frozen=True)
class FlowSystem:
    """A flow on a compact domain.

    ``evolve(t, x)`` is the reference evaluation. ``evolve_batch`` and
    ``orbit`` are optional vectorised paths; when absent they fall back to
    repeated ``evolve`` calls.
    """

    dim: int
    domain: Domain
    evolve: Callable[[float, np.ndarray], np.ndarray] = field(compare=False)
    kind: str
    params: dict = field(default_factory=dict, compare=False)
    rk_step: float | None = None
    batch: Callable | None = field(default=None, compare=False, repr=False)
    orbit_path: Callable | None = field(default=None, compare=False, repr=False)

    def __call__(self, t, x):
        return self.evolve(t, x)

    def evolve_batch(self, ts, xs) -> np.ndarray:
        """Evolve each row of ``xs`` (n, d) by the matching entry of ``ts``."""
        ts = np.asarray(ts, dtype=float)
        xs = np.asarray(xs, dtype=float).reshape(len(ts), self.dim)
        if self.batch is not None:
            return self.batch(ts, xs)
        return np.array([self.evolve(t, x) for t, x in zip(ts, xs)])

    def orbit(self, x, times) -> np.ndarray:
        """States ``T_t x`` for each entry of ``times``, shape (len(times), d)."""
        return self.orbits(np.atleast_1d(np.asarray(x, dtype=float))[None, :], times)[0]

    def orbits(self, xs, times) -> np.ndarray:
        """Orbits of every row of ``xs`` (n, d); shape (n, len(times), d)."""
        times = np.asarray(times, dtype=float)
        xs = np.asarray(xs, dtype=float).reshape(-1, self.dim)
        if self.orbit_path is not None:
            return self.orbit_path(xs, times)
        n, m = xs.shape[0], times.size
        ts = np.tile(times, n)
        X = np.repeat(xs, m, axis=0)
        return self.evolve_batch(ts, X).reshape(n, m, self.dim)

    def distance(self, x, y) -> float:
        return self.domain.distance(x, y)

    def distances(self, xs, ys) -> np.ndarray:
        d = np.abs(np.asarray(xs, dtype=float) - np.asarray(ys, dtype=float))
        if self.domain.periodic:
            d = np.minimum(d, 1.0 - d)
        return np.sqrt(np.sum(d * d, axis=-1))

    def to_json(self) -> dict:
        doc = {"kind": self.kind, "dim": self.dim, "params": dict(self.params)}
        if self.rk_step is not None:
            doc["rk_step"] = self.rk_step
        return doc

    def replace_evolve(self, evolve) -> "FlowSystem":
        """Same flow metadata with a different evolution rule and no fast paths."""
        return FlowSystem(self.dim, self.domain, evolve, self.kind, self.params,
                          self.rk_step)


def _frac(x):
    y = np.mod(x, 1.0)
    # np.mod may return exactly 1.0 for tiny negative inputs
    return np.where(y >= 1.0, 0.0, y)


def circle_rotation(alpha: float) -> FlowSystem:
    alpha = float(alpha)

    def evolve(t, x):
        return _frac(np.atleast_1d(np.asarray(x, dtype=float)) + alpha * t)

    def batch(ts, xs):
        return _frac(xs + alpha * ts[:, None])

    return FlowSystem(1, Domain.torus(1), evolve, "rotation", {"alpha": alpha},
                      batch=batch)


def torus_linear(alphas) -> FlowSystem:
    a = np.array(alphas, dtype=float).ravel()
    if a.size == 0:
        raise FlowError("torus_linear needs at least one frequency")

    def evolve(t, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return _frac(x + a * t)

    def batch(ts, xs):
        return _frac(xs + a[None, :] * ts[:, None])

    return FlowSystem(a.size, Domain.torus(a.size), evolve, "torus-linear",
                      {"alphas": a.tolist()}, batch=batch)


# -- vector fields -------------------------------------------------------------

def zero_field(dim: int = 2) -> VectorField:
    return VectorField(dim, lambda x: np.zeros_like(x), 0.0, "zero")


def rotation_field(omega: float = 1.0) -> VectorField:
    """``(x, y)' = omega (-y, x)``; every disk about the origin is invariant."""
    return VectorField(2, lambda x: omega * np.array([-x[1], x[0]]), abs(omega),
                       "rotation")


def annulus_field(omega: float = 1.0, rate: float = 1.0) -> VectorField:
    """Rotation plus radial drift ``rate (1 - rho^2)(rho^2 - 1/4)``.

    Both boundary circles (rho = 1/2 and rho = 1) are periodic orbits, so the
    closed annulus between them is invariant in forward and backward time.
    Interior orbits spiral out toward the unit circle.
    """

    def f(x):
        rho2 = x[0] * x[0] + x[1] * x[1]
        radial = rate * (1.0 - rho2) * (rho2 - 0.25)
        return np.array([-omega * x[1] + radial * x[0],
                         omega * x[0] + radial * x[1]])

    def invariant(x):
        rho2 = float(x[0] * x[0] + x[1] * x[1])
        return 0.25 - 1e-9 <= rho2 <= 1.0 + 1e-9

    # on the annulus |D(radial * x)| <= rate * max|d/drho(rho (1-rho^2)(rho^2-1/4))| <= 1.2 rate
    return VectorField(2, f, abs(omega) + 1.2 * abs(rate), "annulus", invariant)


FIELDS = {"zero": zero_field, "rotation": rotation_field, "annulus": annulus_field}


def rk4_step(f, x, dt):
    """One classical RK4 step. ``x`` has the coordinate axis first, so a batch
    of states is an array of shape (d, n) and ``dt`` may be an (n,) array."""
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _split_time(t, dt):
    """Full-step count and shortened final step for |t|."""
    a = np.abs(np.asarray(t, dtype=float))
    n_full = np.floor(a / dt).astype(int)
    rest = a - n_full * dt
    rest = np.where(rest <= 1e-12 * dt, 0.0, rest)
    return n_full, rest


def rk4_integrate(f, x, t, dt):
    """Fixed-step RK4 from time 0 to ``t``; the final step is shortened to land
    exactly on ``t``. Negative ``t`` integrates backward."""
    x = np.array(x, dtype=float)
    if t == 0:
        return x
    sign = 1.0 if t > 0 else -1.0
    n_full, rest = _split_time(t, dt)
    h = sign * dt
    for _ in range(int(n_full)):
        x = rk4_step(f, x, h)
    if rest > 0.0:
        x = rk4_step(f, x, sign * float(rest))
    return x


def rk4_integrate_batch(f, xs, ts, dt):
    """Row-wise :func:`rk4_integrate`: state ``xs[k]`` is carried to ``ts[k]``.

    Every row takes exactly the steps the scalar routine would take, so the
    results agree with it to rounding.
    """
    ts = np.asarray(ts, dtype=float)
    X = np.array(xs, dtype=float).T.copy()
    sign = np.sign(ts)
    n_full, rest = _split_time(ts, dt)
    for k in range(int(n_full.max(initial=0))):
        active = n_full > k
        if active.all():
            X = rk4_step(f, X, sign * dt)
        else:
            X[:, active] = rk4_step(f, X[:, active], sign[active] * dt)
    partial = rest > 0
    if partial.any():
        X[:, partial] = rk4_step(f, X[:, partial], sign[partial] * rest[partial])
    return X.T


def rk4_along(f, xs, times, dt):
    """States at each of ``times`` for every row of ``xs`` (n, d), integrating
    outward from t=0 in both directions with steps of at most ``dt`` and
    stopping on every requested time. Returns shape (n, len(times), d)."""
    times = np.asarray(times, dtype=float)
    X0 = np.atleast_2d(np.asarray(xs, dtype=float)).T.copy()
    out = np.empty((X0.shape[1], times.size, X0.shape[0]))
    for direction in (1.0, -1.0):
        idx = np.flatnonzero(times * direction > 0)
        idx = idx[np.argsort(np.abs(times[idx]), kind="stable")]
        Y, t_now = X0.copy(), 0.0
        for k in idx:
            target = abs(times[k])
            n_full, rest = _split_time(target - t_now, dt)
            for _ in range(int(n_full)):
                Y = rk4_step(f, Y, direction * dt)
            if rest > 0:
                Y = rk4_step(f, Y, direction * float(rest))
            t_now = target
            out[:, k, :] = Y.T
    out[:, times == 0, :] = X0.T[:, None, :]
    return out


def ode_flow(field: VectorField, rk_step: float = 1e-3,
             domain: Domain | None = None, margin: float = 1e-6) -> FlowSystem:
    """Flow of ``field`` by fixed-step RK4 with step ``rk_step``.

    The default domain is the box [-1, 1]^d; leaving it (or the field's own
    invariant set) by more than ``margin`` raises :class:`FlowError`.
    """
    if not rk_step > 0:
        raise FlowError("rk_step must be positive")
    if domain is None:
        domain = Domain.box((-1.0,) * field.dim, (1.0,) * field.dim)
    if domain.dim != field.dim:
        raise FlowError("domain and field dimensions differ")
    probe = domain.sample(np.random.default_rng(0), 64).T
    if not np.all(np.isfinite(field.f(probe))):
        raise FlowError("vector field is unbounded on its domain")

    def check(xs, ys):
        lo = np.array(domain.lows) - margin
        hi = np.array(domain.highs) + margin
        ok = np.all((ys >= lo) & (ys <= hi), axis=-1)
        if field.invariant is not None:
            ok &= np.array([field.invariant(y) for y in np.atleast_2d(ys)])
        if not np.all(ok):
            bad = int(np.flatnonzero(~np.atleast_1d(ok))[0])
            raise FlowError(f"trajectory left the invariant domain: {np.atleast_2d(ys)[bad]}")
        return ys

    def evolve(t, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return check(x, rk4_integrate(field.f, x, float(t), rk_step))

    def batch(ts, xs):
        return check(xs, rk4_integrate_batch(field.f, xs, ts, rk_step))

    def orbit_path(xs, times):
        out = rk4_along(field.f, xs, times, rk_step)
        check(xs, out.reshape(-1, field.dim))
        return out

    return FlowSystem(field.dim, domain, evolve, "ode", {"field": field.name},
                      rk_step, batch=batch, orbit_path=orbit_path)


# -- checks --------------------------------------------------------------------

@dataclass(frozen=True)
class GroupLawReport:
    max_defect: float
    # defect divided by max(1, |s| + |t|)
    max_defect_per_time: float
    tol: float
    samples: int
    passed: bool
    worst: tuple | None = None


def group_law_defects(sys: FlowSystem, s, t, xs) -> np.ndarray:
    """``dist(T_{s+t} x, T_s T_t x)`` for each sample row."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    xs = np.asarray(xs, dtype=float).reshape(s.size, sys.dim)
    lhs = sys.evolve_batch(s + t, xs)
    rhs = sys.evolve_batch(s, sys.evolve_batch(t, xs))
    return sys.distances(lhs, rhs)


def group_law_defect(sys: FlowSystem, s: float, t: float, x) -> float:
    lhs = sys.evolve(s + t, x)
    rhs = sys.evolve(s, sys.evolve(t, x))
    return sys.distance(lhs, rhs)


def verify_group_law(sys: FlowSystem, samples, tol: float,
                     per_unit_time: bool = False) -> GroupLawReport:
    """Worst group-law defect over ``samples`` of ``(s, t, x)``.

    With ``per_unit_time`` the pass/fail decision uses the defect divided by
    the elapsed time, which is how integrator budgets are stated.
    """
    samples = list(samples)
    if not samples:
        return GroupLawReport(0.0, 0.0, tol, 0, True)
    s = np.array([smp[0] for smp in samples], dtype=float)
    t = np.array([smp[1] for smp in samples], dtype=float)
    xs = np.array([np.atleast_1d(smp[2]) for smp in samples], dtype=float)
    d = group_law_defects(sys, s, t, xs)
    elapsed = np.maximum(np.abs(s) + np.abs(t), 1.0)
    per_time = d / elapsed
    k = int(np.argmax(per_time if per_unit_time else d))
    worst = float(per_time.max() if per_unit_time else d.max())
    return GroupLawReport(float(d.max()), float(per_time.max()), tol, len(samples),
                          worst <= tol, (float(s[k]), float(t[k]), xs[k].tolist()))


def integration_error(field: VectorField, dt: float, t: float, x,
                      reference_refinement: int = 64) -> float:
    """Distance between RK4 at step ``dt`` and a reference run at
    ``dt / reference_refinement`` (whose own error is smaller by about
    ``reference_refinement**4``)."""
    coarse = rk4_integrate(field.f, x, t, dt)
    fine = rk4_integrate(field.f, x, t, dt / reference_refinement)
    return float(np.linalg.norm(coarse - fine))


def convergence_ratio(field: VectorField, dt: float, t: float = 1.3, x=(0.8, 0.1)) -> float:
    """Error ratio under step halving; about 16 for a 4th-order method."""
    return integration_error(field, dt, t, x) / integration_error(field, dt / 2, t, x)


def group_law_samples(sys: FlowSystem, rng: np.random.Generator, n: int,
                      t_max: float = 1.0, states=None):
    """Random ``(s, t, x)`` triples with ``|s|, |t| <= t_max``."""
    st = rng.uniform(-t_max, t_max, size=(n, 2))
    if states is None:
        states = sample_states(sys, rng, n)
    return [(float(s), float(t), x) for (s, t), x in zip(st, states)]


def sample_states(sys: FlowSystem, rng: np.random.Generator, n: int) -> np.ndarray:
    if sys.kind == "ode" and sys.params.get("field") == "annulus":
        rho = np.sqrt(rng.uniform(0.25, 1.0, n))
        ang = rng.uniform(0.0, 2 * math.pi, n)
        return np.stack([rho * np.cos(ang), rho * np.sin(ang)], axis=1)
    if sys.kind == "ode" and sys.params.get("field") == "rotation":
        rho = np.sqrt(rng.uniform(0.0, 1.0, n))
        ang = rng.uniform(0.0, 2 * math.pi, n)
        return np.stack([rho * np.cos(ang), rho * np.sin(ang)], axis=1)
    return sys.domain.sample(rng, n)


# -- I/O -----------------------------------------------------------------------

def flow_from_json(doc: dict) -> FlowSystem:
    kind = doc.get("kind")
    params = doc.get("params", {})
    dim = doc.get("dim")
    if kind == "rotation":
        sys = circle_rotation(params.get("alpha", 0.0))
    elif kind == "torus-linear":
        sys = torus_linear(params["alphas"])
    elif kind == "ode":
        name = params.get("field", "annulus")
        if name not in FIELDS:
            raise FlowError(f"unknown vector field {name!r}; known: {sorted(FIELDS)}")
        extra = {k: v for k, v in params.items() if k != "field"}
        vf = FIELDS[name](**extra)
        sys = ode_flow(vf, float(doc.get("rk_step", 1e-3)))
        sys.params.update(extra)
    else:
        raise FlowError(f"unknown flow kind {kind!r}")
    if dim is not None and int(dim) != sys.dim:
        raise FlowError(f"declared dim {dim} but flow has dim {sys.dim}")
    return sys


def load_flow(path) -> FlowSystem:
    return flow_from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def trajectory(sys: FlowSystem, x, times) -> np.ndarray:
    return np.array([sys.evolve(float(t), x) for t in times])


def trajectory_csv(sys: FlowSystem, x, times) -> str:
    traj = trajectory(sys, x, times)
    buf = io.StringIO()
    buf.write(",".join(["t"] + [f"x{k}" for k in range(1, sys.dim + 1)]) + "\n")
    for t, row in zip(times, traj):
        buf.write(",".join(f"{v:.17g}" for v in (t, *row)) + "\n")
    return buf.getvalue()
