"""Property suites over the whole pipeline and the report they produce.

Every property records the largest defect seen, the budget it is held to and
the reason for that budget. ``passed`` is always ``max_defect <= budget``.
"""

from __future__ import annotations

import json
import math
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import flows as fl
from .function_space import (Func01, MetricConfig, SeqFunc, epsilon_net, eval,
                             lipschitz_defect, metric, restrict, translate)
from .hilbert import injectivity_check, make_psi
from .orbit import (OrbitConfig, continuity_budget, equivariance_defects, orbit_embed,
                    orbit_embed_many)
from .smoothing import (PairIndex, QuadConfig, certificate_defect,
                        derivative_identity_defect, index_of, linearity_defect,
                        pair_of, pairs, separation_witness, smooth,
                        smoothing_equivariance_defect, universal_embed)

SQRT2_M1 = math.sqrt(2.0) - 1.0

DEFAULT_TOLERANCES = {
    "exact_flow": 1e-15,
    "ode_group_law_per_time": 1e-8,
    "equivariance_exact": 1e-12,
    "equivariance_ode": 1e-7,
    "metric_triangle": 1e-12,
    "translation_continuity": 1e-9,
    "lipschitz_resample": 1e-12,
    "linearity": 1e-12,
    "monotonicity": 1e-15,
    "continuity_slack": 1e-12,
    "separation_tol": 1e-9,
    "order_deviation": 0.2,
    "rk4_log2_ratio_deviation": 1.0,
}

DEFAULT_SAMPLES = {
    "functions": 1000,
    "flow": 1000,
    "psi_pairs": 1000,
    "orbit_states": 8,
    "injectivity_pairs": 100,
    "enumeration_k": 100_000,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    flow: dict = field(default_factory=lambda: {
        "kind": "rotation", "dim": 1, "params": {"alpha": SQRT2_M1}})
    psi: object = "coords"
    orbit: dict = field(default_factory=lambda: {"T": 4.0, "step": 0.01,
                                                 "hilbert_depth": 6})
    quad: dict = field(default_factory=lambda: {"substep": None})
    metric: dict = field(default_factory=lambda: {"depth_N": 10, "eval_step": None})
    depth_K: int = 21
    states: list | None = None
    shifts: list = field(default_factory=lambda: [-0.5, -0.1, 0.1, 0.5, 1.0])
    separation_r0: float = 0.01
    tolerances: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        self.tolerances = {**DEFAULT_TOLERANCES, **(self.tolerances or {})}
        self.samples = {**DEFAULT_SAMPLES, **(self.samples or {})}
        bad = [k for k, v in self.tolerances.items() if not v > 0]
        if bad:
            raise ConfigError(f"tolerances must be positive: {bad}")
        if self.depth_K < 1:
            raise ConfigError("depth_K must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        self.seed = int(self.seed)

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(doc)

    def to_json(self) -> dict:
        return asdict(self)

    # -- builders ------------------------------------------------------------
    def build_flow(self) -> fl.FlowSystem:
        try:
            return fl.flow_from_json(self.flow)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad flow config {self.flow}: {exc}") from exc

    def build_orbit(self) -> OrbitConfig:
        return OrbitConfig(**self.orbit)

    def build_quad(self) -> QuadConfig:
        return QuadConfig(self.quad.get("substep"))

    def build_metric(self) -> MetricConfig:
        return MetricConfig(**self.metric)

    def build_psi(self, sys: fl.FlowSystem):
        return make_psi(self.psi, sys.domain, np.random.default_rng(self.seed))

    def initial_states(self, sys: fl.FlowSystem, n: int | None = None) -> np.ndarray:
        if self.states is not None:
            return np.array([np.atleast_1d(s) for s in self.states], dtype=float)
        rng = np.random.default_rng([self.seed, 7])
        return fl.sample_states(sys, rng, n or self.samples["orbit_states"])


@dataclass
class PropertyResult:
    name: str
    anchor: str
    samples: int
    max_defect: float
    budget: float
    basis: str
    measure: str = "absolute defect"

    @property
    def passed(self) -> bool:
        return bool(self.max_defect <= self.budget)

    def to_json(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d


@dataclass
class Report:
    properties: list[PropertyResult]
    config: dict
    environment: dict

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.properties)

    def failures(self) -> list[str]:
        return [p.name for p in self.properties if not p.passed]

    def get(self, name: str) -> PropertyResult:
        for p in self.properties:
            if p.name == name:
                return p
        raise KeyError(name)

    def to_json(self) -> dict:
        return {"passed": self.passed,
                "properties": [p.to_json() for p in self.properties],
                "config": self.config, "environment": self.environment}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        lines = ["property,max_defect,budget,pass"]
        for p in self.properties:
            lines.append(f"{p.name},{p.max_defect:.17g},{p.budget:.17g},{int(p.passed)}")
        return "\n".join(lines) + "\n"


# -- random inputs -------------------------------------------------------------

def random_lipschitz(rng: np.random.Generator, window, step: float,
                     slope: float = 0.999) -> Func01:
    """Clipped random walk with increments in ``[-slope h, slope h]``."""
    a, b = window
    n = round((b - a) / step) + 1
    inc = rng.uniform(-slope, slope, n - 1) * step
    v = np.empty(n)
    v[0] = rng.random()
    for k in range(n - 1):
        v[k + 1] = min(1.0, max(0.0, v[k] + inc[k]))
    return Func01((a, b), step, v)


def random_seqfunc(rng: np.random.Generator, window, step: float, depth: int,
                   extremes: float = 0.4) -> SeqFunc:
    """Arbitrary [0,1] samples; a fraction ``extremes`` is pinned to 0 or 1 so
    that worst-case slopes and saturated windows actually occur."""
    a, b = window
    n = round((b - a) / step) + 1
    V = rng.random((depth, n))
    u = rng.random((depth, n))
    V[u < extremes / 2] = 0.0
    V[u > 1 - extremes / 2] = 1.0
    return SeqFunc.from_array(window, step, V)


# -- suites --------------------------------------------------------------------

def _rng(cfg: RunConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, stream])


def function_space_suite(cfg: RunConfig) -> list[PropertyResult]:
    rng = _rng(cfg, 1)
    n = cfg.samples["functions"]
    mcfg = cfg.build_metric()
    tol = cfg.tolerances
    N = mcfg.depth_N
    window, h = (-4.0, 4.0), 0.05
    sym = ident = tail = grid = 0.0
    tri = cont = inv = -math.inf
    deep = MetricConfig(2 * N, mcfg.eval_step)
    for _ in range(n):
        f, g, k = (random_lipschitz(rng, window, h) for _ in range(3))
        fg, gf = metric(f, g, mcfg), metric(g, f, mcfg)
        sym = max(sym, abs(fg - gf))
        ident = max(ident, metric(f, f, mcfg))
        tri = max(tri, metric(f, k, mcfg) - fg - metric(g, k, mcfg))
        tail = max(tail, abs(fg - metric(f, g, deep)))
        s = float(rng.uniform(-0.5, 0.5))
        fs = translate(f, s)
        cont = max(cont, metric(fs, restrict(f, fs.window), mcfg) - abs(s))
        inv = max(inv, lipschitz_defect(fs))
        kk = int(rng.integers(len(f)))
        grid = max(grid, abs(eval(f, float(f.times[kk])) - f.values[kk]))
    out = [
        PropertyResult("function_space.metric_symmetry", "uniform-on-compacts metric",
                       n, sym, 0.0, "exact: same arithmetic in both orders"),
        PropertyResult("function_space.metric_identity", "uniform-on-compacts metric",
                       n, ident, 0.0, "exact"),
        PropertyResult("function_space.metric_triangle", "uniform-on-compacts metric",
                       n, tri, tol["metric_triangle"], "rounding of the weighted sums",
                       "d(f,h) - d(f,g) - d(g,h)"),
        PropertyResult("function_space.metric_truncation_tail", "uniform-on-compacts metric",
                       n, tail, 2.0 ** -N, f"tail bound 2^-{N}",
                       f"|d_N - d_2N| with N={N}"),
        PropertyResult("function_space.translation_continuity", "translation action",
                       n, cont, tol["translation_continuity"],
                       "1-Lipschitz: every inner max is <= |s|",
                       "d(T_s f, f) - |s|"),
        PropertyResult("function_space.translation_invariance_of_L", "L is translation invariant",
                       n, inv, tol["lipschitz_resample"],
                       "interpolation keeps slopes; resampling rounding",
                       "lipschitz_defect(T_s f)"),
        PropertyResult("function_space.eval_grid_consistency", "sampled representation",
                       n, grid, 0.0, "exact: grid nodes return stored samples"),
    ]
    # epsilon-net covering on a small window, brute force nearest element
    eps, nw, nh = 0.5, (0.0, 1.0), 0.01
    net = epsilon_net(eps, nw, nh)
    stack = np.stack([e.values for e in net])
    net_ok = max(lipschitz_defect(e) for e in net)
    cover = -math.inf
    for _ in range(n):
        f = random_lipschitz(rng, nw, nh, slope=1.0)
        cover = max(cover, float(np.min(np.max(np.abs(stack - f.values), axis=1))) - eps)
    out.append(PropertyResult("function_space.epsilon_net_membership", "compactness of L",
                              len(net), net_ok, 0.0, "exact: knot slopes <= 1",
                              "max lipschitz_defect over net"))
    out.append(PropertyResult("function_space.epsilon_net_covering", "compactness of L",
                              n, cover, 0.0, f"cover radius 0.75 eps < eps={eps}",
                              "min distance to net - eps"))
    return out


def flows_suite(cfg: RunConfig, sys: fl.FlowSystem) -> list[PropertyResult]:
    rng = _rng(cfg, 2)
    n = cfg.samples["flow"]
    tol = cfg.tolerances
    xs = fl.sample_states(sys, rng, n)
    zero = np.zeros(n)
    ident = float(np.max(sys.distances(sys.evolve_batch(zero, xs), xs)))
    smp = fl.group_law_samples(sys, rng, n, states=xs)
    exact = sys.kind != "ode"
    budget = tol["exact_flow"] if exact else tol["ode_group_law_per_time"]
    gl = fl.verify_group_law(sys, smp, budget, per_unit_time=not exact)
    ts = rng.uniform(-2.0, 2.0, n)
    try:
        ys = sys.evolve_batch(ts, xs)
        exits = int(sum(not sys.domain.contains(y, 1e-6) for y in ys))
    except fl.FlowError:
        exits = n
    out = [
        PropertyResult("flows.identity", "T_0 is the identity", n, ident, 0.0, "exact"),
        PropertyResult("flows.group_law", "flow axioms", n,
                       gl.max_defect if exact else gl.max_defect_per_time, budget,
                       "modular arithmetic rounding" if exact
                       else f"RK4 at rk_step={sys.rk_step}, per unit time",
                       "dist(T_{s+t}x, T_s T_t x)" + ("" if exact else " / max(1,|s|+|t|)")),
        PropertyResult("flows.domain_invariance", "X is invariant", n, float(exits), 0.0,
                       "exact", "count of states leaving the domain"),
    ]
    if sys.kind == "ode":
        name = sys.params.get("field", "annulus")
        extra = {k: v for k, v in sys.params.items() if k != "field"}
        vf = fl.FIELDS[name](**extra)
        ratio = fl.convergence_ratio(vf, 0.1, t=1.3, x=xs[0])
        dev = abs(math.log2(ratio)) - 4.0 if ratio > 0 else math.inf
        out.append(PropertyResult("flows.rk4_order", "flow is continuous (integrator order)",
                                  1, abs(dev), tol["rk4_log2_ratio_deviation"],
                                  "step-halving error ratio in [8, 32]",
                                  "|log2(ratio) - 4|"))
    return out


def psi_suite(cfg: RunConfig, sys: fl.FlowSystem, psi) -> list[PropertyResult]:
    rng = _rng(cfg, 3)
    n = cfg.samples["psi_pairs"]
    xs = fl.sample_states(sys, rng, n)
    ys = fl.sample_states(sys, rng, n)
    cx, cy = psi.coords_batch(xs), psi.coords_batch(ys)
    out_of_range = float(np.sum((cx < 0) | (cx > 1)))
    img = np.max(np.abs(cx - cy), axis=1)
    sd = sys.distances(xs, ys)
    modulus = float(np.max(img - psi.modulus * sd))
    r0 = cfg.separation_r0
    far = [(x, y) for x, y, d in zip(xs, ys, sd) if d >= r0]
    tol = cfg.tolerances["separation_tol"]
    rep = injectivity_check(psi, far, tol, sys.distance, resolution=r0)
    return [
        PropertyResult("psi.range", "embedding into the Hilbert cube", n, out_of_range, 0.0,
                       "exact", "count of coordinates outside [0,1]"),
        PropertyResult("psi.continuity_modulus", "psi is continuous", n, modulus,
                       cfg.tolerances["continuity_slack"],
                       f"modulus {psi.modulus:.6g}", "img - modulus * dist"),
        PropertyResult("psi.separation", "psi is injective", len(far),
                       tol / rep.min_separation if rep.min_separation > 0 else math.inf,
                       1.0, f"pairs at distance >= {r0} separated above {tol}; "
                       f"s0 = {rep.min_separation:.17g}",
                       "tol / min image separation"),
    ]


def orbit_suite(cfg: RunConfig, sys: fl.FlowSystem, psi, states) -> list[PropertyResult]:
    ocfg = cfg.build_orbit()
    tol = cfg.tolerances
    exact = sys.kind != "ode"
    rng = _rng(cfg, 4)
    rng_max = 0.0
    eq = 0.0
    win = 0.0
    cont = -math.inf
    shifts = [round(r / ocfg.step) * ocfg.step for r in cfg.shifts if abs(r) <= 1.0]
    lip = None
    if sys.kind == "ode":
        name = sys.params.get("field", "annulus")
        extra = {k: v for k, v in sys.params.items() if k != "field"}
        lip = fl.FIELDS[name](**extra).lipschitz_bound
    others = fl.sample_states(sys, rng, len(states))
    base = orbit_embed_many(sys, psi, states, ocfg)
    for F in base:
        A = F.as_array()
        rng_max = max(rng_max, float(np.sum((A < 0) | (A > 1))))
    for r in shifts:
        eq = max(eq, float(np.max(equivariance_defects(sys, psi, states, r, ocfg, base))))
    sub = orbit_embed_many(sys, psi, states, ocfg.with_T(ocfg.T / 2))
    for F, S in zip(base, sub):
        win = max(win, max(float(np.max(np.abs(restrict(f, s.window).values - s.values)))
                           for f, s in zip(F.components, S.components)))
    moved = orbit_embed_many(sys, psi, others, ocfg)
    for x, y, F, G in zip(states, others, base, moved):
        imd = float(np.max(np.abs(F.as_array() - G.as_array())))
        cont = max(cont, imd - continuity_budget(sys, psi, sys.distance(x, y), ocfg.T, lip))
    budget = tol["equivariance_exact"] if exact else tol["equivariance_ode"]
    m = len(states)
    return [
        PropertyResult("orbit.range", "orbit map into C(R)^N", m, rng_max, 0.0, "exact",
                       "count of samples outside [0,1]"),
        PropertyResult("orbit.equivariance", "the orbit map is equivariant",
                       m * len(shifts), eq, budget,
                       "grid-aligned shifts, rounding only" if exact
                       else "integrator group-law budget times psi modulus"),
        PropertyResult("orbit.window_consistency", "finite window realisation", m, win, 0.0,
                       "exact: identical evaluation path"),
        PropertyResult("orbit.continuity", "the orbit map is continuous", m, cont,
                       tol["continuity_slack"],
                       "psi modulus x flow growth exp(L T)", "img - bound(dist)"),
    ]


def smoothing_suite(cfg: RunConfig, sys: fl.FlowSystem, psi, states) -> list[PropertyResult]:
    rng = _rng(cfg, 5)
    tol = cfg.tolerances
    quad = cfg.build_quad()
    K = cfg.depth_K
    plist = pairs(K)
    depth = max(p.i for p in plist)
    n = cfg.samples["functions"]
    cert = -math.inf
    lin = 0.0
    mono = -math.inf
    for s in range(n):
        h = (0.01, 0.02, 0.05, 0.025)[s % 4]
        f = random_seqfunc(rng, (0.0, 2.0), h, depth)
        U = universal_embed(f, K, quad)
        for e, (_, r) in zip(U.entries, U.meta):
            cert = max(cert, certificate_defect(e, r))
        if s < n // 10 + 1:
            g = random_seqfunc(rng, (0.0, 2.0), h, depth)
            p = plist[s % K]
            lin = max(lin, linearity_defect(f, g, float(rng.random()), p, quad))
            lo = SeqFunc.from_array(f.window, h, np.minimum(f.as_array(), g.as_array()))
            mono = max(mono, float(np.max(smooth(lo, p, quad).values
                                          - smooth(f, p, quad).values)))
    ocfg = cfg.build_orbit()
    ocfg = OrbitConfig(ocfg.T, ocfg.step, max(ocfg.hilbert_depth or 0, depth))
    eq = 0.0
    eq_na = 0.0
    shifts = [round(r / ocfg.step) * ocfg.step for r in cfg.shifts]
    orbits = orbit_embed_many(sys, psi, states, ocfg)
    live = [p for p in plist if p.i <= psi.depth]
    for F in orbits:
        for r in shifts:
            for p in plist:
                eq = max(eq, smoothing_equivariance_defect(F, r, p, quad))
        for p in live:
            eq_na = max(eq_na, smoothing_equivariance_defect(F, 0.37 * ocfg.step + 0.1,
                                                             p, quad))
    # enumeration
    kmax = cfg.samples["enumeration_k"]
    listing = [(1, 1), (1, 2), (2, 2), (1, 3), (2, 3), (3, 3)]
    enum_bad = sum(tuple(pair_of(k)) != listing[k - 1] for k in range(1, 7))
    enum_bad += sum(index_of(pair_of(k)) != k for k in range(1, kmax + 1))
    # derivative identity order on a smooth input
    orders = derivative_orders((1e-2, 5e-3, 2.5e-3), PairIndex(1, 2))
    order_dev = max(abs(o - 2.0) for o in orders)
    # injectivity on the configured flow
    r0 = cfg.separation_r0
    n_pairs = cfg.samples["injectivity_pairs"]
    xs, ys = separated_pairs(sys, rng, n_pairs, r0)
    missing = 0
    worst_gap = math.inf
    fx = orbit_embed_many(sys, psi, np.array(xs), ocfg)
    fy = orbit_embed_many(sys, psi, np.array(ys), ocfg)
    for Fx, Fy in zip(fx, fy):
        w = separation_witness(Fx, Fy, tol["separation_tol"], quad, depth_K=K)
        if w is None or not w.gap > 0:
            missing += 1
        else:
            worst_gap = min(worst_gap, w.gap)
    h = ocfg.step
    return [
        PropertyResult("smoothing.certificate", "F_i^j(f) lies in L(R)", n * K,
                       cert + 0.0, 0.0,
                       "exact integral of the interpolant, rounding guard",
                       "max(lipschitz_defect, max - r_j, -min)"),
        PropertyResult("smoothing.equivariance", "F is equivariant",
                       len(orbits) * len(shifts) * K, eq, tol["equivariance_exact"],
                       "grid-aligned shifts are index shifts"),
        PropertyResult("smoothing.equivariance_nonaligned", "F is equivariant",
                       len(orbits) * len(live), eq_na, 2 * h,
                       "two interpolation resamples, 2h"),
        PropertyResult("smoothing.linearity", "the integral is linear", n // 10 + 1, lin,
                       tol["linearity"], "rounding"),
        PropertyResult("smoothing.monotonicity", "integral of a positive gap is positive",
                       n // 10 + 1, mono, tol["monotonicity"], "rounding guard ulps",
                       "max(F(min(f,g)) - F(f))"),
        PropertyResult("smoothing.enumeration", "triangular listing of F", kmax, float(enum_bad),
                       0.0, "exact", "count of mismatches"),
        PropertyResult("smoothing.derivative_order", "outputs are C^1", len(orders), order_dev,
                       tol["order_deviation"], "central difference O(h^2)",
                       "|measured order - 2|"),
        PropertyResult("smoothing.injectivity", "F(f) != F(g)", len(xs), float(missing), 0.0,
                       f"every pair at distance >= {r0} has a witness",
                       "count of pairs without a positive gap"),
    ]


def derivative_orders(steps, p: PairIndex, window=(0.0, 8.0)):
    """Observed orders of derivative_identity_defect for 1/2 + sin(s)/2 under
    successive step refinements."""
    defects = []
    for h in steps:
        f = SeqFunc((Func01.sample(lambda s: 0.5 + 0.5 * np.sin(s), window, h),))
        defects.append(derivative_identity_defect(f, p))
    return [math.log(defects[k] / defects[k + 1]) / math.log(steps[k] / steps[k + 1])
            for k in range(len(steps) - 1)]


def separated_pairs(sys: fl.FlowSystem, rng: np.random.Generator, n: int, r0: float):
    xs, ys = [], []
    while len(xs) < n:
        x, y = fl.sample_states(sys, rng, 2)
        if sys.distance(x, y) >= r0:
            xs.append(x)
            ys.append(y)
    return xs, ys


def environment() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__,
            "platform": platform.system()}


def run_verify(cfg: RunConfig, flow_override: fl.FlowSystem | None = None) -> Report:
    """Run every suite; ``flow_override`` replaces the configured flow (used to
    inject deliberately broken flows in tests)."""
    sys = flow_override if flow_override is not None else cfg.build_flow()
    psi = cfg.build_psi(sys)
    states = cfg.initial_states(sys)
    props = []
    props += function_space_suite(cfg)
    props += flows_suite(cfg, sys)
    props += psi_suite(cfg, sys, psi)
    props += orbit_suite(cfg, sys, psi, states)
    props += smoothing_suite(cfg, sys, psi, states)
    props.sort(key=lambda p: p.name)
    return Report(props, cfg.to_json(), environment())


def run_embed(cfg: RunConfig, out_dir) -> list[dict]:
    """Full pipeline for every configured state; writes one directory per
    state with the manifest and entry CSVs."""
    sys = cfg.build_flow()
    psi = cfg.build_psi(sys)
    ocfg = cfg.build_orbit()
    depth = max(p.i for p in pairs(cfg.depth_K))
    ocfg = OrbitConfig(ocfg.T, ocfg.step, max(ocfg.hilbert_depth or 0, depth))
    quad = cfg.build_quad()
    out_dir = Path(out_dir)
    results = []
    for n, x in enumerate(cfg.initial_states(sys, 1)):
        F = orbit_embed(sys, psi, x, ocfg)
        U = universal_embed(F, cfg.depth_K, quad)
        sub = out_dir / f"state_{n:03d}"
        manifest = U.write(sub)
        results.append({"state": np.atleast_1d(x).tolist(), "manifest": str(manifest),
                        "uncertified": U.certify(0.0), "point": U})
    return results
