"""Equivariant embeddings of flows into sequences of 1-Lipschitz functions.

Modules: ``function_space`` (sampled functions and the weighted metric),
``flows`` (exact and integrated flows), ``hilbert`` (state-space embeddings),
``orbit`` (the orbit map), ``smoothing`` (moving-average operators and the
universal point) and ``harness``/``cli`` (property suites and command line).
"""

from .flows import FlowSystem, circle_rotation, flow_from_json, ode_flow, torus_linear
from .function_space import Func01, MetricConfig, SeqFunc, metric, translate
from .harness import Report, RunConfig, run_embed, run_verify
from .orbit import OrbitConfig, orbit_embed
from .smoothing import PairIndex, QuadConfig, index_of, pair_of, smooth, universal_embed

__version__ = "0.1.0"

__all__ = [
    "FlowSystem", "circle_rotation", "flow_from_json", "ode_flow", "torus_linear",
    "Func01", "MetricConfig", "SeqFunc", "metric", "translate",
    "Report", "RunConfig", "run_embed", "run_verify",
    "OrbitConfig", "orbit_embed",
    "PairIndex", "QuadConfig", "index_of", "pair_of", "smooth", "universal_embed",
]
