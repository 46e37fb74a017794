"""Monte Carlo for the random interchange and random loop models on Z^3."""

from .lattice import Lattice, build_lattice, incident_edges
from .looptracer import LoopSet, length_partition, shadow_partition, trace_loops
from .realisation import BAR, CROSS, Realisation, event_count, sample_realisation, sample_rng

__all__ = [
    "BAR",
    "CROSS",
    "Lattice",
    "LoopSet",
    "Realisation",
    "build_lattice",
    "event_count",
    "incident_edges",
    "length_partition",
    "sample_realisation",
    "sample_rng",
    "shadow_partition",
    "trace_loops",
]
