"""Density fields, MAC-layer throughput and progress analysis, and Monte Carlo validation for vehicular networks."""
from .interference import LinkContext, NetworkParams, Strategy, connect_prob, interference_prob, link_table, relay_cdf
from .mac import PerfProfile, Protocol, aloha_perf, csma_perf, perf, sensing_probability
from .numerics import Grid1D, integrate, interp, maximize_scalar
from .optimizer import OptimumReport, optimize_global, optimize_local
from .simulator import SimConfig, SimStats, compare, simulate_aloha, simulate_csma
from .traffic import (
    ArrivalSpec,
    DensityField,
    Junction,
    VelocityProfile,
    homogeneous_field,
    mean_count,
    steady_state_density,
    transient_density,
)

__version__ = "0.1.0"
