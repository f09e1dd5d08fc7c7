"""Local throughput and expected progress for slotted ALOHA and slotted non-persistent CSMA."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .interference import (
    LinkContext,
    LinkTable,
    NetworkParams,
    Strategy,
    connect_prob,
    interference_prob,
    link_table,
)
from .numerics import Grid1D, integrate
from .traffic import DensityField, mean_count, mean_counts

DEFAULT_POSITIONS = 251


class Protocol(str, enum.Enum):
    ALOHA = "ALOHA"
    CSMA = "CSMA"

    @classmethod
    def parse(cls, value) -> "Protocol":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown protocol {value!r}; expected ALOHA or CSMA") from None


class InfeasibleSensingError(ValueError):
    pass


@dataclass(frozen=True)
class PerfProfile:
    rho: Grid1D
    pi: Grid1D
    rho_avg: float
    pi_avg: float
    p: float
    protocol: Protocol
    strategy: Strategy

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x_km", "rho", "pi"])
            for x, r, p in zip(self.rho.x, self.rho.values, self.pi.values):
                w.writerow([f"{x:.12g}", f"{r:.12g}", f"{p:.12g}"])
            w.writerow(["AVG", f"{self.rho_avg:.12g}", f"{self.pi_avg:.12g}"])


def evaluation_positions(L: float, n: int = DEFAULT_POSITIONS) -> np.ndarray:
    return np.linspace(0.0, L, n)


def _check_p(p: float):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"transmission probability must lie in [0, 1], got {p}")


def _require_csma(params: NetworkParams):
    if params.tau is None or params.cs_range is None:
        raise ValueError("CSMA needs both tau and cs_range in the network parameters")


def network_average(d: DensityField, positions: np.ndarray, values: np.ndarray) -> float:
    """Location-pdf weighted average of a per-position quantity (trapezoid rule)."""
    n = d.density(positions)
    wts = np.empty_like(positions)
    dx = np.diff(positions)
    wts[0] = dx[0] / 2
    wts[-1] = dx[-1] / 2
    wts[1:-1] = (dx[:-1] + dx[1:]) / 2
    mass = np.sum(wts * n)
    if mass <= 0:
        return 0.0
    return float(np.sum(wts * n * values) / mass)


# -- scalar, adaptive-quadrature route ---------------------------------------

def _relay_pdf(d, params, a, r, strategy):
    b = a - r
    if strategy is Strategy.NP:
        empty = mean_count(d, b, a)
    else:
        empty = mean_count(d, a - params.R, b)
    return d.density(b) * math.exp(-empty)


def _relay_breaks(d, params, a):
    return [a - b for b in d.breakpoints + (0.0,)] + [a - b + params.R for b in d.breakpoints]


def aloha_success(d: DensityField, params: NetworkParams, a: float, p: float, strategy="MPR",
                  tol: float = 1e-7) -> float:
    """P(a -> b): success probability of a's transmission, averaged over the relay distance."""
    strategy = Strategy.parse(strategy)
    _check_p(p)
    pc = connect_prob(d, params, a)
    if pc <= 0:
        raise ValueError(f"transmitter at a={a} has no reachable relay")
    if p == 0:
        return 1.0
    if p == 1:
        return 0.0

    def g(r):
        if r <= 0:
            return 0.0
        f = _relay_pdf(d, params, a, r, strategy)
        if f == 0:
            return 0.0
        exposure = interference_prob(d, params, LinkContext(a, r, strategy), tol=1e-9).exposure
        return math.exp(-p * exposure) * f

    r_hi = min(params.R, a)
    val = integrate(g, 0.0, r_hi, tol=tol, breakpoints=_relay_breaks(d, params, a))
    return float((1.0 - p) * val / pc)


def csma_success(d: DensityField, params: NetworkParams, a: float, r: float, p: float,
                 strategy="MPR") -> float:
    """P(a -> b | r_a = r) under slotted non-persistent CSMA."""
    _require_csma(params)
    _check_p(p)
    if p == 0:
        return 1.0
    res = interference_prob(d, params, LinkContext(a, r, strategy), csma=True)
    sensed, hidden = res.exposure_split()
    T = params.T
    return (1.0 - p) * math.exp(-p * sensed - (2 * T + 1) * p * hidden)


# -- table-driven profiles ---------------------------------------------------

def _row_exponent(table: LinkTable, i: int, p: float, protocol: Protocol):
    if protocol is Protocol.ALOHA:
        return -p * (table.sensed[i] + table.hidden[i])
    return -p * table.sensed[i] - (2 * table.params.T + 1) * p * table.hidden[i]


def _scale(table: LinkTable, p: float, protocol: Protocol) -> float:
    if protocol is Protocol.ALOHA:
        return p * (1.0 - p)
    return p / table.params.tau * (1.0 - p)


def position_rates(table: LinkTable, i: int, p: float, protocol) -> tuple:
    """(rho, pi) at ``table.positions[i]`` for transmission probability ``p``."""
    protocol = Protocol.parse(protocol)
    w = table.weights[i]
    if p <= 0.0 or p >= 1.0 or w.size == 0:
        return 0.0, 0.0
    e = w * np.exp(_row_exponent(table, i, p, protocol))
    scale = _scale(table, p, protocol)
    return scale * float(e.sum()), scale * float((e * table.r[i]).sum())


def _rates(table: LinkTable, p: float, protocol: Protocol):
    _check_p(p)
    if protocol is Protocol.CSMA:
        _require_csma(table.params)
    k = len(table.positions)
    rho = np.zeros(k)
    pi = np.zeros(k)
    for i in range(k):
        rho[i], pi[i] = position_rates(table, i, p, protocol)
    return rho, pi


def aloha_rates(table: LinkTable, p: float):
    """Per-position (rho, pi) for slotted ALOHA from a precomputed link table."""
    return _rates(table, p, Protocol.ALOHA)


def csma_rates(table: LinkTable, p: float):
    """Per-position (rho, pi) for slotted non-persistent CSMA, per unit packet time."""
    return _rates(table, p, Protocol.CSMA)


def _profile(d, table, p, protocol):
    rates = aloha_rates if protocol is Protocol.ALOHA else csma_rates
    rho, pi = rates(table, p)
    pos = table.positions
    dx = pos[1] - pos[0]
    return PerfProfile(
        rho=Grid1D(float(pos[0]), float(dx), rho),
        pi=Grid1D(float(pos[0]), float(dx), pi),
        rho_avg=network_average(d, pos, rho),
        pi_avg=network_average(d, pos, pi),
        p=float(p),
        protocol=protocol,
        strategy=table.strategy,
    )


def build_table(d: DensityField, params: NetworkParams, strategy, positions=None,
                model: str = "independent") -> LinkTable:
    if positions is None:
        positions = evaluation_positions(d.L)
    return link_table(d, params, strategy, positions, model=model)


def aloha_perf(d: DensityField, params: NetworkParams, p: float, strategy="MPR",
               positions: Optional[Sequence[float]] = None, table: Optional[LinkTable] = None) -> PerfProfile:
    table = table if table is not None else build_table(d, params, strategy, positions)
    return _profile(d, table, p, Protocol.ALOHA)


def csma_perf(d: DensityField, params: NetworkParams, p: float, strategy="MPR",
              positions: Optional[Sequence[float]] = None, table: Optional[LinkTable] = None) -> PerfProfile:
    _require_csma(params)
    table = table if table is not None else build_table(d, params, strategy, positions)
    return _profile(d, table, p, Protocol.CSMA)


def perf(d, params, p, protocol, strategy="MPR", positions=None, table=None) -> PerfProfile:
    protocol = Protocol.parse(protocol)
    fn = aloha_perf if protocol is Protocol.ALOHA else csma_perf
    return fn(d, params, p, strategy, positions=positions, table=table)


# -- carrier sensing -----------------------------------------------------------

def idle_probability(p: float, n_cs: float, tau: float) -> float:
    """Probability the channel is sensed idle by a node with ``n_cs`` sensing neighbors."""
    e = math.exp(-p * n_cs)
    return tau * e / (1.0 + tau - e)


def sensing_probability(p: float, n_cs: float, tau: float) -> float:
    """Per-mini-slot sensing probability p' that realizes transmission probability p."""
    _check_p(p)
    if n_cs < 0:
        raise ValueError(f"expected neighbor count must be >= 0, got {n_cs}")
    if n_cs == 0:
        return p
    e = math.exp(-p * n_cs)
    pp = (1.0 + tau - e) * p / (tau * e)
    if pp > 1.0 + 1e-12:
        raise InfeasibleSensingError(
            f"infeasible sensing probability: p={p} with N_CS={n_cs:.6g} needs p'={pp:.6g} > 1"
        )
    return min(pp, 1.0)


def sensing_probabilities(p: float, n_cs, tau: float) -> np.ndarray:
    """Vectorized p'; values above 1 are returned as-is (callers check feasibility)."""
    n_cs = np.asarray(n_cs, float)
    with np.errstate(over="ignore"):
        return p * ((1.0 + tau) * np.exp(p * n_cs) - 1.0) / tau


def carrier_sense_counts(d: DensityField, params: NetworkParams, x) -> np.ndarray:
    """N_CS(x): expected nodes within the carrier-sensing range of x."""
    _require_csma(params)
    x = np.asarray(x, float)
    return mean_counts(d, x - params.cs_range, x + params.cs_range)


def max_feasible_p(n_cs: float, tau: float) -> float:
    """Largest p whose sensing probability at ``n_cs`` does not exceed 1."""
    if n_cs <= 0:
        return 1.0
    lo, hi = 0.0, 1.0
    if sensing_probabilities(1.0, n_cs, tau) <= 1.0:
        return 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if sensing_probabilities(mid, n_cs, tau) <= 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return lo
