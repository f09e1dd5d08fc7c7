"""Monte Carlo validation: slot-level ALOHA and mini-slot-level CSMA over Poisson placements."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .interference import NetworkParams, Strategy
from .mac import (
    InfeasibleSensingError,
    PerfProfile,
    Protocol,
    carrier_sense_counts,
    sensing_probabilities,
)
from .traffic import DensityField, sample_positions


@dataclass(frozen=True)
class SimConfig:
    runs: int = 500
    seed: int = 0
    warmup_minislots: int = 200
    measure_minislots: int = 2000

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError(f"need at least one run, got {self.runs}")
        if self.warmup_minislots < 0:
            raise ValueError("warmup must be non-negative")
        if self.measure_minislots < 1:
            raise ValueError("measurement window must be positive")


@dataclass(frozen=True)
class RunRecord:
    run: int
    n_nodes: int
    n_success: int
    progress_sum: float
    n_attempts: int = 0
    n_transmitting: int = 0


@dataclass(frozen=True)
class SimStats:
    rho_hat: float
    pi_hat: float
    rho_se: float
    pi_se: float
    n_nodes_mean: float
    runs: int
    protocol: Protocol
    strategy: Strategy
    p: float
    records: tuple = field(default=(), repr=False)
    # per-run (rho, pi) samples the estimates average over; empty-road runs are excluded
    rho_runs: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    pi_runs: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["protocol", "strategy", "p", "runs", "rho_hat", "rho_se", "pi_hat", "pi_se", "n_nodes_mean"])
            w.writerow([self.protocol.value, self.strategy.value, f"{self.p:.12g}", self.runs,
                        f"{self.rho_hat:.12g}", f"{self.rho_se:.12g}", f"{self.pi_hat:.12g}",
                        f"{self.pi_se:.12g}", f"{self.n_nodes_mean:.12g}"])

    def runs_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run", "n_nodes", "n_success", "progress_sum"])
            for rec in self.records:
                w.writerow([rec.run, rec.n_nodes, rec.n_success, f"{rec.progress_sum:.12g}"])


def _mean_se(samples: np.ndarray):
    if samples.size == 0:
        return 0.0, 0.0
    mean = float(samples.mean())
    if samples.size < 2:
        return mean, 0.0
    return mean, float(samples.std(ddof=1) / math.sqrt(samples.size))


def _summarize(records, per_node_scale, protocol, strategy, p, runs):
    n = np.array([r.n_nodes for r in records], dtype=float)
    ok = n > 0
    succ = np.array([r.n_success for r in records], dtype=float)
    prog = np.array([r.progress_sum for r in records], dtype=float)
    rho_runs = succ[ok] / (n[ok] * per_node_scale)
    pi_runs = prog[ok] / (n[ok] * per_node_scale)
    rho, rho_se = _mean_se(rho_runs)
    pi, pi_se = _mean_se(pi_runs)
    return SimStats(rho, pi, rho_se, pi_se, float(n.mean()), runs, protocol, strategy, float(p),
                    tuple(records), rho_runs, pi_runs)


def choose_relays(x: np.ndarray, R: float, strategy: Strategy):
    """Relay index per node (-1 when no node lies within R behind it)."""
    idx = np.arange(x.size)
    lo = np.searchsorted(x, x - R, side="left")
    has = lo < idx
    if strategy is Strategy.NP:
        relay = np.where(has, idx - 1, -1)
    else:
        relay = np.where(has, lo, -1)
    return relay


def interference_radii(x: np.ndarray, relay: np.ndarray, params: NetworkParams, strategy: Strategy):
    dist = np.where(relay >= 0, x - x[np.maximum(relay, 0)], 0.0)
    if strategy is Strategy.MPR:
        return dist, np.full(x.size, params.R_I)
    return dist, params.range_factor * dist


def coverage_counts(x: np.ndarray, active: np.ndarray, radius: np.ndarray) -> np.ndarray:
    """Number of active transmitters whose interference range covers each node."""
    cov = np.zeros(x.size + 1, dtype=np.int64)
    src = np.flatnonzero(active)
    if src.size:
        lo = np.searchsorted(x, x[src] - radius[src], side="left")
        hi = np.searchsorted(x, x[src] + radius[src], side="right")
        np.add.at(cov, lo, 1)
        np.add.at(cov, hi, -1)
    return np.cumsum(cov[:-1])


def aloha_slot(x: np.ndarray, tx_mode: np.ndarray, params: NetworkParams, strategy: Strategy):
    """Resolve one ALOHA slot; returns (success mask over transmitters, relay, distance, transmitting)."""
    relay = choose_relays(x, params.R, strategy)
    transmitting = tx_mode & (relay >= 0)
    dist, radius = interference_radii(x, relay, params, strategy)
    cov = coverage_counts(x, transmitting, radius)
    rb = np.maximum(relay, 0)
    # cov[b] counts the intended transmitter itself; anything beyond it interferes
    success = transmitting & ~tx_mode[rb] & (cov[rb] <= 1)
    return success, relay, dist, transmitting


def _layout(d, rng, layout):
    if layout is None:
        return sample_positions(d, rng)
    return np.sort(np.asarray(layout, dtype=float))


def simulate_aloha(d: DensityField, params: NetworkParams, p: float, strategy="MPR",
                   cfg: SimConfig = SimConfig(), layout=None) -> SimStats:
    """One independent slot per run over a fresh Poisson placement.

    ``layout`` pins the node positions for every run (only the MAC draws vary).
    """
    strategy = Strategy.parse(strategy)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"transmission probability must lie in [0, 1], got {p}")
    records = []
    for run in range(cfg.runs):
        rng = np.random.default_rng(cfg.seed + run)
        x = _layout(d, rng, layout)
        tx_mode = rng.random(x.size) < p
        success, relay, dist, transmitting = aloha_slot(x, tx_mode, params, strategy)
        records.append(RunRecord(run, int(x.size), int(success.sum()), float(dist[success].sum()),
                                 int(tx_mode.sum()), int(transmitting.sum())))
    return _summarize(records, 1.0, Protocol.ALOHA, strategy, p, cfg.runs)


def sensing_profile(d: DensityField, params: NetworkParams, p: float, x=None) -> np.ndarray:
    """p'(x) at ``x`` (default: the density grid); raises if any value exceeds 1."""
    grid = d.x if x is None else np.asarray(x, float)
    pp = sensing_probabilities(p, carrier_sense_counts(d, params, grid), params.tau)
    if np.any(pp > 1.0 + 1e-12):
        k = int(np.argmax(pp))
        raise InfeasibleSensingError(
            f"infeasible sensing probability p'={pp[k]:.6g} > 1 at x={grid[k]:.6g} km for p={p}"
        )
    return np.minimum(pp, 1.0)


def simulate_csma(d: DensityField, params: NetworkParams, p: float, strategy="MPR",
                  cfg: SimConfig = SimConfig(), chunk: int = 100, layout=None) -> SimStats:
    """Mini-slot simulation of slotted non-persistent CSMA.

    Every run gets its own node placement; runs are laid side by side on one
    line with gaps wider than any sensing or interference range so they can be
    stepped together without interacting. Sensing probabilities always come
    from the density field, also when ``layout`` pins the positions.
    """
    strategy = Strategy.parse(strategy)
    if params.tau is None or params.cs_range is None:
        raise ValueError("CSMA simulation needs tau and cs_range")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"transmission probability must lie in [0, 1], got {p}")
    sensing_profile(d, params, p)  # feasibility check over the whole road
    T = params.T
    tau = params.tau
    span = d.L if layout is None else max(d.L, float(np.ptp(layout)) if len(layout) else 0.0)
    gap = span + 2.0 * (params.cs_range + params.R_I + params.R) + 1.0

    rngs, xs, sizes = [], [], []
    for run in range(cfg.runs):
        rng = np.random.default_rng(cfg.seed + run)
        x = _layout(d, rng, layout)
        rngs.append(rng)
        xs.append(x)
        sizes.append(x.size)
    sizes = np.array(sizes)
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    total = int(offsets[-1])
    steps = cfg.warmup_minislots + cfg.measure_minislots
    succ = np.zeros(cfg.runs, dtype=np.int64)
    attempts = np.zeros(cfg.runs, dtype=np.int64)
    prog = np.zeros(cfg.runs)

    if total > 0 and p > 0:
        local = np.concatenate(xs)
        run_of = np.repeat(np.arange(cfg.runs), sizes)
        line = local + run_of * gap
        relay = np.concatenate([
            np.where(r >= 0, r + off, -1)
            for r, off in zip((choose_relays(x, params.R, strategy) for x in xs), offsets[:-1])
        ])
        can_tx = relay >= 0
        dist, radius = interference_radii(line, relay, params, strategy)
        pp = np.minimum(sensing_probabilities(p, carrier_sense_counts(d, params, local), tau), 1.0)
        pp = np.where(can_tx, pp, 0.0)
        cs_lo = np.searchsorted(line, line - params.cs_range, side="left")
        cs_hi = np.searchsorted(line, line + params.cs_range, side="right")
        rb = np.maximum(relay, 0)

        remaining = np.zeros(total, dtype=np.int64)
        failed = np.zeros(total, dtype=bool)
        started = np.zeros(total, dtype=np.int64)
        tx_prev = np.zeros(total, dtype=bool)
        draws = None
        for t in range(steps + T + 1):
            if t % chunk == 0:
                n_block = min(chunk, steps + T + 1 - t)
                draws = np.concatenate([g.random((n_block, k)) for g, k in zip(rngs, sizes)], axis=1)
            u = draws[t % chunk]
            csum = np.concatenate(([0], np.cumsum(tx_prev)))
            busy = (csum[cs_hi] - csum[cs_lo] - tx_prev) > 0
            idle = remaining == 0
            start = idle & (u < pp) & ~busy & (t < steps)
            remaining[start] = T + 1
            failed[start] = False
            started[start] = t
            if t >= cfg.warmup_minislots:
                np.add.at(attempts, run_of[start], 1)
            active = remaining > 0
            cov = coverage_counts(line, active, radius)
            failed |= active & (cov[rb] > 1)
            remaining[active] -= 1
            done = active & (remaining == 0)
            if np.any(done):
                ok = done & ~failed & (started >= cfg.warmup_minislots)
                idx = np.flatnonzero(ok)
                np.add.at(succ, run_of[idx], 1)
                np.add.at(prog, run_of[idx], dist[idx])
            tx_prev = active

    records = [RunRecord(k, int(sizes[k]), int(succ[k]), float(prog[k]), int(attempts[k]))
               for k in range(cfg.runs)]
    return _summarize(records, cfg.measure_minislots * tau, Protocol.CSMA, strategy, p, cfg.runs)


@dataclass(frozen=True)
class MetricCheck:
    metric: str
    analytical: float
    simulated: float
    se: float
    tolerance: float

    @property
    def abs_dev(self) -> float:
        return self.simulated - self.analytical

    @property
    def rel_dev(self) -> float:
        if self.analytical == 0:
            return 0.0 if self.simulated == 0 else math.inf
        return self.abs_dev / abs(self.analytical)

    @property
    def passed(self) -> bool:
        return abs(self.abs_dev) <= self.tolerance


@dataclass(frozen=True)
class CompareReport:
    protocol: Protocol
    strategy: Strategy
    p: float
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, metric: str) -> MetricCheck:
        for c in self.checks:
            if c.metric == metric:
                return c
        raise KeyError(metric)

    def rows(self):
        for c in self.checks:
            yield [self.protocol.value, self.strategy.value, f"{self.p:.12g}", c.metric,
                   f"{c.analytical:.12g}", f"{c.simulated:.12g}", f"{c.se:.12g}", f"{c.abs_dev:.12g}",
                   f"{c.rel_dev:.12g}", f"{c.tolerance:.12g}", "pass" if c.passed else "fail"]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COMPARE_HEADER)
            w.writerows(self.rows())


COMPARE_HEADER = ["protocol", "strategy", "p", "metric", "analytical", "simulated", "se",
                  "abs_dev", "rel_dev", "tolerance", "pass"]


def compare(analytical: PerfProfile, sim: SimStats, rel_gate: float = 0.05, se_gate: float = 3.0) -> CompareReport:
    """Check simulated network averages against the analytical ones.

    A metric passes when |sim - analytical| <= max(rel_gate * |analytical|, se_gate * se).
    """
    if analytical.protocol is not sim.protocol or analytical.strategy is not sim.strategy:
        raise ValueError(
            f"mismatched configurations: analysis {analytical.protocol.value}/{analytical.strategy.value}, "
            f"simulation {sim.protocol.value}/{sim.strategy.value}"
        )
    if not math.isclose(analytical.p, sim.p, rel_tol=1e-12, abs_tol=1e-15):
        raise ValueError(f"mismatched transmission probability: analysis p={analytical.p}, simulation p={sim.p}")
    checks = []
    for name, a, s_hat, se in (("rho", analytical.rho_avg, sim.rho_hat, sim.rho_se),
                               ("pi", analytical.pi_avg, sim.pi_hat, sim.pi_se)):
        tol = max(rel_gate * abs(a), se_gate * se)
        checks.append(MetricCheck(name, float(a), float(s_hat), float(se), float(tol)))
    return CompareReport(analytical.protocol, analytical.strategy, float(analytical.p), tuple(checks))
