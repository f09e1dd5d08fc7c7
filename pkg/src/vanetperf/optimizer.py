"""Choose transmission probabilities that maximize expected progress, road-wide or per position."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .interference import LinkTable, NetworkParams, Strategy
from .mac import (
    InfeasibleSensingError,
    Protocol,
    build_table,
    carrier_sense_counts,
    max_feasible_p,
    network_average,
    perf,
    position_rates,
    sensing_probabilities,
)
from .numerics import Grid1D, ScalarMax, maximize_scalar
from .traffic import DensityField

P_MIN = 0.001
P_MAX = 0.999


@dataclass(frozen=True)
class OptimumReport:
    """Result of a global (scalar fields) or local (Grid1D fields) optimization."""

    p_star: Union[float, Grid1D]
    pi_at_star: Union[float, Grid1D]
    p_prime_star: Optional[Grid1D]
    feasible: Union[bool, np.ndarray]
    protocol: Protocol
    strategy: Strategy
    p_upper: Union[float, np.ndarray]
    flat: Union[bool, np.ndarray] = False
    rho_at_star: Union[float, Grid1D, None] = None
    scan: Optional[ScalarMax] = None

    @property
    def is_local(self) -> bool:
        return isinstance(self.p_star, Grid1D)

    def to_csv(self, path) -> None:
        if not self.is_local:
            raise ValueError("only per-position reports have the x_km,p_star,... layout")
        csma = self.p_prime_star is not None
        header = ["x_km", "p_star", "pi_star"] + (["p_prime_star", "feasible"] if csma else [])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, x in enumerate(self.p_star.x):
                row = [f"{x:.12g}", f"{self.p_star.values[k]:.12g}", f"{self.pi_at_star.values[k]:.12g}"]
                if csma:
                    row += [f"{self.p_prime_star.values[k]:.12g}", int(bool(self.feasible[k]))]
                w.writerow(row)


def _upper_bounds(d: DensityField, params: NetworkParams, positions: np.ndarray, p_max: float) -> np.ndarray:
    n_cs = carrier_sense_counts(d, params, positions)
    return np.array([min(p_max, max_feasible_p(n, params.tau)) for n in n_cs])


def optimize_global(
    d: DensityField,
    params: NetworkParams,
    protocol="ALOHA",
    strategy="MPR",
    p_min: float = P_MIN,
    p_max: float = P_MAX,
    table: Optional[LinkTable] = None,
    tol: float = 1e-6,
) -> OptimumReport:
    """Maximize the network-average progress over a single road-wide p."""
    protocol = Protocol.parse(protocol)
    strategy = Strategy.parse(strategy)
    table = table if table is not None else build_table(d, params, strategy)
    pos = table.positions
    upper = p_max
    if protocol is Protocol.CSMA:
        bounds = _upper_bounds(d, params, pos, p_max)
        k = int(np.argmin(bounds))
        upper = float(bounds[k])
        if upper <= p_min:
            raise InfeasibleSensingError(
                f"no feasible transmission probability above p_min={p_min}: "
                f"sensing probability exceeds 1 for p>{upper:.6g} at x={pos[k]:.6g} km"
            )

    def objective(p):
        return perf(d, params, p, protocol, strategy, table=table).pi_avg

    res = maximize_scalar(objective, p_min, upper, tol=tol)
    best = perf(d, params, res.argmax, protocol, strategy, table=table)
    p_prime = None
    if protocol is Protocol.CSMA:
        pp = sensing_probabilities(res.argmax, carrier_sense_counts(d, params, pos), params.tau)
        p_prime = Grid1D(float(pos[0]), float(pos[1] - pos[0]), pp)
    return OptimumReport(
        p_star=res.argmax,
        pi_at_star=best.pi_avg,
        p_prime_star=p_prime,
        feasible=True,
        protocol=protocol,
        strategy=strategy,
        p_upper=upper,
        flat=res.flat,
        rho_at_star=best.rho_avg,
        scan=res,
    )


def optimize_local(
    d: DensityField,
    params: NetworkParams,
    protocol="ALOHA",
    strategy="MPR",
    p_min: float = P_MIN,
    p_max: float = P_MAX,
    table: Optional[LinkTable] = None,
    tol: float = 1e-6,
) -> OptimumReport:
    """Maximize progress independently at every evaluation position.

    Neighbors are assumed to use the same p as the position being optimized.
    Positions with no reachable relay have a flat objective and report p_min.
    """
    protocol = Protocol.parse(protocol)
    strategy = Strategy.parse(strategy)
    table = table if table is not None else build_table(d, params, strategy)
    pos = table.positions
    k = len(pos)
    if protocol is Protocol.CSMA:
        upper = _upper_bounds(d, params, pos, p_max)
    else:
        upper = np.full(k, p_max)
    feasible = upper > p_min
    p_star = np.full(k, p_min)
    pi_star = np.zeros(k)
    rho_star = np.zeros(k)
    flat = np.zeros(k, dtype=bool)
    for i in range(k):
        if not feasible[i]:
            continue
        res = maximize_scalar(lambda p: position_rates(table, i, p, protocol)[1], p_min, float(upper[i]), tol=tol)
        p_star[i] = res.argmax
        flat[i] = res.flat
        rho_star[i], pi_star[i] = position_rates(table, i, res.argmax, protocol)

    x0, dx = float(pos[0]), float(pos[1] - pos[0])
    p_prime = None
    if protocol is Protocol.CSMA:
        n_cs = carrier_sense_counts(d, params, pos)
        pp = np.array([sensing_probabilities(p, n, params.tau) for p, n in zip(p_star, n_cs)])
        p_prime = Grid1D(x0, dx, pp)
    return OptimumReport(
        p_star=Grid1D(x0, dx, p_star),
        pi_at_star=Grid1D(x0, dx, pi_star),
        p_prime_star=p_prime,
        feasible=feasible,
        protocol=protocol,
        strategy=strategy,
        p_upper=upper,
        flat=flat,
        rho_at_star=Grid1D(x0, dx, rho_star),
    )


def local_average(d: DensityField, report: OptimumReport) -> float:
    """Location-weighted average of the per-position optimal progress."""
    return network_average(d, report.pi_at_star.x, report.pi_at_star.values)
