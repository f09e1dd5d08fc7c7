"""Mean vehicle density from a velocity profile, and Poisson node placement.

Units throughout: positions in km, time in minutes, arrival rates in
vehicles/minute, speeds in km/minute and densities in vehicles/km.
"""
from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .numerics import Grid1D, interp

DEFAULT_DX = 0.001


@dataclass(frozen=True)
class VelocityProfile:
    """Piecewise-linear speed field over ``[breakpoints[0], breakpoints[-1]]``."""

    breakpoints: Tuple[float, ...]
    speeds: Tuple[float, ...]

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        sp = tuple(float(s) for s in self.speeds)
        if len(bp) < 2 or len(bp) != len(sp):
            raise ValueError("velocity profile needs >= 2 breakpoints, one speed each")
        if any(b1 <= b0 for b0, b1 in zip(bp[:-1], bp[1:])):
            raise ValueError("velocity breakpoints must be strictly increasing")
        if bp[0] != 0.0:
            raise ValueError(f"velocity profile must start at x=0, got {bp[0]}")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "speeds", sp)

    @classmethod
    def constant(cls, speed: float, length: float) -> "VelocityProfile":
        return cls((0.0, length), (speed, speed))

    @classmethod
    def slowdown(
        cls,
        length: float = 5.0,
        free_speed: float = 0.8333,
        slow_speed: float = 0.2778,
        start: float = 1.0,
        end: float = 3.0,
        ramp: float = 0.5,
    ) -> "VelocityProfile":
        """Free-flow speed with a symmetric trapezoidal dip on ``[start, end]``."""
        return cls(
            (0.0, start, start + ramp, end - ramp, end, length),
            (free_speed, free_speed, slow_speed, slow_speed, free_speed, free_speed),
        )

    @property
    def length(self) -> float:
        return self.breakpoints[-1]

    @property
    def v_min(self) -> float:
        return min(self.speeds)

    @property
    def v_max(self) -> float:
        return max(self.speeds)

    def __call__(self, x):
        return np.interp(x, self.breakpoints, self.speeds)


@dataclass(frozen=True)
class Junction:
    x: float
    join_rate: float = 0.0
    leave_fraction: float = 0.0

    def __post_init__(self):
        if self.join_rate < 0:
            raise ValueError(f"junction join rate must be >= 0, got {self.join_rate}")
        if not 0.0 <= self.leave_fraction <= 1.0:
            raise ValueError(f"junction leave fraction must be in [0, 1], got {self.leave_fraction}")


AlphaLike = Union[float, Sequence[Tuple[float, float]]]


@dataclass(frozen=True)
class ArrivalSpec:
    """External arrivals at x=0 plus junction sources and sinks.

    ``alpha`` is either a constant rate or a step function given as
    ``[(t_0, rate_0), (t_1, rate_1), ...]``; ``rate_k`` applies on
    ``[t_k, t_{k+1})`` and ``rate_0`` also applies before ``t_0``.
    """

    alpha: AlphaLike = 0.0
    junctions: Tuple[Junction, ...] = ()

    def __post_init__(self):
        if isinstance(self.alpha, (int, float)):
            if self.alpha < 0:
                raise ValueError(f"arrival rate must be >= 0, got {self.alpha}")
            object.__setattr__(self, "alpha", float(self.alpha))
        else:
            steps = tuple((float(t), float(r)) for t, r in self.alpha)
            if not steps:
                raise ValueError("arrival step function needs at least one step")
            if any(r < 0 for _, r in steps):
                raise ValueError("arrival rates must be >= 0")
            if any(t1 <= t0 for (t0, _), (t1, _) in zip(steps[:-1], steps[1:])):
                raise ValueError("arrival step times must be strictly increasing")
            object.__setattr__(self, "alpha", steps)
        object.__setattr__(self, "junctions", tuple(self.junctions))

    @property
    def is_constant(self) -> bool:
        return isinstance(self.alpha, float)

    def rate(self, t: float) -> float:
        if self.is_constant:
            return self.alpha
        times = [s[0] for s in self.alpha]
        k = max(bisect.bisect_right(times, t) - 1, 0)
        return self.alpha[k][1]


@dataclass(frozen=True, eq=False)
class DensityField:
    """Mean density on a uniform grid, read as its piecewise-linear interpolant.

    Counts are exact integrals of that interpolant, so ``total`` and every
    ``mean_count`` are mutually consistent to rounding.
    """

    n: Grid1D
    L: float
    breakpoints: Tuple[float, ...] = ()
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if np.any(self.n.values < 0):
            raise ValueError("density must be non-negative")
        if abs(self.n.x0) > 1e-12 or abs(self.n.x_end - self.L) > 1e-9:
            raise ValueError("density grid must span [0, L]")
        v = self.n.values
        cells = 0.5 * (v[:-1] + v[1:]) * self.n.dx
        cum = np.concatenate(([0.0], np.cumsum(cells)))
        cum.setflags(write=False)
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "breakpoints", tuple(sorted(set(float(b) for b in self.breakpoints))))

    @property
    def total(self) -> float:
        return float(self._cum[-1])

    @property
    def x(self) -> np.ndarray:
        return self.n.x

    def density(self, x):
        """n(x); zero outside the road."""
        xs = np.asarray(x, dtype=float)
        out = np.where((xs < 0) | (xs > self.L), 0.0, interp(self.n, xs))
        return float(out) if np.ndim(x) == 0 else out

    def cumulative(self, x):
        """Expected count on (0, x], with x clamped to [0, L]."""
        if np.ndim(x) == 0:
            return self._cumulative_scalar(float(x))
        xs = np.clip(np.asarray(x, dtype=float), 0.0, self.L)
        v = self.n.values
        dx = self.n.dx
        t = xs / dx
        i = np.minimum(np.floor(t).astype(int), v.size - 2)
        u = xs - i * dx
        return self._cum[i] + v[i] * u + (v[i + 1] - v[i]) * u * u / (2.0 * dx)

    def _cumulative_scalar(self, x: float) -> float:
        if x <= 0.0:
            return 0.0
        if x >= self.L:
            return float(self._cum[-1])
        v = self.n.values
        dx = self.n.dx
        i = min(int(x / dx), v.size - 2)
        u = x - i * dx
        return float(self._cum[i] + v[i] * u + (v[i + 1] - v[i]) * u * u / (2.0 * dx))

    def with_density(self, values) -> "DensityField":
        return DensityField(Grid1D(self.n.x0, self.n.dx, np.asarray(values, float)), self.L, self.breakpoints)

    def scaled(self, factor: float) -> "DensityField":
        return self.with_density(self.n.values * factor)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x_km", "n_veh_per_km"])
            for x, n in zip(self.x, self.n.values):
                w.writerow([f"{x:.12g}", f"{n:.12g}"])


def homogeneous_field(density: float, L: float = 5.0, dx: float = DEFAULT_DX) -> DensityField:
    m = int(round(L / dx))
    return DensityField(Grid1D(0.0, L / m, np.full(m + 1, float(density))), L)


def _grid(L: float, dx: float):
    m = int(round(L / dx))
    if m < 1:
        raise ValueError(f"grid spacing {dx} too coarse for road length {L}")
    return m, L / m


def _check_speeds(v: VelocityProfile):
    if v.v_min <= 0:
        raise ValueError(f"minimum speed must be > 0 (got {v.v_min}); density would blow up")


def steady_state_density(
    v: VelocityProfile, a: ArrivalSpec, dx: float = DEFAULT_DX, L: Optional[float] = None
) -> DensityField:
    """Time-invariant density n(x) = q(x) / v(x) with piecewise-constant flow q."""
    _check_speeds(v)
    if not a.is_constant:
        raise ValueError("steady state requires a constant arrival rate")
    L = v.length if L is None else float(L)
    m, dx = _grid(L, dx)
    x = np.linspace(0.0, L, m + 1)
    q = np.full(m + 1, a.alpha)
    for j in sorted(a.junctions, key=lambda j: j.x):
        if not 0.0 < j.x < L:
            raise ValueError(f"junction position {j.x} outside (0, {L})")
        # same cell convention as the upwind solver: the node nearest the junction is downstream
        k = min(max(int(round(j.x / dx)), 1), m)
        after = np.arange(m + 1) >= k
        q[after] = q[after] * (1.0 - j.leave_fraction) + j.join_rate
    n = q / v(x)
    bps = [b for b in v.breakpoints if 0.0 < b < L] + [j.x for j in a.junctions]
    return DensityField(Grid1D(0.0, dx, n), L, tuple(bps))


class UpwindSolver:
    """First-order upwind scheme for dn/dt + d(nv)/dx = c+ - c- on grid nodes.

    Node 0 is the inflow boundary with n = alpha(t) / v(0). Node i (i >= 1)
    owns the cell (x_{i-1}, x_i]; junction sources and sinks act on the flux
    entering the node nearest each junction.
    """

    def __init__(self, v: VelocityProfile, a: ArrivalSpec, dt: float, dx: float = DEFAULT_DX,
                 L: Optional[float] = None, n0=None, t0: float = 0.0):
        _check_speeds(v)
        self.L = v.length if L is None else float(L)
        m, self.dx = _grid(self.L, dx)
        self.x = np.linspace(0.0, self.L, m + 1)
        self.v = v(self.x)
        self.velocity = v
        self.arrivals = a
        self.dt = float(dt)
        courant = self.dt * self.v / self.dx
        if np.any(courant > 1.0 + 1e-12):
            k = int(np.argmax(courant))
            raise ValueError(
                f"CFL condition violated at cell {k} (x={self.x[k]:.6g} km): "
                f"dt*v/dx = {courant[k]:.4g} > 1; need dt <= {self.dx / self.v[k]:.6g}"
            )
        if n0 is None:
            self.n = np.zeros(m + 1)
        else:
            n0 = n0.n.values if isinstance(n0, DensityField) else np.asarray(n0, float)
            if n0.shape != self.x.shape:
                raise ValueError("initial density must match the solver grid")
            self.n = n0.astype(float).copy()
        self.t = float(t0)
        self._junctions = []
        for j in a.junctions:
            if not 0.0 < j.x < self.L:
                raise ValueError(f"junction position {j.x} outside (0, {self.L})")
            k = min(max(int(round(j.x / self.dx)), 1), m)
            self._junctions.append((k, j))
        self.last_budget = None

    def mass(self) -> float:
        """Vehicles in (0, L] under the cell ownership of the scheme."""
        return float(self.n[1:].sum() * self.dx)

    def step(self) -> None:
        alpha = self.arrivals.rate(self.t)
        n, v = self.n, self.v
        n[0] = alpha / v[0]
        flux = v * n
        inflow = flux[:-1].copy()
        departed = 0.0
        joined = 0.0
        for k, j in self._junctions:
            gone = j.leave_fraction * inflow[k - 1]
            inflow[k - 1] += j.join_rate - gone
            departed += gone
            joined += j.join_rate
        outflow = flux[-1]
        n[1:] += self.dt / self.dx * (inflow - flux[1:])
        self.t += self.dt
        self.last_budget = {
            "alpha": alpha, "joined": joined, "departed": departed, "outflow": float(outflow)
        }

    def field(self) -> DensityField:
        n = self.n.copy()
        n[0] = self.arrivals.rate(self.t) / self.v[0]
        bps = [b for b in self.velocity.breakpoints if 0.0 < b < self.L]
        bps += [j.x for _, j in self._junctions]
        return DensityField(Grid1D(0.0, self.dx, np.maximum(n, 0.0)), self.L, tuple(bps))


def transient_density(
    v: VelocityProfile,
    a: ArrivalSpec,
    t_end: float,
    dt: float,
    dx: float = DEFAULT_DX,
    L: Optional[float] = None,
    n0=None,
    t0: float = 0.0,
    callback: Optional[Callable[[UpwindSolver], None]] = None,
) -> DensityField:
    """Integrate the conservation law from ``t0`` to ``t_end`` with upwind steps."""
    solver = UpwindSolver(v, a, dt, dx=dx, L=L, n0=n0, t0=t0)
    n_steps = int(math.ceil((t_end - t0) / dt - 1e-9))
    for _ in range(n_steps):
        solver.step()
        if callback is not None:
            callback(solver)
    return solver.field()


def travel_time(v: VelocityProfile, x: float) -> float:
    """Time for a vehicle to go from 0 to ``x`` along the profile."""
    total = 0.0
    bp, sp = v.breakpoints, v.speeds
    for x0, x1, v0, v1 in zip(bp[:-1], bp[1:], sp[:-1], sp[1:]):
        if x <= x0:
            break
        hi = min(x, x1)
        vh = v0 + (v1 - v0) * (hi - x0) / (x1 - x0)
        if abs(vh - v0) < 1e-15:
            total += (hi - x0) / v0
        else:
            total += (hi - x0) / (vh - v0) * math.log(vh / v0)
    return total


def mean_count(d: DensityField, x1: float, x2: float) -> float:
    """Expected number of vehicles in (x1, x2], clamped to the road."""
    if x2 <= x1:
        return 0.0
    return max(d._cumulative_scalar(x2) - d._cumulative_scalar(x1), 0.0)


def mean_counts(d: DensityField, x1, x2) -> np.ndarray:
    """Vectorized :func:`mean_count`."""
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    out = d.cumulative(x2) - d.cumulative(x1)
    return np.where(x2 > x1, np.maximum(out, 0.0), 0.0)


def location_pdf(d: DensityField, x):
    """Density of a random node's position, n(x) / E[N(L)]."""
    total = d.total
    if total <= 0:
        raise ValueError("location pdf undefined: the road holds no vehicles")
    return d.density(x) / total


def region_mass(d: DensityField, x1: float, x2: float) -> float:
    """Probability that a random node lies in (x1, x2]."""
    total = d.total
    if total <= 0:
        raise ValueError("region mass undefined: the road holds no vehicles")
    return min(mean_count(d, x1, x2) / total, 1.0)


def sample_positions(d: DensityField, rng: np.random.Generator) -> np.ndarray:
    """Draw one Poisson node placement using ``rng``; sorted ascending."""
    total = d.total
    if total <= 0:
        return np.empty(0)
    k = rng.poisson(total)
    u = rng.random(k) * total
    return np.sort(_inverse_cumulative(d, u))


def sample_nodes(d: DensityField, rng_seed: int) -> list:
    """Poisson node placement, deterministic in ``rng_seed``."""
    return sample_positions(d, np.random.default_rng(rng_seed)).tolist()


def _inverse_cumulative(d: DensityField, u: np.ndarray) -> np.ndarray:
    cum = d._cum
    v = d.n.values
    dx = d.n.dx
    i = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, v.size - 2)
    rem = u - cum[i]
    n0 = v[i]
    slope = (v[i + 1] - n0) / dx
    # Solve n0*t + slope*t^2/2 = rem for t in [0, dx]; stable form of the quadratic root.
    disc = np.maximum(n0 * n0 + 2.0 * slope * rem, 0.0)
    denom = n0 + np.sqrt(disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom > 0, 2.0 * rem / denom, 0.0)
    t = np.clip(t, 0.0, dx)
    return i * dx + t
