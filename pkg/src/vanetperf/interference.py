"""Connectivity, relay-distance distributions and probability of interference.

Packets travel backward (toward decreasing x): a transmitter at ``a`` relays
to a node at ``b = a - r`` with ``0 < r <= R``. A potential interferer ``i``
of the link sits within ``R_I`` of ``b``, outside the region the relay choice
proves empty.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .numerics import composite_nodes, gauss_legendre_panels, integrate
from .traffic import DensityField, mean_count, mean_counts

log = logging.getLogger(__name__)


class Strategy(str, enum.Enum):
    MPR = "MPR"  # most progress, fixed radius R
    MP = "MP"  # most progress, radius = link distance
    NP = "NP"  # nearest with progress, radius = link distance

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown strategy {value!r}; expected one of MPR, MP, NP") from None


@dataclass(frozen=True)
class NetworkParams:
    R: float = 0.1
    beta: float = 10.0
    gamma: float = 4.0
    cs_range: Optional[float] = None
    tau: Optional[float] = None

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError(f"R must be positive, got {self.R}")
        if not self.gamma > 2:
            raise ValueError(f"path-loss exponent must exceed 2, got {self.gamma}")
        if not self.beta > 0:
            raise ValueError(f"SIR requirement must be positive, got {self.beta}")
        if self.cs_range is not None and self.cs_range < self.R:
            raise ValueError(f"carrier-sensing range {self.cs_range} is below R={self.R}")
        if self.tau is not None:
            if not 0 < self.tau <= 1:
                raise ValueError(f"mini-slot length must be in (0, 1], got {self.tau}")
            T = 1.0 / self.tau
            if abs(T - round(T)) > 1e-9:
                raise ValueError(f"1/tau must be an integer, got {T}")

    @property
    def range_factor(self) -> float:
        """beta^(1/gamma): interference radius per unit of link distance."""
        return self.beta ** (1.0 / self.gamma)

    @property
    def R_I(self) -> float:
        return self.range_factor * self.R

    @property
    def T(self) -> int:
        if self.tau is None:
            raise ValueError("tau is not set")
        return int(round(1.0 / self.tau))


@dataclass(frozen=True)
class LinkContext:
    a: float
    r: float
    strategy: Strategy

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        if not self.r > 0:
            raise ValueError(f"link distance must be positive, got {self.r}")
        if self.a - self.r < -1e-12:
            raise ValueError(f"receiver position a - r = {self.a - self.r} is off the road")

    @property
    def b(self) -> float:
        return self.a - self.r


@dataclass(frozen=True)
class Region:
    lo: float
    hi: float
    hidden: bool = False
    kind: int = 1  # which of the two neighbor regions this (sub-)region comes from

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class RegionTerm:
    region: Region
    mean_count: float
    conditional: float  # P(I_N | node in region)
    q_gap: float


@dataclass(frozen=True)
class InterferenceResult:
    value: float
    breakdown: Tuple[RegionTerm, ...] = ()

    @property
    def exposure(self) -> float:
        """Expected number of neighbors that would interfere if transmitting."""
        return sum(t.conditional * t.mean_count for t in self.breakdown)

    def exposure_split(self) -> Tuple[float, float]:
        sensed = sum(t.conditional * t.mean_count for t in self.breakdown if not t.region.hidden)
        hidden = sum(t.conditional * t.mean_count for t in self.breakdown if t.region.hidden)
        return sensed, hidden


def connect_prob(d: DensityField, params: NetworkParams, a: float) -> float:
    """Probability that at least one node lies within R behind ``a``."""
    return -math.expm1(-mean_count(d, a - params.R, a))


def relay_cdf(d: DensityField, params: NetworkParams, a: float, r: float, strategy) -> float:
    """CDF of the link distance chosen by ``strategy`` at ``a``, given connectivity."""
    strategy = Strategy.parse(strategy)
    R = params.R
    if not 0 <= r <= R + 1e-15:
        raise ValueError(f"relay distance {r} outside [0, {R}]")
    n_full = mean_count(d, a - R, a)
    pc = -math.expm1(-n_full)
    if pc <= 0:
        raise ValueError(f"no node can be reached from a={a}: connectivity probability is 0")
    if strategy is Strategy.NP:
        val = -math.expm1(-mean_count(d, a - r, a)) / pc
    else:
        val = (math.exp(-mean_count(d, a - R, a - r)) - math.exp(-n_full)) / pc
    return min(max(val, 0.0), 1.0)


def _clamp(lo, hi, L):
    return max(lo, 0.0), min(hi, L)


def neighbor_regions(ctx: LinkContext, params: NetworkParams, L: float, csma: bool = False) -> List[Region]:
    """Regions a potential interferer of the link may occupy.

    With ``csma`` the regions are split at ``cs_range`` around the transmitter;
    parts outside it are marked hidden.
    """
    a, r, R, RI = ctx.a, ctx.r, params.R, params.R_I
    if ctx.strategy is Strategy.NP:
        raw = [(a, a - r + RI, 1), (a - r - RI, a - r, 2)]
    else:
        raw = [(a - r, a - r + RI, 1), (a - r - RI, a - R, 2)]
    out = []
    for lo, hi, kind in raw:
        lo, hi = _clamp(lo, hi, L)
        if hi <= lo:
            continue
        if not csma:
            out.append(Region(lo, hi, False, kind))
            continue
        if params.cs_range is None:
            raise ValueError("CSMA regions need a carrier-sensing range")
        s_lo, s_hi = a - params.cs_range, a + params.cs_range
        pieces = [
            (lo, min(hi, s_lo), True),
            (max(lo, s_lo), min(hi, s_hi), False),
            (max(lo, s_hi), hi, True),
        ]
        out.extend(Region(p, q, h, kind) for p, q, h in pieces if q > p)
    return out


def region1_q_gap(d: DensityField, params: NetworkParams, ctx: LinkContext) -> float:
    """Probability that an interferer in Region 1 has neither a nor b in its backward range.

    Empty numerator interval gives 0; an empty Region 1 gives 1.
    """
    a, r, R, RI = ctx.a, ctx.r, params.R, params.R_I
    top = a - r + RI
    num = mean_count(d, a + R, top)
    lower = a if ctx.strategy is Strategy.NP else a - r
    den = mean_count(d, lower, top)
    if den <= 0:
        return 1.0
    return min(num / den, 1.0)


def interfere_given_transmit_mpr(d: DensityField, params: NetworkParams, i_pos: float, q_gap: float) -> float:
    """P(node i actually transmits | in transmit mode), fixed-radius strategy."""
    return 1.0 - q_gap * math.exp(-mean_count(d, i_pos - params.R, i_pos))


def interfere_given_transmit_varpow(
    d: DensityField, params: NetworkParams, i_pos: float, s: float, q_gap: float, strategy
) -> float:
    """P(node i at distance ``s`` from the receiver interferes | i in transmit mode).

    Node i's link distance must reach ``s / beta^(1/gamma)``; its distribution is
    the relay CDF at ``i_pos`` for the same strategy.
    """
    strategy = Strategy.parse(strategy)
    u_min = s / params.range_factor
    if u_min >= params.R:
        return 0.0
    n_back = mean_count(d, i_pos - params.R, i_pos)
    if n_back <= 0:
        log.debug("node at %.6g has no backward neighbours; treated as silent", i_pos)
        return 0.0
    tail = 1.0 - relay_cdf(d, params, i_pos, u_min, strategy)
    return (1.0 - q_gap * math.exp(-n_back)) * tail


INTERFERER_MODELS = ("independent", "exact")


def _check_model(model: str) -> str:
    if model not in INTERFERER_MODELS:
        raise ValueError(f"unknown interferer model {model!r}; expected one of {INTERFERER_MODELS}")
    return model


def exact_region1_interference(d: DensityField, params: NetworkParams, strategy: Strategy, a, b, x):
    """P(node at ``x`` in Region 1 interferes | transmit mode), conditioned on its exact position.

    Uses the known nodes a and b and the empty excluded region instead of the
    region-averaged gap probability and the unconditional relay law. Broadcasts
    over ``a``, ``b`` and ``x``.
    """
    R = params.R
    x = np.asarray(x, float)
    u = np.abs(x - b) / params.range_factor
    n_back = mean_counts(d, x - R, x)
    if strategy is Strategy.MPR:
        return np.where(x >= a + R, -np.expm1(-n_back), 1.0)
    if strategy is Strategy.MP:
        # a Poisson node at least u behind x (none can sit in the excluded region here)
        far = np.where(u < R, -np.expm1(-mean_counts(d, x - R, x - u)), 0.0)
        near_ab = (x <= a) | ((x < a + R) & ((x < b + R) | (x - a >= u)))
        return np.where(near_ab, 1.0, far)
    gap_clear = np.exp(-mean_counts(d, x - u, x))
    return np.where(
        x < a + R,
        np.where(x - a >= u, gap_clear, 0.0),
        np.where(u < R, gap_clear - np.exp(-n_back), 0.0),
    )


def _region_breakpoints(d: DensityField, params: NetworkParams, region: Region, ctx: LinkContext,
                        exact: bool = False):
    shifts = [0.0, params.R]
    bps = []
    for b in d.breakpoints + (0.0, d.L):
        for sh in shifts:
            bps.append(b + sh)
    bps.append(ctx.b)
    if ctx.strategy is not Strategy.MPR:
        # kinks where the required link distance |x - b| / factor meets a breakpoint
        f = params.range_factor
        for b in d.breakpoints + (0.0,):
            for sign in (1.0, -1.0):
                # x - (|x - b_link| / f) == b  solved on each side of the receiver
                denom = 1.0 - sign / f
                if abs(denom) > 1e-12:
                    bps.append((b - sign * ctx.b / f) / denom)
        bps.append(ctx.b + params.R_I)
        bps.append(ctx.b - params.R_I)
    if exact:
        f = params.range_factor
        bps += [ctx.a, ctx.a + params.R, ctx.b + params.R, (ctx.a - ctx.b / f) / (1.0 - 1.0 / f)]
    return [x for x in bps if region.lo < x < region.hi]


def interference_prob(
    d: DensityField,
    params: NetworkParams,
    ctx: LinkContext,
    csma: bool = False,
    tol: float = 1e-9,
    model: str = "independent",
) -> InterferenceResult:
    """P(I_N): probability a random neighbor of the receiver interferes if transmitting.

    ``model="independent"`` averages the gap probability over Region 1 and uses the
    unconditional relay law for every interferer; ``model="exact"`` conditions
    Region-1 interferers on their exact position relative to a and b.
    """
    _check_model(model)
    q1 = region1_q_gap(d, params, ctx)
    terms = []
    for reg in neighbor_regions(ctx, params, d.L, csma=csma):
        q = q1 if reg.kind == 1 else 1.0
        nbar = mean_count(d, reg.lo, reg.hi)
        if nbar <= 0:
            continue
        if model == "exact" and reg.kind == 1:
            def h(x):
                return float(exact_region1_interference(d, params, ctx.strategy, ctx.a, ctx.b, x)) * d.density(x)
        elif ctx.strategy is Strategy.MPR:
            def h(x, q=q):
                return interfere_given_transmit_mpr(d, params, x, q) * d.density(x)
        else:
            def h(x, q=q):
                s = abs(x - ctx.b)
                return interfere_given_transmit_varpow(d, params, x, s, q, ctx.strategy) * d.density(x)
        cuts = _region_breakpoints(d, params, reg, ctx, exact=model == "exact" and reg.kind == 1)
        val = integrate(h, reg.lo, reg.hi, tol=tol, breakpoints=cuts)
        terms.append(RegionTerm(reg, nbar, float(min(max(val / nbar, 0.0), 1.0)), q))
    total = sum(t.mean_count for t in terms)
    if total <= 0:
        return InterferenceResult(0.0, ())
    value = sum(t.conditional * t.mean_count for t in terms) / total
    return InterferenceResult(float(min(max(value, 0.0), 1.0)), tuple(terms))


# ---------------------------------------------------------------------------
# Vectorized tables used by the throughput profiles.


@dataclass(frozen=True)
class LinkTable:
    """Per transmitter position: relay-distance quadrature and interference exposures.

    For position ``positions[k]``, ``weights[k]`` integrate against the
    unnormalized relay-distance density, so ``sum(weights[k] * g(r[k]))``
    equals ``P(C_a) * E[g(r_a) | C_a]``. ``sensed`` and ``hidden`` hold the
    expected number of would-be interferers, split by the transmitter's
    carrier-sensing range (everything is ``sensed`` when no range is set).
    """

    positions: np.ndarray
    r: Tuple[np.ndarray, ...]
    weights: Tuple[np.ndarray, ...]
    sensed: Tuple[np.ndarray, ...]
    hidden: Tuple[np.ndarray, ...]
    connect: np.ndarray
    strategy: Strategy
    params: NetworkParams = field(repr=False)
    model: str = "independent"


def _relay_density(d: DensityField, R: float, a: float, r: np.ndarray, strategy: Strategy) -> np.ndarray:
    b = a - r
    nb = d.density(b)
    if strategy is Strategy.NP:
        empty = mean_counts(d, b, np.full_like(b, a))
    else:
        empty = mean_counts(d, np.full_like(b, a - R), b)
    return nb * np.exp(-empty)


def _fixed_cuts(d: DensityField, R: float):
    # kinks of n(x) and of the backward count N(x - R, x), including the road ends
    pts = d.breakpoints + (0.0, d.L)
    return tuple(sorted(set(pts + tuple(p + R for p in pts))))


def _piecewise(lo, hi, cuts, coarse, fine, integrand):
    """Sum of Gauss-Legendre integrals of ``integrand`` over [lo, hi] split at ``cuts`` (per row)."""
    inside = [c for c in cuts if np.any((c > lo) & (c < hi))]
    if not inside:
        edges = [lo, hi]
        nodes, wts = coarse
    else:
        cols = [lo] + [np.broadcast_to(c, lo.shape) for c in inside] + [hi]
        edges = np.sort(np.clip(np.column_stack(cols), lo[:, None], hi[:, None]), axis=1).T
        nodes, wts = fine
    total = np.zeros_like(lo)
    for p_lo, p_hi in zip(edges[:-1], edges[1:]):
        width = p_hi - p_lo
        if not np.any(width > 0):
            continue
        x = p_lo[:, None] + 0.5 * width[:, None] * (nodes[None, :] + 1.0)
        w = 0.5 * width[:, None] * wts[None, :]
        total += np.sum(integrand(x) * w, axis=1)
    return total


def _exposure(d, params, strategy, a, r, q1, lo, hi, coarse, fine, exact=False):
    """Integral of (interference prob x density) over [lo, hi] for each r (vectorized).

    ``q1`` is the Region-1 gap probability per r, or None for Region 2.
    """
    R = params.R
    b = (a - r)[:, None]
    cuts = list(_fixed_cuts(d, R))
    lo = np.maximum(lo, 0.0)
    hi = np.maximum(hi, lo)
    if exact and q1 is not None:
        # the position-conditioned integrand jumps where a, b or the gap condition
        # enter a node's backward range
        f = params.range_factor
        cross = (a - (a - r) / f) / (1.0 - 1.0 / f)  # x - a = (x - b) / f
        cuts += [a, a + R, a - r + R, cross]

        def integrand(x):
            return exact_region1_interference(d, params, strategy, a, b, x) * d.density(x)

        return _piecewise(lo, hi, cuts, coarse, fine, integrand)

    q = q1[:, None] if q1 is not None else 1.0
    if strategy is not Strategy.MPR:
        # where the required link distance reaches back to a breakpoint
        f = params.range_factor
        for p in d.breakpoints + (0.0,):
            for sign in (1.0, -1.0):
                cuts.append((p - sign * (a - r) / f) / (1.0 - sign / f))
        # with the receiver next to the road start the tail ratio varies on the scale of b
        cuts += [2.0 * (a - r), 8.0 * (a - r)]

    def integrand(x):
        n_back = mean_counts(d, x - R, x)
        h = 1.0 - q * np.exp(-n_back)
        if strategy is not Strategy.MPR:
            u = np.abs(x - b) / params.range_factor
            pc = -np.expm1(-n_back)
            if strategy is Strategy.NP:
                part = -np.expm1(-mean_counts(d, x - u, x))
            else:
                part = np.exp(-mean_counts(d, x - R, x - u)) - np.exp(-n_back)
            with np.errstate(divide="ignore", invalid="ignore"):
                tail = np.where(pc > 0, 1.0 - part / pc, 0.0)
            h = h * np.where(u >= R, 0.0, np.clip(tail, 0.0, 1.0))
        return h * d.density(x)

    return _piecewise(lo, hi, cuts, coarse, fine, integrand)


def link_table(
    d: DensityField,
    params: NetworkParams,
    strategy,
    positions: Sequence[float],
    r_panels: int = 16,
    s_panels: int = 12,
    order: int = 8,
    model: str = "independent",
) -> LinkTable:
    """Precompute relay quadrature and interference exposures at each position.

    None of the tabulated quantities depend on the transmission probability,
    so one table serves every p and both MAC protocols.
    """
    strategy = Strategy.parse(strategy)
    exact = _check_model(model) == "exact"
    positions = np.asarray(positions, dtype=float)
    R, RI, L = params.R, params.R_I, d.L
    cs = params.cs_range
    gl_t, gl_w = gauss_legendre_panels(-1.0, 1.0, s_panels, order)
    coarse = (gl_t, gl_w)
    fine = gauss_legendre_panels(-1.0, 1.0, max(s_panels // 4, 1), order)
    rs, ws, sensed, hidden, conn = [], [], [], [], []
    for a in positions:
        r_hi = min(R, a)
        cuts = [0.0, r_hi] + [a - bp for bp in d.breakpoints if 0.0 < a - bp < r_hi]
        r, w = composite_nodes(sorted(cuts), R / r_panels, order) if r_hi > 0 else (np.empty(0), np.empty(0))
        conn.append(-math.expm1(-mean_count(d, a - R, a)))
        if r.size == 0:
            rs.append(r); ws.append(w); sensed.append(r.copy()); hidden.append(r.copy())
            continue
        w = w * _relay_density(d, R, a, r, strategy)
        b = a - r
        # Region 1 and Region 2 bounds per strategy, clamped to the road.
        if strategy is Strategy.NP:
            r1_lo, r1_hi = np.full_like(r, a), b + RI
            r2_lo, r2_hi = b - RI, b
            den_lo = np.full_like(r, a)
        else:
            r1_lo, r1_hi = b, b + RI
            r2_lo, r2_hi = b - RI, np.full_like(r, a - R)
            den_lo = b
        num = mean_counts(d, np.full_like(r, a + R), r1_hi)
        den = mean_counts(d, den_lo, r1_hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            q1 = np.where(den > 0, np.minimum(num / np.where(den > 0, den, 1.0), 1.0), 1.0)
        tot_s = np.zeros_like(r)
        tot_h = np.zeros_like(r)
        for lo, hi, q in ((r1_lo, r1_hi, q1), (r2_lo, r2_hi, None)):
            lo = np.maximum(lo, 0.0)
            hi = np.minimum(hi, L)
            if cs is None:
                tot_s += _exposure(d, params, strategy, a, r, q, lo, hi, coarse, fine, exact)
                continue
            s_lo, s_hi = a - cs, a + cs
            pieces = [
                (lo, np.minimum(hi, s_lo), True),
                (np.maximum(lo, s_lo), np.minimum(hi, s_hi), False),
                (np.maximum(lo, s_hi), hi, True),
            ]
            for p_lo, p_hi, is_hidden in pieces:
                p_hi = np.maximum(p_hi, p_lo)
                if not np.any(p_hi > p_lo):
                    continue
                val = _exposure(d, params, strategy, a, r, q, p_lo, p_hi, coarse, fine, exact)
                if is_hidden:
                    tot_h += val
                else:
                    tot_s += val
        rs.append(r); ws.append(w); sensed.append(tot_s); hidden.append(tot_h)
    return LinkTable(
        positions=positions,
        r=tuple(rs),
        weights=tuple(ws),
        sensed=tuple(sensed),
        hidden=tuple(hidden),
        connect=np.array(conn),
        strategy=strategy,
        params=params,
        model=model,
    )
