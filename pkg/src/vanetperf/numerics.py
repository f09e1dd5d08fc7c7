"""Shared numerical primitives: quadrature, grid interpolation, scalar maximization."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI_SQ = (3 - math.sqrt(5)) / 2


class NonFiniteError(ValueError):
    """Raised when an integrand or objective returns a non-finite value."""


@dataclass(frozen=True)
class Grid1D:
    """Uniformly spaced samples ``values[i]`` at ``x0 + i * dx``."""

    x0: float
    dx: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("grid must hold a non-empty 1-D sequence of values")
        if values.size < 2:
            raise ValueError("grid needs at least two samples")
        if not self.dx > 0:
            raise ValueError(f"grid spacing must be positive, got {self.dx}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.values.size)

    @property
    def x_end(self) -> float:
        return self.x0 + self.dx * (self.values.size - 1)

    def __len__(self):
        return self.values.size


def interp(grid: Grid1D, x):
    """Piecewise-linear interpolation of ``grid``, clamped to the end values."""
    if grid is None or len(grid.values) == 0:
        raise ValueError("cannot interpolate an empty grid")
    xs = np.asarray(x, dtype=float)
    t = (xs - grid.x0) / grid.dx
    last = grid.values.size - 1
    t = np.clip(t, 0.0, last)
    i = np.minimum(np.floor(t).astype(int), last - 1)
    w = t - i
    out = grid.values[i] * (1.0 - w) + grid.values[i + 1] * w
    if np.ndim(x) == 0:
        return float(out)
    return out


def _check(value: float, x: float) -> float:
    if not math.isfinite(value):
        raise NonFiniteError(f"integrand is not finite at x={x!r} (value {value!r})")
    return value


def _simpson_adapt(f, a, fa, b, fb, m, fm, whole, tol, depth, forced=2):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = _check(f(lm), lm)
    frm = _check(f(rm), rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    # the first levels always split: a coarse estimate can agree with its refinement by accident
    if depth <= 0 or (forced <= 0 and abs(delta) <= 15.0 * tol):
        return left + right + delta / 15.0
    return (_simpson_adapt(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1, forced - 1)
            + _simpson_adapt(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1, forced - 1))


def _simpson_panel(f, a, b, tol, max_depth, n_seed):
    # Seed with a few sub-panels so narrow features are not skipped on the first test.
    edges = np.linspace(a, b, n_seed + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = 0.5 * (lo + hi)
        flo = _check(f(lo), lo)
        fhi = _check(f(hi), hi)
        fm = _check(f(m), m)
        whole = (hi - lo) / 6.0 * (flo + 4.0 * fm + fhi)
        total += _simpson_adapt(f, lo, flo, hi, fhi, m, fm, whole, tol / n_seed, max_depth)
    return total


def integrate(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-8,
    breakpoints: Optional[Iterable[float]] = None,
    max_depth: int = 40,
) -> float:
    """Adaptive composite Simpson quadrature of ``f`` over ``[lo, hi]``.

    ``tol`` is relative to a crude magnitude estimate of the integral, with an
    absolute floor of ``tol`` itself. Known kinks passed in ``breakpoints`` are
    used to split the interval before refinement.
    """
    if hi < lo:
        raise ValueError(f"integration bounds reversed: lo={lo}, hi={hi}")
    if hi == lo:
        return 0.0
    cuts = [lo, hi]
    if breakpoints is not None:
        cuts.extend(b for b in breakpoints if lo < b < hi)
    cuts = sorted(set(cuts))

    # Coarse magnitude estimate to turn the relative tolerance into an absolute one.
    probe = np.linspace(lo, hi, 17)
    scale = (hi - lo) * max(abs(_check(f(float(x)), float(x))) for x in probe)
    abs_tol = tol * max(scale, 1.0) if scale > 0 else tol

    total = 0.0
    span = hi - lo
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        total += _simpson_panel(f, a, b, abs_tol * (b - a) / span, max_depth, 4)
    return total


def gauss_legendre_panels(lo: float, hi: float, n_panels: int, order: int):
    """Nodes and weights of composite Gauss-Legendre quadrature on ``[lo, hi]``."""
    if hi <= lo:
        return np.empty(0), np.empty(0)
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def composite_nodes(cuts: Sequence[float], panel_width: float, order: int):
    """Gauss-Legendre nodes/weights over consecutive intervals in ``cuts``.

    Each interval gets enough panels that no panel is wider than ``panel_width``.
    """
    xs, ws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        n = max(1, int(math.ceil((b - a) / panel_width)))
        x, w = gauss_legendre_panels(a, b, n, order)
        xs.append(x)
        ws.append(w)
    if not xs:
        return np.empty(0), np.empty(0)
    return np.concatenate(xs), np.concatenate(ws)


@dataclass(frozen=True)
class ScalarMax:
    argmax: float
    max: float
    flat: bool
    scan_x: np.ndarray
    scan_f: np.ndarray


def golden_section_max(f, a, b, tol=1e-6):
    """Golden-section search for a maximum of a unimodal ``f`` on ``[a, b]``."""
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        x = 0.5 * (a + b)
        return x, f(x)
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    c = a + INV_PHI_SQ * h
    d = a + INV_PHI * h
    yc = f(c)
    yd = f(d)
    for _ in range(n - 1):
        if yc > yd:
            b, d, yd = d, c, yc
            h *= INV_PHI
            c = a + INV_PHI_SQ * h
            yc = f(c)
        else:
            a, c, yc = c, d, yd
            h *= INV_PHI
            d = a + INV_PHI * h
            yd = f(d)
    return (c, yc) if yc > yd else (d, yd)


def maximize_scalar(
    f: Callable[[float], float],
    lo: float = 0.0,
    hi: float = 1.0,
    tol: float = 1e-6,
    n_scan: int = 64,
) -> ScalarMax:
    """Grid scan followed by golden-section refinement around the best scan point.

    A constant objective is reported as ``flat`` with ``argmax == lo``.
    """
    if not (0.0 <= lo < hi <= 1.0):
        raise ValueError(f"need 0 <= lo < hi <= 1, got lo={lo}, hi={hi}")
    n_scan = max(int(n_scan), 64)
    xs = np.linspace(lo, hi, n_scan)
    fs = np.empty_like(xs)
    for k, x in enumerate(xs):
        v = float(f(float(x)))
        if not math.isfinite(v):
            raise NonFiniteError(f"objective is not finite at p={x!r}")
        fs[k] = v

    spread = fs.max() - fs.min()
    if spread <= 1e-15 * max(1.0, abs(fs.max())):
        return ScalarMax(lo, float(fs[0]), True, xs, fs)

    k = int(np.argmax(fs))
    a = xs[max(k - 1, 0)]
    b = xs[min(k + 1, n_scan - 1)]

    def checked(x):
        v = float(f(x))
        if not math.isfinite(v):
            raise NonFiniteError(f"objective is not finite at p={x!r}")
        return v

    x_best, f_best = golden_section_max(checked, a, b, tol)
    if fs[k] > f_best:
        x_best, f_best = float(xs[k]), float(fs[k])
    return ScalarMax(float(x_best), float(f_best), False, xs, fs)
