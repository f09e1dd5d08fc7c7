"""scikit-learn style wrappers around the functional modules.

Inputs follow the usual array conventions: positions are an ``(n,)`` or
``(n, 1)`` array in km, and density samples are an ``(m, 2)`` array of
``(x_km, veh_per_km)`` rows on a uniform grid starting at 0.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .interference import NetworkParams, Strategy
from .mac import Protocol, build_table, evaluation_positions, perf
from .numerics import Grid1D, interp
from .optimizer import P_MAX, P_MIN, optimize_global, optimize_local
from .traffic import ArrivalSpec, DensityField, Junction, VelocityProfile, steady_state_density


def _positions(X) -> np.ndarray:
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"expected positions with one column, got shape {X.shape}")
        X = X[:, 0]
    return X


def field_from_samples(X) -> DensityField:
    """DensityField from ``(x_km, density)`` rows on a uniform grid starting at 0."""
    X = check_array(X, dtype=float)
    if X.shape[1] != 2:
        raise ValueError(f"density samples need two columns (x_km, density), got shape {X.shape}")
    x = X[:, 0]
    if X.shape[0] < 2:
        raise ValueError("need at least two density samples")
    dx = np.diff(x)
    if not np.allclose(dx, dx[0], rtol=1e-6, atol=1e-12) or dx[0] <= 0:
        raise ValueError("density samples must lie on an increasing uniform grid")
    return DensityField(Grid1D(float(x[0]), float(dx[0]), X[:, 1]), float(x[-1]))


def field_to_samples(d: DensityField) -> np.ndarray:
    return np.column_stack([d.x, d.n.values])


class DensityModel(BaseEstimator, TransformerMixin):
    """Steady-state density from a velocity profile; ``transform`` maps positions to n(x)."""

    def __init__(self, alpha=10.0, breakpoints=(0.0, 5.0), speeds=(0.8333, 0.8333),
                 junctions=(), grid_dx=0.001):
        self.alpha = alpha
        self.breakpoints = breakpoints
        self.speeds = speeds
        self.junctions = junctions
        self.grid_dx = grid_dx

    def fit(self, X=None, y=None):
        v = VelocityProfile(tuple(self.breakpoints), tuple(self.speeds))
        juncs = tuple(j if isinstance(j, Junction) else Junction(*j) for j in self.junctions)
        self.field_ = steady_state_density(v, ArrivalSpec(float(self.alpha), juncs), dx=self.grid_dx)
        self.total_ = self.field_.total
        return self

    def transform(self, X):
        check_is_fitted(self, "field_")
        return np.asarray(self.field_.density(_positions(X)), dtype=float).reshape(-1, 1)

    def samples(self) -> np.ndarray:
        check_is_fitted(self, "field_")
        return field_to_samples(self.field_)


class _NetworkEstimator(BaseEstimator):
    def _params(self) -> NetworkParams:
        csma = Protocol.parse(self.protocol) is Protocol.CSMA
        return NetworkParams(
            R=self.R, beta=self.beta, gamma=self.gamma,
            cs_range=self.cs_range if csma else None,
            tau=self.tau if csma else None,
        )

    def _fit_table(self, X):
        self.field_ = field_from_samples(X)
        self.params_ = self._params()
        self.table_ = build_table(self.field_, self.params_, Strategy.parse(self.strategy),
                                  evaluation_positions(self.field_.L, self.n_positions),
                                  model=self.interferer_model)


class ThroughputModel(_NetworkEstimator, RegressorMixin):
    """Analytical throughput and progress profile at a fixed transmission probability.

    ``fit`` takes density samples; ``predict`` returns ``(rho, pi)`` columns at
    the requested positions, interpolated from the evaluation grid.
    """

    def __init__(self, protocol="ALOHA", strategy="MPR", p=0.1, R=0.1, beta=10.0, gamma=4.0,
                 tau=0.25, cs_range=0.178, n_positions=251, interferer_model="independent"):
        self.protocol = protocol
        self.strategy = strategy
        self.p = p
        self.R = R
        self.beta = beta
        self.gamma = gamma
        self.tau = tau
        self.cs_range = cs_range
        self.n_positions = n_positions
        self.interferer_model = interferer_model

    def fit(self, X, y=None):
        self._fit_table(X)
        self.profile_ = perf(self.field_, self.params_, self.p, self.protocol, self.strategy, table=self.table_)
        self.rho_avg_ = self.profile_.rho_avg
        self.pi_avg_ = self.profile_.pi_avg
        return self

    def predict(self, X):
        check_is_fitted(self, "profile_")
        x = _positions(X)
        return np.column_stack([interp(self.profile_.rho, x), interp(self.profile_.pi, x)])

    def score(self, X=None, y=None):
        """Network-average progress (higher is better)."""
        check_is_fitted(self, "profile_")
        return self.pi_avg_


class TransmissionOptimizer(_NetworkEstimator):
    """Road-wide and per-position transmission probabilities maximizing progress.

    ``predict`` returns the per-position optimum p*(x) at the requested positions.
    """

    def __init__(self, protocol="ALOHA", strategy="MPR", R=0.1, beta=10.0, gamma=4.0,
                 tau=0.25, cs_range=0.178, n_positions=251, p_min=P_MIN, p_max=P_MAX,
                 local=True, interferer_model="independent"):
        self.protocol = protocol
        self.strategy = strategy
        self.R = R
        self.beta = beta
        self.gamma = gamma
        self.tau = tau
        self.cs_range = cs_range
        self.n_positions = n_positions
        self.p_min = p_min
        self.p_max = p_max
        self.local = local
        self.interferer_model = interferer_model

    def fit(self, X, y=None):
        self._fit_table(X)
        args = (self.field_, self.params_, self.protocol, self.strategy, self.p_min, self.p_max, self.table_)
        self.global_ = optimize_global(*args)
        self.p_star_ = self.global_.p_star
        self.pi_star_ = self.global_.pi_at_star
        if self.local:
            self.local_ = optimize_local(*args)
        return self

    def predict(self, X):
        check_is_fitted(self, "p_star_")
        x = _positions(X)
        if not self.local:
            return np.full(x.shape, self.p_star_)
        return interp(self.local_.p_star, x)

    def score(self, X=None, y=None):
        check_is_fitted(self, "p_star_")
        return self.pi_star_
