"""Misclassification probability of the reconstruction and its integral.

For a point ``x`` the reconstruction ``Z~`` built from simple kriging of the
conditioned field on ``E`` disagrees with ``Z`` about membership of ``x`` in
the excursion set with probability

    rho(x) = Phi2(c, S) + Phi2(-c, S),
    c = (m_n(x) - t, t - m_n(x)),
    S = [[K_n(x, x), -gamma(x)], [-gamma(x), gamma(x)]],

where ``gamma(x) = K_n(E, x)^T K_n(E, E)^{-1} K_n(E, x)``. The expected
distance in measure between the two excursion sets is the integral of
``rho`` over the domain.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import ndtr

from .bvn import rho_moments, rho_parts_cov
from .designs import Design, sobol
from .gp import AffinePredictor, DegenerateUpdateError, KrigingMode, PosteriorGp, _as_points

__all__ = [
    "Direction",
    "ExcursionSpec",
    "IntegrationMeasure",
    "EvalCounter",
    "CriterionState",
    "rho",
    "rho_predictor",
    "edm",
    "edm_empirical",
    "coverage_probability",
    "DEFAULT_NODES",
]

DEFAULT_NODES = 2048
# residual variance below this fraction of K_n(x, x) means Z~(x) == Z(x)
_EXACT_RTOL = 1e-12


class Direction(enum.Enum):
    ABOVE = "above"
    BELOW = "below"


@dataclass(frozen=True)
class ExcursionSpec:
    threshold: float
    direction: Direction = Direction.ABOVE

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        if np.isnan(self.threshold):
            raise ValueError("threshold must not be NaN")

    @property
    def sign(self) -> float:
        return 1.0 if self.direction is Direction.ABOVE else -1.0

    def indicator(self, values) -> np.ndarray:
        values = np.asarray(values)
        if self.direction is Direction.ABOVE:
            return values >= self.threshold
        return values <= self.threshold


@dataclass(frozen=True)
class IntegrationMeasure:
    """Uniform measure on the unit cube represented by QMC nodes."""

    nodes: Design
    total_mass: float = 1.0

    def __post_init__(self):
        if self.nodes.r < 1:
            raise ValueError("integration needs at least one node")
        if not self.total_mass > 0:
            raise ValueError("total mass must be positive")

    @classmethod
    def sobol(cls, d: int, count: int = DEFAULT_NODES, skip: int = 1) -> "IntegrationMeasure":
        return cls(sobol(d, count, skip))

    def integrate(self, values) -> float:
        return self.total_mass * float(np.mean(values))


@dataclass
class EvalCounter:
    """Number of bivariate-normal pair evaluations (both tails count once)."""

    count: int = 0

    def add(self, k: int) -> None:
        self.count += int(k)


def coverage_probability(mean, var, exc: ExcursionSpec) -> np.ndarray:
    """Pointwise ``P_n(x in Gamma)`` from Gaussian marginals."""
    mean = exc.sign * np.asarray(mean, dtype=float)
    t = exc.sign * exc.threshold
    sd = np.sqrt(np.maximum(var, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (mean - t) / sd
    z = np.where(sd > 0, z, np.where(mean >= t, np.inf, -np.inf))
    return ndtr(z)


def _rho_from_moments(mean, var, gamma, t, counter=None) -> np.ndarray:
    out = rho_moments(mean, var, gamma, t, _EXACT_RTOL)
    if counter is not None:
        counter.add(np.size(out))
    return out


@dataclass(frozen=True, eq=False)
class CriterionState:
    """Simulation points chosen so far with cached kriging quantities.

    ``nodes`` carries the per-node caches (signed conditional mean, variance,
    ``L_E^{-1} K_n(E, nodes)`` and ``gamma``); they are kept in sync with
    :meth:`add_point` through the kriging update formulas, so adding a point
    costs ``O(M (n + m))`` for ``M`` nodes.
    """

    gp: PosteriorGp
    exc: ExcursionSpec
    mu: IntegrationMeasure
    E: np.ndarray
    chol: np.ndarray
    node_mean: np.ndarray
    node_var: np.ndarray
    node_v: np.ndarray       # L_X^{-1} k(X, nodes)
    node_u: np.ndarray       # ordinary-kriging correction terms
    node_q: np.ndarray       # L_E^{-1} K_n(E, nodes)
    node_gamma: np.ndarray
    counter: EvalCounter = field(default_factory=EvalCounter)

    @classmethod
    def create(cls, gp: PosteriorGp, exc: ExcursionSpec,
               mu: IntegrationMeasure | None = None, Em=None,
               counter: EvalCounter | None = None) -> "CriterionState":
        """State for ``gp`` with optional initial simulation points ``Em``.

        Points of ``Em`` with no residual variance left (observations, repeats)
        carry no information and are dropped, so ``state.m`` can be smaller
        than ``len(Em)``; the criterion is unaffected.
        """
        if mu is None:
            mu = IntegrationMeasure.sobol(gp.d)
        nodes = mu.nodes.points
        mean, var, v, u = gp.moments(nodes)
        M = nodes.shape[0]
        state = cls(gp, exc, mu, np.empty((0, gp.d)), np.empty((0, 0)),
                    exc.sign * mean, var, v, u, np.empty((0, M)), np.zeros(M),
                    counter if counter is not None else EvalCounter())
        if Em is not None:
            for e in _as_points(Em):
                try:
                    state = state.add_point(e)
                except DegenerateUpdateError:
                    continue
        return state

    @property
    def m(self) -> int:
        return self.E.shape[0]

    @property
    def t(self) -> float:
        return self.exc.sign * self.exc.threshold

    def _kn_nodes(self, x: np.ndarray) -> np.ndarray:
        """``K_n(nodes, x)`` reusing the cached node solves."""
        gp = self.gp
        kx = gp.kernel(self.mu.nodes.points, x)
        _, vx, ux = gp.cross(x)
        out = kx - self.node_v.T @ vx
        if gp.ordinary:
            out += np.outer(self.node_u, ux) / gp.ones_norm
        return out

    def _solve_E(self, x: np.ndarray) -> np.ndarray:
        if self.m == 0:
            return np.empty((0, x.shape[0]))
        return linalg.solve_triangular(self.chol, self.gp.cov(self.E, x), lower=True,
                                       check_finite=False)

    def residual_var(self, x) -> np.ndarray:
        """``s^2_{n,m}(x)`` for the current simulation points."""
        x = _as_points(x)
        q = self._solve_E(x)
        return np.maximum(self.gp.var(x) - np.einsum("ij,ij->j", q, q), 0.0)

    def gamma(self, x) -> np.ndarray:
        x = _as_points(x)
        q = self._solve_E(x)
        return np.einsum("ij,ij->j", q, q)

    def rho(self, x) -> np.ndarray:
        """``rho_{n,m}`` at arbitrary points ``x`` (shape ``(M, d)``)."""
        x = _as_points(x)
        mean, var, _, _ = self.gp.moments(x)
        gamma = np.einsum("ij,ij->j", q := self._solve_E(x), q)
        return _rho_from_moments(self.exc.sign * mean, var, gamma, self.t, self.counter)

    def rho_nodes(self) -> np.ndarray:
        return _rho_from_moments(self.node_mean, self.node_var, self.node_gamma, self.t,
                                 self.counter)

    def edm(self) -> float:
        return self.mu.integrate(self.rho_nodes())

    def _candidate_terms(self, X: np.ndarray):
        """Residual covariances with the nodes and residual variances at ``X``."""
        kn = self._kn_nodes(X)                       # (M, P)
        qx = self._solve_E(X)                        # (m, P)
        kc = kn - self.node_q.T @ qx                 # K_{n,E}(nodes, X)
        var_x = self.gp.var(X) - np.einsum("ij,ij->j", qx, qx)
        return kc, var_x, qx

    def edm_candidates(self, X, rtol: float = 1e-10) -> np.ndarray:
        """Integrated criterion after adding each row of ``X`` separately.

        Candidates with (numerically) zero residual variance bring no
        information and get the current value.
        """
        X = _as_points(X)
        kc, var_x, _ = self._candidate_terms(X)
        ok = var_x > rtol * self.gp.variance
        out = np.full(X.shape[0], np.nan)
        if (~ok).any():
            out[~ok] = self.edm()
        if ok.any():
            g = self.node_gamma[:, None] + kc[:, ok] ** 2 / var_x[ok]
            r = _rho_from_moments(self.node_mean[:, None], self.node_var[:, None], g,
                                  self.t, self.counter)
            out[ok] = self.mu.total_mass * r.mean(axis=0)
        return out

    def add_point(self, e, rtol: float = 1e-10) -> "CriterionState":
        """New state with ``e`` appended to the simulation points."""
        e = _as_points(e)
        if e.shape != (1, self.gp.d):
            raise ValueError("add_point expects a single point")
        kc, var_e, qe = self._candidate_terms(e)
        var_e = float(var_e[0])
        if var_e <= rtol * self.gp.variance:
            raise DegenerateUpdateError(f"no residual variance left at {e[0]}")
        diag = np.sqrt(var_e)
        m = self.m
        L = np.zeros((m + 1, m + 1))
        L[:m, :m] = self.chol
        L[m, :m] = qe[:, 0]
        L[m, m] = diag
        new_row = kc[:, 0] / diag
        node_q = np.vstack([self.node_q, new_row[None, :]])
        node_gamma = np.minimum(self.node_gamma + new_row**2, self.node_var)
        return CriterionState(self.gp, self.exc, self.mu, np.vstack([self.E, e]), L,
                              self.node_mean, self.node_var, self.node_v, self.node_u,
                              node_q, node_gamma, self.counter)

    def predictor(self, mode=KrigingMode.SIMPLE) -> AffinePredictor:
        from .gp import kriging_weights

        return kriging_weights(self.gp, self.E, mode)


def rho(state: CriterionState, x) -> np.ndarray:
    return state.rho(x)


def rho_predictor(gp: PosteriorGp, pred: AffinePredictor, exc: ExcursionSpec, x) -> np.ndarray:
    """Misclassification probability for a general affine predictor.

    Uses the full moment form: ``E Z~ = a + b^T m_n(E)``, ``Var Z~ = b^T K b``
    and ``Cov(Z, Z~) = b^T K_n(E, x)``.
    """
    x = _as_points(x)
    s = exc.sign
    mean, var, _, _ = gp.moments(x)
    mean_tilde = pred.trend(x) + pred.weights(x).T @ pred.mean_E
    var_tilde = pred.gamma(x)
    cov = pred.covariance_with_field(x)
    t = s * exc.threshold
    c1 = s * mean - t
    c2 = t - s * mean_tilde
    out = rho_parts_cov(c1, c2, var, var_tilde, -cov)
    resid = var - 2 * cov + var_tilde
    exact = ((resid <= _EXACT_RTOL * np.maximum(var, 1e-300))
             & (np.abs(c1 + c2) <= 1e-12 * (1 + np.abs(t))))
    return np.clip(np.where(exact, 0.0, out), 0.0, 1.0)


def edm(state: CriterionState, mu: IntegrationMeasure | None = None) -> float:
    """Expected distance in measure; uses the cached nodes when ``mu`` is theirs."""
    if mu is None or mu is state.mu:
        return state.edm()
    return mu.integrate(state.rho(mu.nodes.points))


def edm_empirical(realizations, reconstructions, mu: IntegrationMeasure | None = None) -> float:
    """Monte-Carlo symmetric-difference measure between paired ensembles."""
    a = np.asarray(getattr(realizations, "masks", realizations), dtype=bool)
    b = np.asarray(getattr(reconstructions, "masks", reconstructions), dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"ensemble shapes differ: {a.shape} vs {b.shape}")
    mass = 1.0 if mu is None else mu.total_mass
    return mass * float(np.mean(a != b))
