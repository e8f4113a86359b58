"""Gaussian process posteriors conditioned on noise-free observations.

The posterior uses ordinary kriging (constant mean profiled out) unless the
mean is flagged as known, in which case simple kriging is used. Covariances
of the conditioned field are evaluated through cached triangular solves so
that ``PosteriorGp.cov(A, B)`` never refactorizes the observation matrix.
"""
from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .designs import Design
from .kernels import JITTER, KernelFamily, KernelSpec, MeanSpec

__all__ = [
    "FactorizationError",
    "DegenerateUpdateError",
    "Observations",
    "PosteriorGp",
    "KrigingMode",
    "AffinePredictor",
    "ConditionedGp",
    "MleResult",
    "cholesky_jitter",
    "cholesky_conditional",
    "concentrated_loglik",
    "fit_mle",
    "posterior",
    "kriging_weights",
    "residual_variance",
    "update_posterior",
    "loo_residuals",
    "dumps_model",
    "loads_model",
]

logger = logging.getLogger(__name__)

JITTER_LADDER = (JITTER, 1e-6, 1e-4)
MODEL_FORMAT_VERSION = 1
# squared Cholesky pivots below this fraction of the variance count as degenerate
_PIVOT_RTOL = 1e-10


class FactorizationError(np.linalg.LinAlgError):
    """Covariance matrix could not be factorized even with maximal jitter."""


class DegenerateUpdateError(ValueError):
    """Conditional variance at a new conditioning point is (numerically) zero."""


def _as_points(x) -> np.ndarray:
    if isinstance(x, Design):
        return x.points
    return np.atleast_2d(np.asarray(x, dtype=float))


def cholesky_jitter(K: np.ndarray, scale: float, ladder=JITTER_LADDER):
    """Lower Cholesky factor of ``K + jitter * scale * I`` with escalating jitter.

    Returns ``(L, jitter)`` where ``jitter`` is the relative level that succeeded.
    """
    n = K.shape[0]
    eye = np.eye(n)
    for level in ladder:
        try:
            L = linalg.cholesky(K + level * scale * eye, lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)) and np.all(np.diag(L) > 0):
            return L, level
    raise FactorizationError(
        f"matrix of size {n} not factorizable with jitter up to {ladder[-1]:g}"
    )


def cholesky_conditional(K: np.ndarray, scale: float):
    """Cholesky factor of a covariance matrix, adding a nugget only if needed.

    The plain factorization is kept when every squared pivot exceeds
    ``1e-10 * scale``; the posterior then conditions exactly on the data and
    agrees with the nugget-free rank-one updates. Near-duplicate points fall
    back to the jitter ladder of :func:`cholesky_jitter`.
    """
    try:
        L = linalg.cholesky(K, lower=True, check_finite=False)
        if L.size and np.min(np.diag(L)) ** 2 > _PIVOT_RTOL * scale:
            return L, 0.0
    except linalg.LinAlgError:
        pass
    return cholesky_jitter(K, scale)


@dataclass(frozen=True)
class Observations:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = _as_points(self.X).copy()
        y = np.asarray(self.y, dtype=float).ravel().copy()
        if X.shape[0] != y.size:
            raise ValueError("X and y have inconsistent lengths")
        if not np.all(np.isfinite(y)):
            raise ValueError("observations must be finite")
        if X.shape[0] > 1:
            diff = np.abs(X[:, None, :] - X[None, :, :]).max(axis=-1)
            np.fill_diagonal(diff, np.inf)
            if diff.min() <= 1e-12:
                raise ValueError("duplicate observation locations")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True, eq=False)
class PosteriorGp:
    """Conditional mean and covariance of the field given ``obs``.

    Build with :func:`posterior`; the attributes are derived caches.
    """

    kernel: KernelSpec
    mean: MeanSpec
    obs: Observations
    chol: np.ndarray
    beta_hat: float
    alpha: np.ndarray
    jitter: float
    ones_solve: np.ndarray  # L^{-1} 1
    ones_norm: float        # 1^T K^{-1} 1

    @property
    def variance(self) -> float:
        return self.kernel.variance

    @property
    def d(self) -> int:
        return self.kernel.d

    @property
    def ordinary(self) -> bool:
        return self.mean.estimated

    def cross(self, x):
        """Cached pieces ``(k(X, x), L^{-1} k(X, x), u(x))`` for points ``x``."""
        x = _as_points(x)
        kx = self.kernel(self.obs.X, x)
        v = linalg.solve_triangular(self.chol, kx, lower=True, check_finite=False)
        if self.ordinary:
            u = 1.0 - self.ones_solve @ v
        else:
            u = np.zeros(x.shape[0])
        return kx, v, u

    def mean_at(self, x) -> np.ndarray:
        _, v, _ = self.cross(x)
        return self.beta_hat + v.T @ self.alpha

    def cov(self, A, B=None) -> np.ndarray:
        A = _as_points(A)
        _, vA, uA = self.cross(A)
        if B is None:
            B, vB, uB = A, vA, uA
        else:
            B = _as_points(B)
            _, vB, uB = self.cross(B)
        out = self.kernel(A, B) - vA.T @ vB
        if self.ordinary:
            out += np.outer(uA, uB) / self.ones_norm
        return out

    def var(self, x) -> np.ndarray:
        x = _as_points(x)
        _, v, u = self.cross(x)
        out = self.kernel.variance - np.einsum("ij,ij->j", v, v)
        if self.ordinary:
            out += u * u / self.ones_norm
        return np.maximum(out, 0.0)

    def moments(self, x):
        """Mean, variance and the cross pieces at ``x`` in one pass."""
        x = _as_points(x)
        kx, v, u = self.cross(x)
        mean = self.beta_hat + v.T @ self.alpha
        var = self.kernel.variance - np.einsum("ij,ij->j", v, v)
        if self.ordinary:
            var += u * u / self.ones_norm
        return mean, np.maximum(var, 0.0), v, u


def posterior(obs: Observations, kernel: KernelSpec, mean: MeanSpec | None = None) -> PosteriorGp:
    """Condition the prior ``(mean, kernel)`` on noise-free observations."""
    mean = MeanSpec() if mean is None else mean
    if obs.d != kernel.d:
        raise ValueError("observation dimension does not match the kernel")
    K = kernel(obs.X, obs.X)
    L, level = cholesky_conditional(K, kernel.variance)
    ones_solve = linalg.solve_triangular(L, np.ones(obs.n), lower=True, check_finite=False)
    ones_norm = float(ones_solve @ ones_solve)
    y_solve = linalg.solve_triangular(L, obs.y, lower=True, check_finite=False)
    if mean.estimated:
        beta = float(ones_solve @ y_solve) / ones_norm
    else:
        beta = float(mean.constant)
    alpha = y_solve - beta * ones_solve
    for arr in (L, alpha, ones_solve):
        arr.setflags(write=False)
    return PosteriorGp(kernel, MeanSpec(beta, mean.estimated), obs, L, beta, alpha,
                       level, ones_solve, ones_norm)


def concentrated_loglik(obs: Observations, family, lengthscales, *, ordinary=True,
                        mean_constant=0.0):
    """Profile log-likelihood over the constant mean and the variance.

    Returns ``(loglik, beta_hat, sigma2_hat)``.
    """
    corr = KernelSpec(family, 1.0, lengthscales)
    R = corr(obs.X, obs.X)
    L, _ = cholesky_jitter(R, 1.0)
    n = obs.n
    ys = linalg.solve_triangular(L, obs.y, lower=True, check_finite=False)
    if ordinary:
        os_ = linalg.solve_triangular(L, np.ones(n), lower=True, check_finite=False)
        beta = float(os_ @ ys) / float(os_ @ os_)
        res = ys - beta * os_
    else:
        beta = float(mean_constant)
        res = ys - beta * linalg.solve_triangular(L, np.ones(n), lower=True,
                                                  check_finite=False)
    sigma2 = float(res @ res) / n
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    if sigma2 <= 0:
        return np.inf, beta, 0.0
    ll = -0.5 * (n * np.log(2 * np.pi * sigma2) + logdet + n)
    return ll, beta, sigma2


@dataclass(frozen=True)
class MleResult:
    kernel: KernelSpec
    mean: MeanSpec
    loglik: float
    converged: bool = True
    starts: tuple = field(default=(), repr=False)

    def __iter__(self):
        yield self.kernel
        yield self.mean


def fit_mle(obs: Observations, family=KernelFamily.MATERN32, bounds=None,
            restarts: int = 5, seed: int = 0) -> MleResult:
    """Maximum-likelihood hyperparameters for a constant-mean Matérn model.

    The mean and variance are profiled analytically; log-lengthscales are
    optimized by L-BFGS-B from ``restarts`` random starts inside ``bounds``
    (default ``[0.01, 2]`` per dimension). The result never has a lower
    likelihood than the best starting point. ``converged`` is False when no
    local search improved on its start.
    """
    family = KernelFamily.parse(family)
    d, n = obs.d, obs.n
    if n < d + 2:
        raise ValueError(f"MLE needs at least d + 2 = {d + 2} observations, got {n}")
    if bounds is None:
        bounds = [(0.01, 2.0)] * d
    bounds = np.asarray(bounds, dtype=float).reshape(d, 2)
    if not np.all(np.isfinite(bounds)) or np.any(bounds[:, 0] <= 0) \
            or np.any(bounds[:, 0] >= bounds[:, 1]):
        raise ValueError("bounds must be finite with 0 < lower < upper")
    logb = np.log(bounds)

    if np.ptp(obs.y) <= 1e-14 * max(1.0, np.abs(obs.y).max()):
        # zero-variance data: the likelihood diverges at sigma^2 -> 0
        theta = np.exp(logb.mean(axis=1))
        beta = float(obs.y.mean())
        return MleResult(KernelSpec(family, 1e-12 * max(1.0, beta**2), theta),
                         MeanSpec(beta, True), np.inf, converged=False)

    def negll(logtheta):
        try:
            ll, _, _ = concentrated_loglik(obs, family, np.exp(logtheta))
        except FactorizationError:
            return 1e300
        return -ll if np.isfinite(ll) else 1e300

    rng = np.random.default_rng(seed)
    starts = rng.uniform(logb[:, 0], logb[:, 1], size=(restarts, d))
    best_x, best_f, improved = None, np.inf, False
    for x0 in starts:
        f0 = negll(x0)
        if f0 < best_f:
            best_x, best_f = x0, f0
        res = optimize.minimize(negll, x0, method="L-BFGS-B", bounds=logb,
                                options={"maxiter": 200})
        if res.fun < f0 - 1e-12:
            improved = True
        if res.fun < best_f:
            best_x, best_f = res.x, float(res.fun)
    if best_f >= 1e300:
        raise FactorizationError("likelihood could not be evaluated at any start")
    theta = np.exp(best_x)
    ll, beta, sigma2 = concentrated_loglik(obs, family, theta)
    if not improved:
        warnings.warn("MLE local searches did not improve on any start", RuntimeWarning)
    return MleResult(KernelSpec(family, sigma2, theta), MeanSpec(beta, True), ll,
                     converged=improved, starts=tuple(map(tuple, np.exp(starts))))


def loo_residuals(gp: PosteriorGp) -> np.ndarray:
    """Leave-one-out residuals ``y_i - prediction_i`` (Dubrule's formulas)."""
    K = gp.kernel(gp.obs.X, gp.obs.X) + gp.jitter * gp.variance * np.eye(gp.obs.n)
    n = gp.obs.n
    if gp.ordinary:
        A = np.zeros((n + 1, n + 1))
        A[:n, :n] = K
        A[:n, n] = A[n, :n] = 1.0
        rhs = np.append(gp.obs.y, 0.0)
    else:
        A = K
        rhs = gp.obs.y - gp.beta_hat
    Ainv = np.linalg.inv(A)
    return (Ainv @ rhs)[:n] / np.diag(Ainv)[:n]


class KrigingMode(enum.Enum):
    SIMPLE = "simple"
    ORDINARY = "ordinary"

    @classmethod
    def parse(cls, value) -> "KrigingMode":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True, eq=False)
class ConditionedGp:
    """Posterior ``gp`` further conditioned on values at extra points ``E``.

    Extra points added with ``value=None`` ("pseudo" points) only reduce the
    covariance; this equals conditioning on the current predicted value, so
    the mean is unchanged. Instances are immutable; :meth:`update` returns a
    new state whose factor extends the old one by a single row.
    """

    gp: PosteriorGp
    E: np.ndarray
    chol: np.ndarray       # lower factor of K_n(E, E)
    innovations: np.ndarray

    @classmethod
    def empty(cls, gp: PosteriorGp) -> "ConditionedGp":
        return cls(gp, np.empty((0, gp.d)), np.empty((0, 0)), np.empty(0))

    @property
    def m(self) -> int:
        return self.E.shape[0]

    def solve_cross(self, x) -> np.ndarray:
        """``L_E^{-1} K_n(E, x)``, shape ``(m, len(x))``."""
        x = _as_points(x)
        if self.m == 0:
            return np.empty((0, x.shape[0]))
        kex = self.gp.cov(self.E, x)
        return linalg.solve_triangular(self.chol, kex, lower=True, check_finite=False)

    def cov(self, A, B=None) -> np.ndarray:
        A = _as_points(A)
        qA = self.solve_cross(A)
        if B is None:
            return self.gp.cov(A) - qA.T @ qA
        B = _as_points(B)
        return self.gp.cov(A, B) - qA.T @ self.solve_cross(B)

    def var(self, x) -> np.ndarray:
        q = self.solve_cross(x)
        return np.maximum(self.gp.var(x) - np.einsum("ij,ij->j", q, q), 0.0)

    def mean_at(self, x) -> np.ndarray:
        base = self.gp.mean_at(x)
        if self.m == 0:
            return base
        return base + self.solve_cross(x).T @ self.innovations

    def update(self, point, value: float | None = None,
               rtol: float = 1e-10) -> "ConditionedGp":
        point = _as_points(point)
        if point.shape != (1, self.gp.d):
            raise ValueError("update expects a single point")
        q = self.solve_cross(point)[:, 0]
        resid_var = float(self.gp.var(point)[0] - q @ q)
        if resid_var <= rtol * self.gp.variance:
            raise DegenerateUpdateError(
                f"conditional variance {resid_var:.3g} too small at {point[0]}"
            )
        diag = np.sqrt(resid_var)
        m = self.m
        L = np.zeros((m + 1, m + 1))
        L[:m, :m] = self.chol
        L[m, :m] = q
        L[m, m] = diag
        if value is None:
            innov = 0.0
        else:
            innov = (float(value) - float(self.mean_at(point)[0])) / diag
        E = np.vstack([self.E, point])
        w = np.append(self.innovations, innov)
        for arr in (L, E, w):
            arr.setflags(write=False)
        return ConditionedGp(self.gp, E, L, w)


def update_posterior(state, new_point, value: float | None = None) -> ConditionedGp:
    """Condition ``state`` additionally on ``new_point`` (pseudo when ``value`` is None)."""
    if isinstance(state, PosteriorGp):
        state = ConditionedGp.empty(state)
    return state.update(new_point, value)


@dataclass(frozen=True, eq=False)
class AffinePredictor:
    """Affine reconstruction ``a(x) + b(x)^T Z(E)`` of the conditioned field."""

    gp: PosteriorGp
    Em: np.ndarray
    mode: KrigingMode
    chol: np.ndarray
    mean_E: np.ndarray
    jitter: float

    @property
    def m(self) -> int:
        return self.Em.shape[0]

    def _kex(self, x):
        return self.gp.cov(self.Em, _as_points(x))

    def weights(self, x) -> np.ndarray:
        """Weight vectors ``b(x)`` as an ``(m, len(x))`` array."""
        kex = self._kex(x)
        if self.mode is KrigingMode.SIMPLE:
            return linalg.cho_solve((self.chol, True), kex, check_finite=False)
        # ordinary kriging on the conditional covariance: weights sum to one
        kinv_k = linalg.cho_solve((self.chol, True), kex, check_finite=False)
        kinv_1 = linalg.cho_solve((self.chol, True), np.ones(self.m), check_finite=False)
        lam = (1.0 - kinv_1 @ kex) / (kinv_1.sum())
        return kinv_k + np.outer(kinv_1, lam)

    def trend(self, x) -> np.ndarray:
        x = _as_points(x)
        if self.mode is KrigingMode.ORDINARY:
            return np.zeros(x.shape[0])
        return self.gp.mean_at(x) - self.weights(x).T @ self.mean_E

    def predict(self, x, zE) -> np.ndarray:
        """Map draws ``zE`` (shape ``(N, m)``) onto ``x``; returns ``(N, len(x))``."""
        x = _as_points(x)
        b = self.weights(x)
        return self.trend(x)[None, :] + np.atleast_2d(zE) @ b

    def gamma(self, x) -> np.ndarray:
        """Variance of the reconstruction ``Var_n[b(x)^T Z(E)]``."""
        x = _as_points(x)
        b = self.weights(x)
        if self.mode is KrigingMode.SIMPLE:
            kex = self._kex(x)
            return np.maximum(np.einsum("ij,ij->j", b, kex), 0.0)
        KEE = self.chol @ self.chol.T
        return np.maximum(np.einsum("ij,ij->j", b, KEE @ b), 0.0)

    def covariance_with_field(self, x) -> np.ndarray:
        """``Cov_n[Z(x), b(x)^T Z(E)]``."""
        x = _as_points(x)
        return np.einsum("ij,ij->j", self.weights(x), self._kex(x))


def kriging_weights(gp: PosteriorGp, Em, mode=KrigingMode.SIMPLE) -> AffinePredictor:
    """Build the affine predictor of the conditioned field from points ``Em``."""
    mode = KrigingMode.parse(mode)
    E = _as_points(Em).copy()
    if E.shape[0] == 0:
        raise ValueError("Em must be nonempty")
    if E.shape[0] > 1:
        diff = np.abs(E[:, None, :] - E[None, :, :]).max(axis=-1)
        np.fill_diagonal(diff, np.inf)
        if diff.min() <= 1e-12:
            raise ValueError("duplicate simulation points")
    L, level = cholesky_conditional(gp.cov(E), gp.variance)
    if mode is KrigingMode.ORDINARY:
        kinv_1 = linalg.cho_solve((L, True), np.ones(E.shape[0]))
        if not kinv_1.sum() > 0:
            raise np.linalg.LinAlgError("singular ordinary kriging system")
    E.setflags(write=False)
    return AffinePredictor(gp, E, mode, L, gp.mean_at(E), level)


def residual_variance(gp: PosteriorGp, pred: AffinePredictor | None, x) -> np.ndarray:
    """``s^2_{n,m}(x) = K_n(x,x) - gamma_n(x, E)`` clamped at zero."""
    x = _as_points(x)
    if pred is None or pred.m == 0:
        return gp.var(x)
    kex = gp.cov(pred.Em, x)
    q = linalg.solve_triangular(pred.chol, kex, lower=True, check_finite=False)
    return np.maximum(gp.var(x) - np.einsum("ij,ij->j", q, q), 0.0)


def dumps_model(gp: PosteriorGp) -> str:
    """Versioned plain-text serialization of a fitted model."""
    k = gp.kernel
    lines = [
        f"# quasireal model v{MODEL_FORMAT_VERSION}",
        f"family = {k.family.value}",
        f"variance = {k.variance!r}",
        "lengthscales = " + " ".join(repr(v) for v in k.lengthscales),
        f"beta = {gp.beta_hat!r}",
        f"estimated_mean = {int(gp.mean.estimated)}",
        f"n = {gp.obs.n}",
        f"d = {gp.obs.d}",
        "data",
    ]
    for xi, yi in zip(gp.obs.X, gp.obs.y):
        lines.append(" ".join(repr(float(v)) for v in xi) + " " + repr(float(yi)))
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> PosteriorGp:
    lines = [ln.strip() for ln in text.splitlines()]
    if not lines or not lines[0].startswith("# quasireal model v"):
        raise ValueError("not a quasireal model file")
    version = int(lines[0].rsplit("v", 1)[1])
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    fields, i = {}, 1
    while lines[i] != "data":
        key, _, val = lines[i].partition("=")
        fields[key.strip()] = val.strip()
        i += 1
    n, d = int(fields["n"]), int(fields["d"])
    rows = np.array([[float(v) for v in ln.split()] for ln in lines[i + 1:i + 1 + n]])
    rows = rows.reshape(n, d + 1)
    kernel = KernelSpec(fields["family"], float(fields["variance"]),
                        [float(v) for v in fields["lengthscales"].split()])
    mean = MeanSpec(float(fields["beta"]), bool(int(fields["estimated_mean"])))
    return posterior(Observations(rows[:, :d], rows[:, d]), kernel, mean)
