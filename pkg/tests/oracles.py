"""Independent reference implementations used by the tests.

Nothing here imports the package internals it checks: kernels, kriging and
distance transforms are written directly from their textbook definitions.
"""
from __future__ import annotations

import numpy as np
from scipy import integrate, stats
from scipy.special import ndtr


def matern(h, nu):
    """Unit-variance Matérn correlation for nu in {1.5, 2.5} at scaled distance h."""
    h = np.abs(h)
    if nu == 1.5:
        a = np.sqrt(3.0) * h
        return (1 + a) * np.exp(-a)
    a = np.sqrt(5.0) * h
    return (1 + a + 5.0 * h * h / 3.0) * np.exp(-a)


def product_kernel(A, B, variance, lengthscales, nu):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    out = np.full((A.shape[0], B.shape[0]), float(variance))
    for j, th in enumerate(lengthscales):
        out *= matern((A[:, j, None] - B[None, :, j]) / th, nu)
    return out


def ordinary_kriging(X, y, kern, A, B=None):
    """Posterior mean at ``A`` and covariance ``K_n(A, B)`` from the bordered system.

    ``kern(P, Q)`` returns the prior covariance matrix. The unknown constant
    mean is handled by the Lagrange row, not by generalized least squares.
    """
    B = A if B is None else B
    n = X.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = kern(X, X)
    M[:n, n] = M[n, :n] = 1.0
    rA = np.vstack([kern(X, A), np.ones((1, A.shape[0]))])
    rB = np.vstack([kern(X, B), np.ones((1, B.shape[0]))])
    sol = np.linalg.solve(M, rB)
    mean = np.linalg.solve(M, np.append(y, 0.0)) @ rA
    return mean, kern(A, B) - rA.T @ sol


def bvn_cdf(h, k, r):
    """``P(X <= h, Y <= k)`` by adaptive quadrature of ``phi(x) Phi((k - r x) / s)``.

    The inner integral of the 2-D density is done in closed form; the outer
    one adaptively, with the kink of the integrand passed as a breakpoint.
    """
    if abs(r) >= 1.0:
        return float(ndtr(min(h, k))) if r > 0 else float(max(0.0, ndtr(h) - ndtr(-k)))
    s = np.sqrt(1 - r * r)
    lo = -40.0
    hi = min(h, 40.0)
    if hi <= lo:
        return 0.0

    def f(x):
        return stats.norm.pdf(x) * ndtr((k - r * x) / s)

    pts = [p for p in (k / r if r != 0 else None, 0.0) if p is not None and lo < p < hi]
    val, _ = integrate.quad(f, lo, hi, points=pts or None, epsabs=1e-14, epsrel=1e-12,
                            limit=400)
    return float(val)


def phi2_oracle(c, sigma):
    s1, s2 = np.sqrt(sigma[0, 0]), np.sqrt(sigma[1, 1])
    return bvn_cdf(c[0] / s1, c[1] / s2, sigma[0, 1] / (s1 * s2))


def brute_edt(mask2d):
    """Euclidean distance (index units) from each cell to the nearest set cell."""
    q0, q1 = mask2d.shape
    ii, jj = np.nonzero(mask2d)
    gi, gj = np.meshgrid(np.arange(q0), np.arange(q1), indexing="ij")
    sq = np.full(mask2d.shape, np.inf)
    for a, b in zip(ii, jj):
        sq = np.minimum(sq, (gi - a) ** 2 + (gj - b) ** 2)
    return sq


def ks_statistic(a, b):
    """Two-sample KS statistic by explicit evaluation at every pooled value."""
    pooled = np.concatenate([a, b])
    fa = np.array([np.mean(a <= v) for v in pooled])
    fb = np.array([np.mean(b <= v) for v in pooled])
    return float(np.max(np.abs(fa - fb)))


def paired_misclassification(X, y, kern, x, E, t, N, rng):
    """Monte-Carlo frequency of ``1{Z(x) >= t} != 1{Z~(x) >= t}``.

    ``(Z(x), Z(E))`` is drawn from the ordinary-kriging posterior and ``Z~(x)``
    is the simple-kriging prediction of ``Z(x)`` from ``Z(E)`` under that
    posterior. Returns the frequency and its standard error.
    """
    P = np.vstack([x[None, :], E])
    mean, cov = ordinary_kriging(X, y, kern, P)
    cov = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(cov)
    root = V * np.sqrt(np.clip(w, 0, None))
    Z = mean[None, :] + rng.standard_normal((N, P.shape[0])) @ root.T
    b = np.linalg.solve(cov[1:, 1:], cov[1:, 0])
    zt = mean[0] + (Z[:, 1:] - mean[1:]) @ b
    miss = (Z[:, 0] >= t) != (zt >= t)
    freq = miss.mean()
    return freq, np.sqrt(max(freq * (1 - freq), 1.0 / N) / N)
