"""Bivariate normal CDF (Drezner-Wesolowsky / Genz Gauss-Legendre scheme).

All routines are vectorized: scalar or array arguments broadcast together.
"""
from __future__ import annotations

import math

import numba
import numpy as np
from scipy.special import ndtr

__all__ = ["NotPSDError", "bvn_lower", "bvn_upper", "phi2", "phi2_cov", "rho_parts",
           "rho_parts_cov", "rho_moments", "DEGENERATE_RTOL"]

DEGENERATE_RTOL = 1e-14
_TWO_PI = 2.0 * np.pi
_FAR = 8.5
_SINGULAR_RTOL = 1e-15

# half Gauss-Legendre rules on [-1, 1] (nodes > 0 with weights), 6/12/20 points
_GL = {
    6: (np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970]),
        np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904])),
    12: (np.array([0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                   0.5873179542866171, 0.3678314989981802, 0.1252334085114692]),
         np.array([0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                   0.2031674267230659, 0.2334925365383547, 0.2491470458134029])),
    20: (np.array([0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                   0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                   0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                   0.07652652113349733]),
         np.array([0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                   0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                   0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                   0.1527533871307259])),
}
# nodes mapped to [0, 2] as in Genz: 1 - x and 1 + x
_NODES = {n: (np.concatenate([1 - x, 1 + x]), np.concatenate([w, w]))
          for n, (x, w) in _GL.items()}


class NotPSDError(ValueError):
    """Covariance matrix is not positive semidefinite within tolerance."""


_X6, _W6 = _NODES[6]
_X12, _W12 = _NODES[12]
_X20, _W20 = _NODES[20]


@numba.njit(cache=True)
def _ndtr(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@numba.njit(cache=True)
def _bvnu(h, k, r):
    """Genz's BVNU for finite ``h``, ``k`` and ``r`` in [-1, 1]."""
    ar = abs(r)
    if ar < 0.925:
        if ar < 0.3:
            x, w = _X6, _W6
        elif ar < 0.75:
            x, w = _X12, _W12
        else:
            x, w = _X20, _W20
        # integrate the Plackett derivative over arcsin(r)
        hs = 0.5 * (h * h + k * k)
        hk = h * k
        asr = 0.5 * math.asin(r)
        acc = 0.0
        for i in range(x.size):
            sn = math.sin(asr * x[i])
            acc += w[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        return acc * asr / _TWO_PI + _ndtr(-h) * _ndtr(-k)
    if r < 0:
        k = -k
    hk = h * k
    bvn = 0.0
    if ar < 1.0:
        as_ = 1.0 - r * r
        a = math.sqrt(as_)
        bs = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 80.0
        asr = -0.5 * (bs / as_ + hk)
        if asr > -100.0:
            bvn = a * math.exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0
                                       + c * d * as_ * as_)
        if hk > -160.0:
            b = math.sqrt(bs)
            bvn -= (math.exp(-0.5 * hk) * math.sqrt(_TWO_PI) * _ndtr(-b / a) * b
                    * (1.0 - c * bs * (1.0 - d * bs) / 3.0))
        a = 0.5 * a
        acc = 0.0
        for i in range(_X20.size):
            xs = (a * _X20[i]) ** 2
            asr2 = -0.5 * (bs / xs + hk)
            if asr2 > -100.0:
                sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs)
                rs = math.sqrt(1.0 - xs)
                ep = math.exp(-0.5 * hk * xs / (1.0 + rs) ** 2) / rs
                acc += _W20[i] * math.exp(asr2) * (sp - ep)
        bvn = (a * acc - bvn) / _TWO_PI
    if r > 0:
        return bvn + _ndtr(-max(h, k))
    if h >= k:
        return -bvn
    if h < 0:
        lower = _ndtr(k) - _ndtr(h)
    else:
        lower = _ndtr(-h) - _ndtr(-k)
    return lower - bvn


@numba.njit(cache=True)
def _bvnu_inf(h, k):
    # at least one limit infinite: univariate probabilities
    if h == -np.inf and k == -np.inf:
        return 1.0
    if h == np.inf or k == np.inf:
        return 0.0
    if h == -np.inf:
        return _ndtr(-k)
    return _ndtr(-h)


@numba.njit(cache=True)
def _bvnu_array(h, k, r, out):
    for i in range(h.size):
        hi, ki = h[i], k[i]
        if math.isfinite(hi) and math.isfinite(ki):
            v = _bvnu(hi, ki, min(1.0, max(-1.0, r[i])))
        else:
            v = _bvnu_inf(hi, ki)
        out[i] = min(1.0, max(0.0, v))
    return out


def bvn_upper(h, k, r) -> np.ndarray:
    """``P(X > h, Y > k)`` for standard bivariate normal with correlation ``r``."""
    h, k, r = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (h, k, r)))
    shape = h.shape
    h, k, r = (np.ascontiguousarray(v).ravel() for v in (h, k, r))
    out = _bvnu_array(h, k, r, np.empty(h.size))
    return out.reshape(shape)


def bvn_lower(h, k, r) -> np.ndarray:
    """Standard bivariate normal CDF ``P(X <= h, Y <= k)``."""
    return bvn_upper(-np.asarray(h, dtype=float), -np.asarray(k, dtype=float), r)


def phi2_cov(c1, c2, v1, v2, cov, psd_tol: float = 1e-12) -> np.ndarray:
    """``P(U1 <= c1, U2 <= c2)`` for centred ``(U1, U2)`` with the given moments.

    Components whose variance is below ``DEGENERATE_RTOL`` times the larger
    variance are treated as identically zero.
    """
    c1, c2, v1, v2, cov = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (c1, c2, v1, v2, cov)))
    scale = np.maximum(np.maximum(np.abs(v1), np.abs(v2)), 1e-300)
    det = v1 * v2 - cov * cov
    if (np.any(v1 < -psd_tol * scale) or np.any(v2 < -psd_tol * scale)
            or np.any(det < -psd_tol * scale * scale)):
        raise NotPSDError("covariance is not positive semidefinite")
    zero1 = v1 <= DEGENERATE_RTOL * scale
    zero2 = v2 <= DEGENERATE_RTOL * scale
    out = np.empty(c1.shape)
    both = zero1 & zero2
    out[both] = ((c1[both] >= 0) & (c2[both] >= 0)).astype(float)
    only1 = zero1 & ~zero2
    out[only1] = np.where(c1[only1] >= 0, ndtr(c2[only1] / np.sqrt(v2[only1])), 0.0)
    only2 = zero2 & ~zero1
    out[only2] = np.where(c2[only2] >= 0, ndtr(c1[only2] / np.sqrt(v1[only2])), 0.0)
    reg = ~(zero1 | zero2)
    if reg.any():
        s1, s2 = np.sqrt(v1[reg]), np.sqrt(v2[reg])
        rho = np.clip(cov[reg] / (s1 * s2), -1.0, 1.0)
        # a determinant at roundoff level means exact (anti)correlation
        snap = det[reg] <= _SINGULAR_RTOL * v1[reg] * v2[reg]
        rho = np.where(snap, np.sign(rho), rho)
        out[reg] = bvn_lower(c1[reg] / s1, c2[reg] / s2, rho)
    return out


def phi2(c, sigma) -> float | np.ndarray:
    """Centred bivariate normal CDF at ``c`` with 2x2 covariance ``sigma``."""
    c = np.asarray(c, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape[-2:] != (2, 2) or c.shape[-1] != 2:
        raise ValueError("phi2 expects c of shape (..., 2) and sigma of shape (..., 2, 2)")
    if not np.allclose(sigma[..., 0, 1], sigma[..., 1, 0], rtol=1e-12, atol=1e-300):
        raise NotPSDError("covariance is not symmetric")
    out = phi2_cov(c[..., 0], c[..., 1], sigma[..., 0, 0], sigma[..., 1, 1],
                   sigma[..., 0, 1])
    return float(out) if out.ndim == 0 else out


def rho_parts_cov(c1, c2, v1, v2, cov) -> np.ndarray:
    """``Phi2(c) + Phi2(-c)`` in moment form."""
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    return phi2_cov(c1, c2, v1, v2, cov) + phi2_cov(-c1, -c2, v1, v2, cov)


@numba.njit(cache=True)
def _rho_moments(mean, var, gamma, t, exact_rtol, out):
    for i in range(mean.size):
        v = max(var[i], 0.0)
        g = min(max(gamma[i], 0.0), v)
        if v - g <= exact_rtol * max(v, 1e-300):
            out[i] = 0.0
            continue
        s1 = math.sqrt(v)
        c1 = mean[i] - t
        if abs(c1) > _FAR * s1:
            # rho <= 2 Phi(-|c1| / s1) < 4e-17
            out[i] = 0.0
            continue
        if g <= DEGENERATE_RTOL * v:
            # Z~ is deterministic and counts as inside when Z~ >= t
            val = _ndtr(c1 / s1) if c1 < 0 else _ndtr(-c1 / s1)
        else:
            s2 = math.sqrt(g)
            r = -min(1.0, s2 / s1)
            val = _bvnu(-c1 / s1, c1 / s2, r) + _bvnu(c1 / s1, -c1 / s2, r)
        out[i] = min(1.0, max(0.0, val))
    return out


def rho_moments(mean, var, gamma, t, exact_rtol: float = 1e-12) -> np.ndarray:
    """``rho`` for ``c = (m - t, t - m)`` and ``S = [[v, -g], [-g, g]]``, elementwise.

    Points where ``v - g`` is below ``exact_rtol * v`` are reproduced exactly
    by the reconstruction and get 0.
    """
    mean, var, gamma = np.broadcast_arrays(*(np.asarray(a, dtype=float)
                                             for a in (mean, var, gamma)))
    shape = mean.shape
    flat = [np.ascontiguousarray(a).ravel() for a in (mean, var, gamma)]
    out = _rho_moments(*flat, float(t), float(exact_rtol), np.empty(flat[0].size))
    return out.reshape(shape)


def rho_parts(c, sigma) -> float | np.ndarray:
    c = np.asarray(c, dtype=float)
    return phi2(c, sigma) + phi2(-c, sigma)
