"""Excursion statistics: level-set length, excursion volume and two-sample KS tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .designs import Design, DesignKind
from .randomsets import CoverageField

__all__ = [
    "LengthSample",
    "VolumeSample",
    "KsResult",
    "contour_length",
    "contour_lengths",
    "volume_distribution",
    "ks_two_sample",
    "kolmogorov_sf",
]


@dataclass(frozen=True)
class LengthSample:
    lengths: np.ndarray
    epsilon: float
    grid_q: int


@dataclass(frozen=True)
class VolumeSample:
    volumes: np.ndarray
    recentered: bool = False
    center: float | None = None
    clipped: int = 0


@dataclass(frozen=True)
class KsResult:
    statistic: float
    pvalue: float
    reject: bool

    def __iter__(self):
        yield self.statistic
        yield self.pvalue
        yield self.reject


def _edge_fraction(v0, v1, t, eps):
    dv = v1 - v0
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = (t - v0) / dv
    frac = np.where(np.abs(dv) <= eps, 0.5, frac)
    return np.clip(frac, 0.0, 1.0)


def contour_lengths(values: np.ndarray, q: int, t: float, epsilon: float = 1e-12) -> np.ndarray:
    """Length of the ``t``-level polyline for each row of ``values`` on a q x q grid.

    Marching squares with linear interpolation along cell edges. Saddle cells
    are split according to the mean of their four corners. Nodes sit at
    ``(i + 0.5) / q`` so lengths are in unit-square coordinates.
    """
    v = np.asarray(values, dtype=float).reshape(-1, q, q)
    h = 1.0 / q
    inside = v >= t
    c00, c10 = v[:, :-1, :-1], v[:, 1:, :-1]
    c01, c11 = v[:, :-1, 1:], v[:, 1:, 1:]
    b00, b10 = inside[:, :-1, :-1], inside[:, 1:, :-1]
    b01, b11 = inside[:, :-1, 1:], inside[:, 1:, 1:]
    # crossing points on the four cell edges, local coordinates in [0, 1]^2
    # (first coordinate along grid axis 0 = x1, second along axis 1 = x2)
    fb = _edge_fraction(c00, c10, t, epsilon)   # bottom edge: (f, 0)
    ft = _edge_fraction(c01, c11, t, epsilon)   # top edge: (f, 1)
    fl = _edge_fraction(c00, c01, t, epsilon)   # left edge: (0, f)
    fr = _edge_fraction(c10, c11, t, epsilon)   # right edge: (1, f)
    pts = {
        "b": (fb, np.zeros_like(fb)),
        "t": (ft, np.ones_like(ft)),
        "l": (np.zeros_like(fl), fl),
        "r": (np.ones_like(fr), fr),
    }

    def seg(a, b):
        (ax, ay), (bx, by) = pts[a], pts[b]
        return np.hypot(ax - bx, ay - by)

    cb, ct = b00 != b10, b01 != b11
    cl, cr = b00 != b01, b10 != b11
    ncross = cb.astype(int) + ct + cl + cr
    total = np.zeros(v.shape[0])
    two = ncross == 2
    pairs = (("b", "t", cb & ct), ("l", "r", cl & cr), ("b", "l", cb & cl),
             ("b", "r", cb & cr), ("t", "l", ct & cl), ("t", "r", ct & cr))
    for a, b, sel in pairs:
        mask = two & sel
        total += np.where(mask, seg(a, b), 0.0).sum(axis=(1, 2))
    four = ncross == 4
    if four.any():
        centre_in = (c00 + c10 + c01 + c11) / 4.0 >= t
        # centre connected to the corner 00 class: separate corners 10 and 01
        join = centre_in == b00
        s_a = seg("b", "r") + seg("l", "t")     # cuts off corners 10 and 01
        s_b = seg("b", "l") + seg("t", "r")     # cuts off corners 00 and 11
        total += np.where(four, np.where(join, s_a, s_b), 0.0).sum(axis=(1, 2))
    return total * h


def _grid_q(design: Design) -> int:
    if design.kind is not DesignKind.GRID or design.d != 2:
        raise ValueError("contour length needs a 2-D grid design")
    return design.q


def contour_length(ens, exc, epsilon: float = 1e-12) -> LengthSample:
    q = _grid_q(ens.design)
    t = exc.sign * exc.threshold
    lengths = contour_lengths(exc.sign * ens.values, q, t, epsilon)
    return LengthSample(lengths, epsilon, q)


def volume_distribution(ens, correct_bias: bool = False,
                        cov: CoverageField | None = None) -> VolumeSample:
    """Per-realization excursion volume fractions.

    With ``correct_bias`` the sample is shifted so its mean equals the
    integral of the coverage field ``cov``; shifted values are clipped to
    ``[0, 1]`` and the number of clipped values is reported.
    """
    vols = np.asarray(ens.masks, dtype=bool).mean(axis=1)
    if not correct_bias:
        return VolumeSample(vols, False, float(vols.mean()))
    if cov is None:
        raise ValueError("bias correction needs a coverage field")
    center = float(np.mean(cov.p))
    shifted = vols - vols.mean() + center
    clipped = int(np.sum((shifted < 0) | (shifted > 1)))
    return VolumeSample(np.clip(shifted, 0.0, 1.0), True, center, clipped)


def kolmogorov_sf(x) -> float:
    """Survival function of the limiting Kolmogorov distribution."""
    return float(special.kolmogorov(max(float(x), 0.0)))


def ks_two_sample(a, b, level: float = 0.05) -> KsResult:
    """Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.

    The p-value is the Kolmogorov limit at ``sqrt(n m / (n + m)) * D``, as
    for large realization ensembles.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    with np.errstate(divide="ignore"):
        # scipy's own p-value (unused) divides by zero for single-point samples
        stat = float(stats.ks_2samp(a, b, method="asymp").statistic)
    en = np.sqrt(a.size * b.size / (a.size + b.size))
    p = kolmogorov_sf(en * stat)
    return KsResult(stat, p, bool(p < level))
