"""Conditional simulation on designs and affine re-interpolation of draws."""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .criterion import ExcursionSpec
from .designs import Design
from .gp import (AffinePredictor, PosteriorGp, cholesky_conditional, cholesky_jitter,
                 kriging_weights)

__all__ = [
    "Provenance",
    "FieldEnsemble",
    "ExcursionEnsemble",
    "FullSampler",
    "simulate_full",
    "quasi_realizations",
    "simulate_coupled",
    "excursions",
    "write_ensemble",
    "read_ensemble",
    "MAX_SIM_POINTS",
]

MAX_SIM_POINTS = 10_000
# posterior variances below this fraction of the prior variance are nugget-level
DETERMINISTIC_RTOL = 1e-7
_MAGIC = b"QRENS001"
_FLAG_MASKS = 1


class Provenance(enum.Enum):
    FULL = "full"
    QUASI = "quasi"


@dataclass(frozen=True, eq=False)
class FieldEnsemble:
    """``N x r`` simulated values on ``design`` (realization-major)."""

    design: Design
    values: np.ndarray
    provenance: Provenance = Provenance.FULL
    m: int | None = None

    def __post_init__(self):
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        if vals.shape[1] != self.design.r:
            raise ValueError("column count must equal the design size")
        if not np.all(np.isfinite(vals)):
            raise ValueError("simulated values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def N(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class ExcursionEnsemble:
    design: Design
    masks: np.ndarray
    exc: ExcursionSpec | None = None

    def __post_init__(self):
        masks = np.atleast_2d(np.asarray(self.masks, dtype=bool))
        if masks.shape[1] != self.design.r:
            raise ValueError("mask width must equal the design size")
        object.__setattr__(self, "masks", masks)

    @property
    def N(self) -> int:
        return self.masks.shape[0]


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _check_size(r: int, cap: int) -> None:
    if r > cap:
        raise MemoryError(f"design of {r} points exceeds the simulation cap {cap}")


@dataclass(frozen=True, eq=False)
class FullSampler:
    """Factorized posterior on ``design``; reuse it for repeated draws.

    Nodes whose posterior variance is at the level of the observation
    nugget (typically the observation points themselves) are treated as
    deterministic and fixed at the posterior mean; ``free`` marks the others.
    """

    design: Design
    mean: np.ndarray
    chol: np.ndarray
    free: np.ndarray
    jitter: float = 0.0

    @classmethod
    def create(cls, gp: PosteriorGp, G: Design, cap: int = MAX_SIM_POINTS) -> "FullSampler":
        _check_size(G.r, cap)
        mean, var, _, _ = gp.moments(G.points)
        free = var > DETERMINISTIC_RTOL * gp.variance
        L, level = cholesky_conditional(gp.cov(G.points[free]), gp.variance)
        return cls(G, mean, L, free, level)

    def draw(self, N: int, seed=0, batch: int = 500) -> FieldEnsemble:
        rng = _rng(seed)
        k = int(self.free.sum())
        out = np.repeat(self.mean[None, :], N, axis=0)
        for s in range(0, N, batch):
            xi = rng.standard_normal((min(batch, N - s), k))
            out[s:s + xi.shape[0], self.free] += xi @ self.chol.T
        return FieldEnsemble(self.design, out, Provenance.FULL)


def simulate_full(gp: PosteriorGp, G: Design, N: int, seed=0,
                  cap: int = MAX_SIM_POINTS) -> FieldEnsemble:
    """Draw ``N`` conditional realizations on ``G`` by Cholesky factorization."""
    return FullSampler.create(gp, G, cap).draw(N, seed)


def quasi_realizations(gp: PosteriorGp, pred: AffinePredictor, G: Design, N: int,
                       seed=0, batch: int = 2000) -> FieldEnsemble:
    """Simulate exactly at the predictor's points and map the draws onto ``G``.

    Costs ``O(m^3)`` for the factorization plus ``O(N r m)`` for the mapping.
    With the same seed, the draws at the simulation points coincide with
    ``simulate_full`` on those points.
    """
    if pred.m > G.r:
        raise ValueError("more simulation points than design points")
    rng = _rng(seed)
    L = pred.chol
    zE = pred.mean_E[None, :] + rng.standard_normal((N, pred.m)) @ L.T
    b = pred.weights(G)
    a = pred.trend(G)
    out = np.empty((N, G.r))
    for s in range(0, N, batch):
        out[s:s + batch] = a[None, :] + zE[s:s + batch] @ b
    return FieldEnsemble(G, out, Provenance.QUASI, m=pred.m)


def simulate_coupled(gp: PosteriorGp, pred: AffinePredictor, G: Design, N: int,
                     seed=0) -> tuple[FieldEnsemble, FieldEnsemble]:
    """Paired full and reconstructed ensembles sharing the draws at ``E``.

    ``Z(E)`` is drawn first; the reconstruction maps it onto ``G`` and the full
    field adds an independent draw of ``Z(G) - Z~(G)`` given ``Z(E)``. Valid
    for simple-kriging predictors, whose error is independent of ``Z(E)``.
    """
    rng = _rng(seed)
    quasi = quasi_realizations(gp, pred, G, N, rng)
    KGE = gp.cov(G, pred.Em)
    Q = linalg.solve_triangular(pred.chol, KGE.T, lower=True, check_finite=False)
    resid_cov = gp.cov(G) - Q.T @ Q
    Lr, _ = cholesky_jitter(resid_cov, gp.variance)
    full = quasi.values + rng.standard_normal((N, G.r)) @ Lr.T
    return FieldEnsemble(G, full, Provenance.FULL), quasi


def excursions(ens: FieldEnsemble, exc: ExcursionSpec) -> ExcursionEnsemble:
    return ExcursionEnsemble(ens.design, exc.indicator(ens.values), exc)


def write_ensemble(ens, path) -> None:
    """Binary export.

    Layout (little-endian): 8-byte magic ``QRENS001``; header ``N, r, d, flags``
    as uint64; design points ``r x d`` float64 row-major; then either values
    ``N x r`` float64 row-major or, when ``flags & 1``, masks bit-packed per
    realization (``ceil(r / 8)`` bytes each, MSB first).
    """
    is_mask = isinstance(ens, ExcursionEnsemble)
    data = ens.masks if is_mask else ens.values
    N, r = data.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<4Q", N, r, ens.design.d, _FLAG_MASKS if is_mask else 0))
        fh.write(np.ascontiguousarray(ens.design.points, dtype="<f8").tobytes())
        if is_mask:
            fh.write(np.packbits(data, axis=1).tobytes())
        else:
            fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def read_ensemble(path):
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("not a quasireal ensemble file")
        N, r, d, flags = struct.unpack("<4Q", fh.read(32))
        pts = np.frombuffer(fh.read(8 * r * d), dtype="<f8").reshape(r, d)
        design = Design.explicit(pts)
        if flags & _FLAG_MASKS:
            nbytes = (r + 7) // 8
            packed = np.frombuffer(fh.read(N * nbytes), dtype=np.uint8).reshape(N, nbytes)
            return ExcursionEnsemble(design, np.unpackbits(packed, axis=1, count=r).astype(bool))
        vals = np.frombuffer(fh.read(8 * N * r), dtype="<f8").reshape(N, r)
        return FieldEnsemble(design, vals.copy())


def reinterpolate(gp: PosteriorGp, Em, G: Design, N: int, seed=0, mode="simple"):
    """Convenience wrapper: build the predictor on ``Em`` and simulate on ``G``."""
    return quasi_realizations(gp, kriging_weights(gp, Em, mode), G, N, seed)
