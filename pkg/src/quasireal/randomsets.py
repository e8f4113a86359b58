"""Random closed set summaries on designs: coverage, Vorob'ev and distance averages.

Distances are computed on cell-centred grids in unit-cube coordinates; the
measure of a node is its cell volume ``q**-d``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .designs import Design, DesignKind

__all__ = [
    "CoverageField",
    "DistanceGrid",
    "EmptyEnsembleError",
    "coverage",
    "vorobev",
    "vorobev_deviation",
    "distance_transform",
    "distance_transforms",
    "distance_average",
    "dav",
    "write_heat_csv",
]


class EmptyEnsembleError(ValueError):
    """Every realization is empty, so distance functions are undefined."""


@dataclass(frozen=True, eq=False)
class CoverageField:
    design: Design
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (self.design.r,) or np.any(p < 0) or np.any(p > 1):
            raise ValueError("coverage values must be in [0, 1], one per node")
        object.__setattr__(self, "p", p)


@dataclass(frozen=True, eq=False)
class DistanceGrid:
    grid: Design
    dist: np.ndarray


def _cell_volume(design: Design) -> float:
    if design.kind is DesignKind.GRID:
        return float(design.q) ** -design.d
    return 1.0 / design.r


def _masks(ens) -> np.ndarray:
    return np.atleast_2d(np.asarray(getattr(ens, "masks", ens), dtype=bool))


def coverage(ens) -> CoverageField:
    masks = _masks(ens)
    if masks.shape[0] < 1:
        raise ValueError("coverage needs at least one realization")
    return CoverageField(ens.design, masks.mean(axis=0))


def vorobev(cov: CoverageField, target_volume: float | None = None,
            total_mass: float = 1.0) -> tuple[float, np.ndarray]:
    """Vorob'ev level ``alpha`` and the set ``{p >= alpha}``.

    ``alpha`` is the largest node coverage value whose superlevel set still
    has measure at least ``target_volume`` (default: the integral of ``p``),
    so every strictly higher level falls below the target.
    """
    p = cov.p
    w = total_mass / p.size
    if target_volume is None:
        target_volume = w * p.sum()
    if target_volume <= 0:
        alpha = 1.0 if p.max() < 1 else float(p.max())
        return alpha, p >= alpha
    levels = np.sort(p)[::-1]
    # measure of {p >= levels[k]} counts all ties of levels[k]
    counts = np.searchsorted(-levels, -levels, side="right")
    ok = counts * w >= target_volume * (1 - 1e-12)
    if not ok.any():
        return float(levels[-1]), p >= levels[-1]
    alpha = float(levels[np.argmax(ok)])
    return alpha, p >= alpha


def vorobev_deviation(ens, mask, total_mass: float = 1.0) -> float:
    """Mean measure of the symmetric difference between ``mask`` and each realization."""
    masks = _masks(ens)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != masks.shape[1:]:
        raise ValueError("mask shape does not match the ensemble")
    return total_mass * float(np.mean(masks != mask[None, :]))


def _grid_shape(design: Design) -> tuple[int, ...]:
    if design.kind is not DesignKind.GRID or design.q is None:
        raise ValueError("distance transforms need a grid design")
    return (design.q,) * design.d


def _index_distances(masks: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Exact Euclidean distances in grid-index units, one row per nonempty mask."""
    out = np.empty(masks.shape, dtype=float)
    for i, mask in enumerate(masks):
        out[i] = ndimage.distance_transform_edt(~mask.reshape(shape)).ravel()
    return out


def distance_transforms(design: Design, masks) -> np.ndarray:
    """Euclidean distance to the nearest set node for each mask (unit-cube units).

    Empty masks get the diameter of the unit cube, ``sqrt(d)``.
    """
    masks = _masks(masks)
    shape = _grid_shape(design)
    dist = np.full(masks.shape, np.sqrt(design.d))
    nonempty = masks.any(axis=1)
    dist[nonempty] = _index_distances(masks[nonempty], shape) / design.q
    return dist


def distance_transform(grid: Design, mask) -> DistanceGrid:
    mask = np.asarray(mask, dtype=bool)
    return DistanceGrid(grid, distance_transforms(grid, mask[None, :])[0])


def _distance_fields(ens) -> tuple[np.ndarray, float]:
    masks = _masks(ens)
    if not masks.any():
        raise EmptyEnsembleError("all realizations are empty")
    return distance_transforms(ens.design, masks), _cell_volume(ens.design)


def distance_average(ens) -> tuple[np.ndarray, float]:
    """Empirical distance average ``{dbar <= u}`` and the selected level ``u``.

    Every distinct value of the mean distance function is tried as a level;
    the one whose set has the L2-closest distance function wins, with the
    smallest level kept on ties.
    """
    dist, vol = _distance_fields(ens)
    dbar = dist.mean(axis=0)
    levels = np.unique(dbar)
    masks = dbar[None, :] <= levels[:, None]
    cand = distance_transforms(ens.design, masks)
    err = ((cand - dbar[None, :]) ** 2).sum(axis=1) * vol
    best = int(np.argmin(err))
    return masks[best], float(levels[best])


def dav(ens) -> float:
    """Distance average variability: mean squared L2 deviation from ``dbar``."""
    dist, vol = _distance_fields(ens)
    dbar = dist.mean(axis=0)
    return float(((dist - dbar[None, :]) ** 2).sum(axis=1).mean() * vol)


def write_heat_csv(design: Design, values, path) -> None:
    """Heat table with one row per node: coordinates ``x1..xd`` and ``value``."""
    values = np.asarray(values)
    if values.shape != (design.r,):
        raise ValueError("one value per design node is required")
    header = ",".join(f"x{j + 1}" for j in range(design.d)) + ",value"
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for pt, v in zip(design.points, values):
            v = int(v) if values.dtype == bool else float(v)
            fh.write(",".join(repr(float(c)) for c in pt) + f",{v!r}\n")
