"""Point sets in the unit cube: Sobol' sequences, maximin LHS and regular grids."""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import qmc

__all__ = [
    "DesignKind",
    "Design",
    "UnsupportedDimensionError",
    "sobol",
    "maximin_lhs",
    "grid",
    "grid_index",
    "grid_multi_index",
    "write_design_csv",
    "read_design_csv",
]

MAX_GRID_POINTS = 4_000_000
# scipy ships Joe-Kuo direction numbers up to this dimension
SOBOL_MAX_DIM = 21201


class DesignKind(enum.Enum):
    SOBOL = "sobol"
    MAXIMIN_LHS = "maximin_lhs"
    GRID = "grid"
    EXPLICIT = "explicit"


class UnsupportedDimensionError(ValueError):
    """Requested dimension exceeds the available direction numbers."""


@dataclass(frozen=True)
class Design:
    """An ``r x d`` point set in ``[0, 1]^d``.

    ``q`` is the points-per-axis count for grid designs and ``None`` otherwise.
    """

    points: np.ndarray
    kind: DesignKind = DesignKind.EXPLICIT
    q: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.ndim != 2:
            raise ValueError("design points must be a 2-D array")
        if np.any(pts < 0.0) or np.any(pts > 1.0):
            raise ValueError("design coordinates must lie in [0, 1]")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def r(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.r

    def subset(self, idx) -> "Design":
        return Design(self.points[np.asarray(idx)], DesignKind.EXPLICIT)

    @classmethod
    def explicit(cls, points) -> "Design":
        return cls(np.asarray(points, dtype=float), DesignKind.EXPLICIT)


def sobol(d: int, r: int, skip: int = 0) -> Design:
    """Points ``skip .. skip + r - 1`` of the unscrambled ``d``-dimensional Sobol' sequence.

    The sequence starts at the origin, so ``skip=1`` drops the all-zero point.
    Generation is delegated to :class:`scipy.stats.qmc.Sobol` (Joe-Kuo
    direction numbers, Gray-code order).
    """
    if d < 1 or d > SOBOL_MAX_DIM:
        raise UnsupportedDimensionError(
            f"Sobol' dimension must be in [1, {SOBOL_MAX_DIM}], got {d}"
        )
    if r < 1:
        raise ValueError("r must be >= 1")
    if skip < 0:
        raise ValueError("skip must be >= 0")
    if skip + r > 2**30:
        raise ValueError("too many Sobol' points requested")
    engine = qmc.Sobol(d, scramble=False)
    if skip:
        engine.fast_forward(skip)
    with warnings.catch_warnings():
        # balance warnings for counts that are not powers of two
        warnings.simplefilter("ignore", UserWarning)
        pts = engine.random(r)
    return Design(pts, DesignKind.SOBOL, meta={"skip": skip})


def _lhs_score(points: np.ndarray) -> tuple[float, int]:
    dist = pdist(points)
    dmin = dist.min()
    return dmin, int(np.sum(dist <= dmin * (1 + 1e-12)))


def _better(a: tuple[float, int], b: tuple[float, int]) -> bool:
    # larger min distance wins, then fewer pairs attaining it
    if a[0] > b[0] * (1 + 1e-12):
        return True
    return abs(a[0] - b[0]) <= 1e-12 * max(b[0], 1e-300) and a[1] < b[1]


def _exchange(points: np.ndarray, max_sweeps: int) -> np.ndarray:
    r, d = points.shape
    best = _lhs_score(points)
    for _ in range(max_sweeps):
        dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
        np.fill_diagonal(dist, np.inf)
        critical = np.unique(np.argwhere(dist <= best[0] * (1 + 1e-12)).ravel())
        improved = False
        for i in critical:
            for k in range(d):
                for j in range(r):
                    if j == i:
                        continue
                    cand = points.copy()
                    cand[i, k], cand[j, k] = cand[j, k], cand[i, k]
                    score = _lhs_score(cand)
                    if _better(score, best):
                        points, best, improved = cand, score, True
                        break
                if improved:
                    break
            if improved:
                break
        if not improved:
            break
    return points


def maximin_lhs(d: int, r: int, seed: int = 0, restarts: int = 10,
                max_sweeps: int = 200) -> Design:
    """Latin hypercube sample optimized for the maximin interpoint distance.

    Each restart draws a random midpoint LHS and improves it by coordinate
    exchanges between a critical point and any other point until no exchange
    increases the minimum distance (ties broken by the number of pairs at the
    minimum). The best restart is returned.
    """
    if r < 2:
        raise ValueError("maximin LHS requires r >= 2")
    if d < 1 or restarts < 1:
        raise ValueError("d and restarts must be >= 1")
    rng = np.random.default_rng(seed)
    best_pts, best_score, start_score = None, None, None
    for _ in range(restarts):
        perms = np.column_stack([rng.permutation(r) for _ in range(d)])
        pts = (perms + 0.5) / r
        if start_score is None:
            start_score = _lhs_score(pts)
        pts = _exchange(pts, max_sweeps)
        score = _lhs_score(pts)
        if best_score is None or _better(score, best_score):
            best_pts, best_score = pts, score
    return Design(best_pts, DesignKind.MAXIMIN_LHS,
                  meta={"seed": seed, "maximin": best_score[0],
                        "start_maximin": start_score[0]})


def grid(d: int, q: int, max_points: int = MAX_GRID_POINTS) -> Design:
    """Cell-centred tensor grid with coordinates ``(i + 0.5) / q``.

    Row-major order: the last coordinate varies fastest, so for ``d = 2`` the
    values reshape to ``(q, q)`` with axis 0 indexing ``x1``.
    """
    if q < 2:
        raise ValueError("grid requires q >= 2")
    if q**d > max_points:
        raise MemoryError(f"grid with {q}^{d} points exceeds cap {max_points}")
    axis = (np.arange(q) + 0.5) / q
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    return Design(pts, DesignKind.GRID, q=q)


def grid_index(multi_index, q: int) -> int:
    return int(np.ravel_multi_index(tuple(multi_index), (q,) * len(multi_index)))


def grid_multi_index(index: int, q: int, d: int) -> tuple[int, ...]:
    return tuple(int(i) for i in np.unravel_index(index, (q,) * d))


def write_design_csv(design: Design, path, comment: str | None = None) -> None:
    """Points as CSV with an ``x1,...,xd`` header, optionally after a ``#`` comment line."""
    header = ",".join(f"x{j + 1}" for j in range(design.d))
    if comment is not None:
        header = f"# {comment}\n{header}"
    np.savetxt(path, design.points, delimiter=",", header=header, comments="",
               fmt="%.17g")


def read_design_csv(path) -> Design:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    pts = np.loadtxt(lines, delimiter=",", skiprows=1, ndmin=2)
    return Design.explicit(pts)
