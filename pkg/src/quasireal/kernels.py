"""Tensor-product Matérn covariance kernels and constant mean functions."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = ["KernelFamily", "KernelSpec", "MeanSpec", "kernel_eval", "kernel_matrix",
           "JITTER"]

# relative diagonal jitter (times the variance) added before factorization
JITTER = 1e-8

_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)


class KernelFamily(enum.Enum):
    MATERN32 = "matern32"
    MATERN52 = "matern52"

    @classmethod
    def parse(cls, value) -> "KernelFamily":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_", "").replace("/", "")
        aliases = {"matern32": cls.MATERN32, "matern3": cls.MATERN32,
                   "matern52": cls.MATERN52, "matern5": cls.MATERN52}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown kernel family {value!r}") from None


def _matern_1d(family: KernelFamily, h: np.ndarray) -> np.ndarray:
    if family is KernelFamily.MATERN32:
        a = _SQRT3 * h
        return (1.0 + a) * np.exp(-a)
    a = _SQRT5 * h
    return (1.0 + a + a * a / 3.0) * np.exp(-a)


@dataclass(frozen=True)
class KernelSpec:
    family: KernelFamily
    variance: float
    lengthscales: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily.parse(self.family))
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "variance", float(self.variance))
        if not self.variance > 0:
            raise ValueError("kernel variance must be positive")
        if not all(v > 0 for v in ls):
            raise ValueError("lengthscales must be positive")

    @property
    def d(self) -> int:
        return len(self.lengthscales)

    def correlation(self, A, B) -> np.ndarray:
        """Correlation matrix ``[k(a_i, b_j)] / variance``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if A.shape[1] != self.d or B.shape[1] != self.d:
            raise ValueError(
                f"dimension mismatch: kernel d={self.d}, inputs {A.shape[1]} and {B.shape[1]}"
            )
        out = np.ones((A.shape[0], B.shape[0]))
        for j, theta in enumerate(self.lengthscales):
            h = np.abs(A[:, j, None] - B[None, :, j]) / theta
            out *= _matern_1d(self.family, h)
        return out

    def __call__(self, A, B) -> np.ndarray:
        return self.variance * self.correlation(A, B)

    def with_params(self, variance=None, lengthscales=None) -> "KernelSpec":
        return KernelSpec(self.family,
                          self.variance if variance is None else variance,
                          self.lengthscales if lengthscales is None else lengthscales)


@dataclass(frozen=True)
class MeanSpec:
    """Constant mean; ``estimated`` marks the ordinary-kriging (unknown) case."""

    constant: float = 0.0
    estimated: bool = True

    def __post_init__(self):
        if not np.isfinite(self.constant):
            raise ValueError("mean constant must be finite")


def _points(x) -> np.ndarray:
    if hasattr(x, "points"):
        return x.points
    return np.atleast_2d(np.asarray(x, dtype=float))


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != spec.d or y.size != spec.d:
        raise ValueError("dimension mismatch between points and kernel")
    return float(spec(x[None, :], y[None, :])[0, 0])


def kernel_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    return spec(_points(A), _points(B))
