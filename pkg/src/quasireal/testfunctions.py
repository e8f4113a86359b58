"""Analytic benchmark functions on the unit cube and their experiment settings."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernels import KernelFamily

__all__ = ["branin", "branin_neg", "hartmann6", "hartmann6_log", "Benchmark",
           "BENCHMARKS", "get_benchmark"]

# Branin-Hoo constants (Dixon & Szegö 1978; Jones, Schonlau & Welch 1998)
_B_A = 1.0
_B_B = 5.1 / (4 * np.pi**2)
_B_C = 5.0 / np.pi
_B_R = 6.0
_B_S = 10.0
_B_T = 1.0 / (8 * np.pi)

# Hartmann 6-D constants (same references)
_H_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H_A = np.array([
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
])
_H_P = 1e-4 * np.array([
    [1312, 1696, 5569, 124, 8283, 5886],
    [2329, 4135, 8307, 3736, 1004, 9991],
    [2348, 1451, 3522, 2883, 3047, 6650],
    [4047, 8828, 8732, 5743, 1091, 381],
])


def _pts(x, d):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d:
        raise ValueError(f"expected points of dimension {d}, got {x.shape[-1]}")
    return x


def branin(x) -> np.ndarray:
    """Branin-Hoo on the unit square (x1 -> 15 x1 - 5, x2 -> 15 x2)."""
    x = _pts(x, 2)
    u = 15.0 * x[..., 0] - 5.0
    v = 15.0 * x[..., 1]
    return (_B_A * (v - _B_B * u**2 + _B_C * u - _B_R) ** 2
            + _B_S * (1 - _B_T) * np.cos(u) + _B_S)


def branin_neg(x) -> np.ndarray:
    return -branin(x)


def hartmann6(x) -> np.ndarray:
    x = _pts(x, 6)
    inner = np.sum(_H_A * (x[..., None, :] - _H_P) ** 2, axis=-1)
    return -np.sum(_H_ALPHA * np.exp(-inner), axis=-1)


def hartmann6_log(x) -> np.ndarray:
    """``-log(-Hartmann6(x))``; raises when Hartmann6 is not negative."""
    h = hartmann6(x)
    if np.any(h >= 0):
        raise ValueError("Hartmann6 must be negative for the log transform")
    return -np.log(-h)


@dataclass(frozen=True)
class Benchmark:
    name: str
    d: int
    threshold: float
    n_obs: int
    family: KernelFamily
    func: Callable


BENCHMARKS = {
    "branin": Benchmark("branin", 2, -10.0, 20, KernelFamily.MATERN32, branin_neg),
    "hartmann6": Benchmark("hartmann6", 6, 6.0, 60, KernelFamily.MATERN52, hartmann6_log),
}


def get_benchmark(name: str) -> Benchmark:
    key = name.lower().replace("-", "").replace("_", "")
    aliases = {"branin": "branin", "braninneg": "branin", "hartmann6": "hartmann6",
               "hartmann6log": "hartmann6", "hartman6": "hartmann6"}
    try:
        return BENCHMARKS[aliases[key]]
    except KeyError:
        raise ValueError(f"unknown benchmark {name!r}") from None
