"""Covariance functions and dense block assembly."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FAMILIES = (
    "matern12",
    "matern32",
    "matern52",
    "exponential",
    "squared_exponential",
    "brownian_bridge_1d",
    "laplace3d",
)

STATIONARY = {"matern12", "matern32", "matern52", "exponential", "squared_exponential"}

_SQRT3 = math.sqrt(3.0)
_SQRT5 = math.sqrt(5.0)


class KernelError(ValueError):
    """Invalid kernel input (dimension mismatch, singular evaluation)."""


def pairwise_distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Euclidean distances between the rows of ``X`` and ``Y``.

    The squared differences are summed in coordinate order with no
    compensation, so ``pairwise_distances(X, Y) == pairwise_distances(Y, X).T``
    holds bitwise.
    """
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    if X.shape[1] != Y.shape[1]:
        raise KernelError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    acc = np.zeros((X.shape[0], Y.shape[0]))
    for c in range(X.shape[1]):
        diff = X[:, c, None] - Y[None, :, c]
        acc += diff * diff
    return np.sqrt(acc)


def distances_to(x: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Distances from a single point ``x`` to every row of ``Y``."""
    return pairwise_distances(np.asarray(x, dtype=float)[None, :], Y)[0]


@dataclass(frozen=True)
class KernelModel:
    """A covariance function ``G(x, y)``.

    ``range`` is the length-scale parameter and ``variance`` the marginal
    variance multiplier.  ``brownian_bridge_1d`` and ``laplace3d`` ignore
    ``range``; ``variance`` still scales them.
    """

    family: str = "matern32"
    range: float = 1.0
    variance: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise KernelError(f"unknown kernel family {self.family!r}; choose from {FAMILIES}")
        if not self.range > 0:
            raise KernelError("range must be positive")
        if not self.variance > 0:
            raise KernelError("variance must be positive")

    @property
    def stationary(self) -> bool:
        return self.family in STATIONARY

    def from_distance(self, u: np.ndarray) -> np.ndarray:
        """Evaluate a stationary family on an array of distances."""
        fam = self.family
        s = u / self.range
        if fam in ("matern12", "exponential"):
            out = np.exp(-s)
        elif fam == "matern32":
            a = _SQRT3 * s
            out = (1.0 + a) * np.exp(-a)
        elif fam == "matern52":
            a = _SQRT5 * s
            out = (1.0 + a + a * a / 3.0) * np.exp(-a)
        elif fam == "squared_exponential":
            out = np.exp(-0.5 * s * s)
        elif fam == "laplace3d":
            if np.any(u == 0):
                raise KernelError("laplace3d kernel is singular at coincident points")
            return self.variance / (4.0 * math.pi * u)
        else:
            raise KernelError(f"{fam} is not a function of distance alone")
        return self.variance * out

    def matrix(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Dense kernel matrix ``G(X[a], Y[b])``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if self.family == "brownian_bridge_1d":
            if X.shape[1] != 1 or Y.shape[1] != 1:
                raise KernelError("brownian_bridge_1d requires d = 1")
            x = X[:, 0, None]
            y = Y[None, :, 0]
            if np.any((x <= 0) | (x >= 1)) or np.any((y <= 0) | (y >= 1)):
                raise KernelError("brownian_bridge_1d requires points in (0, 1)")
            return self.variance * (np.minimum(x, y) - x * y)
        if self.family == "laplace3d" and (X.shape[1] != 3 or Y.shape[1] != 3):
            raise KernelError("laplace3d requires d = 3")
        return self.from_distance(pairwise_distances(X, Y))


def evaluate(kernel: KernelModel, x, y) -> float:
    """``G(x, y)`` for two single points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise KernelError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(kernel.matrix(x[None, :], y[None, :])[0, 0])


def assemble_block(kernel: KernelModel, coords: np.ndarray, rows, cols=None) -> np.ndarray:
    """Dense sub-block ``Theta[rows, cols]`` of the kernel matrix on ``coords``.

    With ``cols=None`` the square block over ``rows`` is returned, and it is
    exactly symmetric.
    """
    rows = np.asarray(rows, dtype=np.intp)
    if cols is None:
        return kernel.matrix(coords[rows], coords[rows])
    cols = np.asarray(cols, dtype=np.intp)
    return kernel.matrix(coords[rows], coords[cols])
