"""Dirichlet sine eigenbasis on (0,1), quadrature grids, projections.

Coefficient vectors are plain numpy arrays with the mode index on the last
axis, so batched points have shape (npts, n_modes). The basis is
e_j(xi) = sqrt(2) sin(j pi xi) with -e_j'' = alpha_j e_j, alpha_j = (pi j)^2,
orthonormal in L2(0,1).
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

DEFAULT_NODES = 512


@lru_cache(maxsize=32)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


class InvalidIndexError(ValueError):
    pass


class InvalidDataError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Quadrature rule on (0,1): nodes, weights summing to 1, rule tag."""

    nodes: np.ndarray
    weights: np.ndarray
    rule: str = "gauss-legendre"

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.nodes.ndim != 1 or self.nodes.shape != self.weights.shape:
            raise InvalidDataError("grid nodes and weights must be 1-d and match")
        if np.any(self.weights <= 0):
            raise InvalidDataError("grid weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise InvalidDataError("grid weights must sum to the interval length 1")

    @classmethod
    def gauss_legendre(cls, n=DEFAULT_NODES):
        x, w = _leggauss(n)
        return cls(nodes=(x + 1.0) / 2.0, weights=w / 2.0, rule="gauss-legendre")

    @classmethod
    def midpoint(cls, n=DEFAULT_NODES):
        h = 1.0 / n
        return cls(nodes=h * (np.arange(n) + 0.5), weights=np.full(n, h), rule="uniform-midpoint")

    @property
    def n_nodes(self):
        return len(self.nodes)

    def integrate(self, values):
        """Integrate grid values over (0,1); values may be batched on leading axes."""
        return np.asarray(values) @ self.weights


def eigenvalue(j):
    """alpha_j = pi^2 j^2 of the Dirichlet Laplacian mode j >= 1."""
    if np.any(np.asarray(j) < 1):
        raise InvalidIndexError(f"eigenfunction index must be >= 1, got {j}")
    return (np.pi * np.asarray(j, dtype=float)) ** 2


def eigenfunction(j, grid):
    if j < 1 or int(j) != j:
        raise InvalidIndexError(f"eigenfunction index must be a positive integer, got {j}")
    return np.sqrt(2.0) * np.sin(j * np.pi * grid.nodes)


def eigenpair(j, grid):
    """(values of e_j on the grid, alpha_j)."""
    return eigenfunction(j, grid), float(eigenvalue(j))


_BASIS_CACHE = {}


def basis_matrix(n_modes, grid):
    """Matrix E with rows e_1..e_N evaluated on the grid nodes, shape (N, n_nodes)."""
    key = (grid.rule, grid.n_nodes, n_modes)
    mat = _BASIS_CACHE.get(key)
    if mat is None:
        js = np.arange(1, n_modes + 1)
        mat = np.sqrt(2.0) * np.sin(np.outer(js, np.pi * grid.nodes))
        mat.setflags(write=False)
        _BASIS_CACHE[key] = mat
    return mat


def project(values, n_modes, grid):
    """Coefficients a_j = int values * e_j dxi by quadrature; batched on leading axes."""
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise InvalidDataError("project: input values contain NaN or inf")
    E = basis_matrix(n_modes, grid)
    return (values * grid.weights) @ E.T


def synthesize(coeffs, grid):
    """Grid values of sum_j a_j e_j; batched on leading axes."""
    coeffs = np.asarray(coeffs, dtype=float)
    E = basis_matrix(coeffs.shape[-1], grid)
    return coeffs @ E


def apply_fractional_power(theta, coeffs):
    """Coefficientwise (-A)^theta: a_j -> alpha_j^theta a_j."""
    coeffs = np.asarray(coeffs, dtype=float)
    js = np.arange(1, coeffs.shape[-1] + 1)
    return coeffs * eigenvalue(js) ** theta


def lp_norm(values, p, grid):
    """(int |values|^p dxi)^(1/p) on the grid; batched on leading axes."""
    if p < 1:
        raise ValueError(f"lp_norm requires p >= 1, got {p}")
    values = np.asarray(values, dtype=float)
    return (np.abs(values) ** p @ grid.weights) ** (1.0 / p)
