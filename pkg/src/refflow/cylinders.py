"""Cylindrical scalar functions of finitely many spectral coordinates.

A Cylinder wraps vectorized value/gradient callables of the first n_active
coefficients. Inputs may carry more trailing modes; the extras are ignored,
which is exactly the cylindrical property.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Cylinder:
    n_active: int
    value_fn: callable  # (npts, n_active) -> (npts,)
    grad_fn: callable = None  # (npts, n_active) -> (npts, n_active)
    name: str = ""
    bound: float = np.inf

    def value(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.value_fn(X[..., : self.n_active])

    def grad(self, X):
        if self.grad_fn is None:
            raise ValueError(f"cylinder {self.name!r} has no gradient")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.grad_fn(X[..., : self.n_active])

    def partial(self, i, X):
        """d/dx_i; zero for directions beyond n_active."""
        if i >= self.n_active:
            X = np.atleast_2d(np.asarray(X, dtype=float))
            return np.zeros(X.shape[0])
        return self.grad(X)[:, i]

    def directional(self, h, X):
        """Derivative along a coefficient vector h."""
        h = np.asarray(h, dtype=float)
        g = self.grad(X)
        k = min(self.n_active, len(h))
        return g[:, :k] @ h[:k]


def constant(c=1.0):
    return Cylinder(
        n_active=1,
        value_fn=lambda X: np.full(X.shape[0], float(c)),
        grad_fn=lambda X: np.zeros_like(X),
        name=f"const({c})",
        bound=abs(c),
    )


def smooth_window(x, radius):
    """C^2 bump (1 - (x/radius)^2)^3 on |x| < radius, 0 outside."""
    u = np.clip(1.0 - (x / radius) ** 2, 0.0, None)
    return u ** 3


def smooth_window_deriv(x, radius):
    u = np.clip(1.0 - (x / radius) ** 2, 0.0, None)
    return 3.0 * u ** 2 * (-2.0 * x / radius ** 2)
