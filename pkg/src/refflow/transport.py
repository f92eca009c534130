"""Characteristic flows and the exponential-weight density representation.

The continuity equation on an N-dimensional slice is solved by integrating
characteristics backward and weighting the initial density by the exponential
of the time integral of D*F along the path:

    rho(t, x) = rho0(c(0)) * exp( int_0^t D*F(u, c(u)) du ),

where c solves dc/du = F(u, c), c(t) = x. Fixed-step RK4 (or RK2) for the
flow; the exponent uses the trapezoid rule on the same nodes so both
discretizations refine together.
"""

import csv
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import fields as fields_mod
from .measures import LadderDensity


class FieldEvaluationError(FloatingPointError):
    pass


class StepMismatchError(ValueError):
    pass


class RepresentationOverflowError(OverflowError):
    pass


@dataclass(frozen=True)
class FlowConfig:
    dt_ode: float = 1e-3
    T: float = 1.0
    integrator: str = "RK4"

    def __post_init__(self):
        if self.dt_ode <= 0 or self.T <= 0:
            raise ValueError("dt_ode and T must be positive")
        if self.integrator not in ("RK4", "RK2"):
            raise ValueError(f"unknown integrator {self.integrator!r}")

    def n_steps(self, interval):
        """Number of dt_ode steps in `interval`; the interval must divide."""
        if interval < 0:
            raise ValueError("interval must be nonnegative")
        n = int(round(interval / self.dt_ode))
        if abs(n * self.dt_ode - interval) > 1e-12 * max(1.0, n):
            raise StepMismatchError(
                f"interval {interval} is not a multiple of dt_ode={self.dt_ode}"
            )
        return n


def _rhs(field, u, Z):
    vals = field.value(u, Z)
    k = vals.shape[1]
    if k == Z.shape[1]:
        return vals
    if k > Z.shape[1]:
        raise ValueError(f"field has {k} components but the state is {Z.shape[1]}-dimensional")
    out = np.zeros_like(Z)
    out[:, :k] = vals
    return out


def _step(field, u, Z, h, integrator):
    if integrator == "RK2":
        k1 = _rhs(field, u, Z)
        k2 = _rhs(field, u + 0.5 * h, Z + 0.5 * h * k1)
        nxt = Z + h * k2
    else:
        k1 = _rhs(field, u, Z)
        k2 = _rhs(field, u + 0.5 * h, Z + 0.5 * h * k1)
        k3 = _rhs(field, u + 0.5 * h, Z + 0.5 * h * k2)
        k4 = _rhs(field, u + h, Z + h * k3)
        nxt = Z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(nxt)):
        raise FieldEvaluationError(f"non-finite state while stepping at u={u}")
    return nxt


def flow(field, s, t, x, config):
    """Solution at time t of dz/du = F(u,z), z(s) = x. Handles t < s too."""
    Z = np.atleast_2d(np.asarray(x, dtype=float)).copy()
    squeeze = np.asarray(x).ndim == 1
    n = config.n_steps(abs(t - s))
    h = math.copysign(config.dt_ode, t - s) if n else 0.0
    u = s
    for _ in range(n):
        Z = _step(field, u, Z, h, config.integrator)
        u += h
    return Z[0] if squeeze else Z


def reversed_field(field, T):
    """The backward field G(t,x) = -F(T-t, x) used for inverse characteristics."""
    comps = tuple(
        fields_mod.FieldComponent(
            value_fn=lambda t, X, c=c: -c.value(T - t, X),
            grad_fn=(None if c.grad_fn is None else (lambda t, X, c=c: -c.grad(T - t, X))),
            bound=c.bound,
            name=f"rev_{c.name}",
        )
        for c in field.components
    )
    return fields_mod.CylindricalField(
        components=comps,
        smoothness=field.smoothness,
        horizon=field.horizon,
        time_dependent=field.time_dependent,
        name=f"reversed_{field.name}",
    )


@dataclass(frozen=True)
class InitialDensity:
    """Nonnegative compactly supported density on the first N coordinates."""

    value_fn: object
    support_radius: float
    grad_fn: object = None
    name: str = ""

    def value(self, X):
        return np.clip(np.asarray(self.value_fn(np.atleast_2d(X)), dtype=float), 0.0, None)

    def grad(self, X):
        if self.grad_fn is None:
            raise TypeError(f"density {self.name or '?'} has no gradient")
        return np.asarray(self.grad_fn(np.atleast_2d(X)), dtype=float)


def bump_density(centers, radii, height=1.0, name="bump"):
    """Product of shifted 1-D bumps h * prod_i (1 - ((x_i-c_i)/r_i)^2)_+^3.

    C2, nonnegative, supported in the box prod [c_i - r_i, c_i + r_i].
    """
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if radii.shape != centers.shape or np.any(radii <= 0):
        raise ValueError("need one positive radius per center")
    N = len(centers)

    def value_fn(X):
        U = (X[:, :N] - centers) / radii
        return height * np.prod(np.clip(1.0 - U ** 2, 0.0, None) ** 3, axis=1)

    def grad_fn(X):
        U = (X[:, :N] - centers) / radii
        body = np.clip(1.0 - U ** 2, 0.0, None)
        prod = height * np.prod(body ** 3, axis=1)
        out = np.zeros((X.shape[0], N))
        for i in range(N):
            others = np.prod(np.delete(body, i, axis=1) ** 3, axis=1)
            out[:, i] = height * others * 3.0 * body[:, i] ** 2 * (-2.0 * U[:, i]) / radii[i]
        return out

    radius = float(np.sqrt(((np.abs(centers) + radii) ** 2).sum()))
    return InitialDensity(value_fn=value_fn, grad_fn=grad_fn, support_radius=radius, name=name)


@dataclass
class TransportSolution:
    """Density evaluator plus cached table for one disintegration slice."""

    rho0: object  # value(X) -> (npts,), attribute support_radius
    field: object
    reference: object  # SliceDensity or LadderDensity: value(X) and log-gradient
    config: FlowConfig
    N: int
    y: np.ndarray = None
    table: list = dc_field(default_factory=list)  # (t, eval_points, values)

    def __post_init__(self):
        self.support_radius = float(self.rho0.support_radius + self.config.T * self.field.h_bound)
        self.beta_oracle = (
            self.reference.log_gradient
            if isinstance(self.reference, LadderDensity)
            else self.reference.beta
        )

    def rho(self, t, x):
        return feynman_kac(self, t, x)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"x{i+1}" for i in range(self.N)] + ["rho"])
            for t, pts, vals in self.table:
                for row, v in zip(pts, vals):
                    writer.writerow([f"{t:.12g}"] + [f"{c:.12g}" for c in row] + [f"{v:.17g}"])


def feynman_kac(solution, t, x):
    """Density at time t and points x (rows); exactly 0 outside the support ball.

    Exponent overflow beyond 700 raises RepresentationOverflowError naming the
    offending (t, x); points whose characteristic exits the initial support
    return exactly 0 without exponentiating.
    """
    cfg = solution.config
    if t < 0 or t > cfg.T + 1e-12:
        raise ValueError(f"t={t} outside [0, {cfg.T}]")
    X = np.atleast_2d(np.asarray(x, dtype=float))
    squeeze = np.asarray(x).ndim == 1
    out = np.zeros(X.shape[0])
    near = np.sqrt((X ** 2).sum(axis=1)) <= solution.support_radius + 1e-12
    n = cfg.n_steps(t)
    if n == 0:
        out[near] = np.clip(solution.rho0.value(X[near]), 0.0, None)
        return float(out[0]) if squeeze else out
    if near.any():
        Z = X[near].copy()
        fld, beta = solution.field, solution.beta_oracle
        acc = 0.5 * fields_mod.dstar(fld, beta, t, Z)
        u = t
        for k in range(1, n + 1):
            Z = _step(fld, u, Z, -cfg.dt_ode, cfg.integrator)
            u = t - k * cfg.dt_ode
            g = fields_mod.dstar(fld, beta, max(u, 0.0), Z)
            acc = acc + (0.5 * g if k == n else g)
        expnt = cfg.dt_ode * acc
        rho0v = np.clip(solution.rho0.value(Z), 0.0, None)
        alive = rho0v > 0
        if np.any(expnt[alive] > 700.0):
            bad = int(np.argmax(np.where(alive, expnt, -np.inf)))
            raise RepresentationOverflowError(
                f"exponent {expnt[bad]:.3g} > 700 at t={t}, x={X[near][bad]}"
            )
        vals = np.zeros(Z.shape[0])
        vals[alive] = rho0v[alive] * np.exp(expnt[alive])
        out[near] = vals
    return float(out[0]) if squeeze else out


def solve(rho0, field, reference, config, time_grid=(), eval_points=None, y=None, N=None):
    """Build a TransportSolution and cache density values on the given grid."""
    if N is None:
        N = reference.N if hasattr(reference, "N") else reference.source.N
    sol = TransportSolution(rho0=rho0, field=field, reference=reference, config=config, N=N, y=y)
    if eval_points is not None:
        pts = np.atleast_2d(np.asarray(eval_points, dtype=float))
        for t in time_grid:
            sol.table.append((float(t), pts, feynman_kac(sol, float(t), pts)))
    return sol


def pde_residual(solution, t, x, h_t=None, h_x=1e-4):
    """Central-difference residual of the pointwise equation at (t, x).

    D_t rho + <F, D_x rho> - (D*F) rho; h_t defaults to one ODE step and must
    be a multiple of it so shifted times stay on the flow grid.
    """
    cfg = solution.config
    h_t = cfg.dt_ode if h_t is None else h_t
    cfg.n_steps(h_t)
    if t - h_t < 0 or t + h_t > cfg.T:
        raise ValueError(f"need [t-h_t, t+h_t] inside [0,T], got t={t}, h_t={h_t}")
    X = np.atleast_2d(np.asarray(x, dtype=float))
    dt_rho = (feynman_kac(solution, t + h_t, X) - feynman_kac(solution, t - h_t, X)) / (2.0 * h_t)
    grad = np.zeros_like(X)
    for i in range(X.shape[1]):
        Xp = X.copy()
        Xp[:, i] += h_x
        Xm = X.copy()
        Xm[:, i] -= h_x
        grad[:, i] = (feynman_kac(solution, t, Xp) - feynman_kac(solution, t, Xm)) / (2.0 * h_x)
    f_vals = solution.field.value(t, X)
    k = f_vals.shape[1]
    advect = (f_vals * grad[:, :k]).sum(axis=1)
    ds = fields_mod.dstar(solution.field, solution.beta_oracle, t, X)
    res = dt_rho + advect - ds * feynman_kac(solution, t, X)
    return res if res.size > 1 else float(res[0])
