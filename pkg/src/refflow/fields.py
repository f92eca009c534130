"""Drift fields on the truncated space and their adjoint-divergence operators.

Two field families: CylindricalField (finitely many components, each a smooth
function of the first few coordinates) and NemytskiiField (a bounded scalar
reaction composed pointwise, then smoothed by (-A)^{-1}). The operators
divergence and dstar implement div F and D*F = -div F - sum_i f_i beta_{e_i},
where beta comes either from the measure (exact) or from a ladder density's
log-gradient.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import measures
from .rng import as_rng
from .spectral import Grid, basis_matrix, eigenvalue

try:
    from numpy import trapezoid as _trapezoid
except ImportError:  # older numpy
    from numpy import trapz as _trapezoid

FD_STEP_BASE = 1e-5


class NotDifferentiableError(TypeError):
    pass


class TimeDomainError(ValueError):
    pass


class DeltaTooLargeError(OverflowError):
    def __init__(self, msg, suggested_delta=None):
        super().__init__(msg)
        self.suggested_delta = suggested_delta


@dataclass(frozen=True)
class FieldComponent:
    """One scalar component f_i(t, x_1..x_k) with optional analytic gradient."""

    value_fn: object
    grad_fn: object = None
    bound: float = np.inf
    name: str = ""

    def value(self, t, X):
        return np.asarray(self.value_fn(t, np.atleast_2d(X)), dtype=float)

    def grad(self, t, X):
        if self.grad_fn is None:
            return None
        return np.asarray(self.grad_fn(t, np.atleast_2d(X)), dtype=float)


@dataclass(frozen=True)
class CylindricalField:
    """F(t,x) = sum_{i<=k} f_i(t, x_1..x_k) e_i with k = n_components."""

    components: tuple
    smoothness: int = 2  # 0, 1 or 2: continuous, C1, C2
    horizon: float = math.inf
    time_dependent: bool = False
    name: str = ""

    @property
    def n_components(self):
        return len(self.components)

    @property
    def h_bound(self):
        """Declared sup of |F(t,x)|_H from the per-component bounds."""
        return float(np.sqrt(sum(c.bound ** 2 for c in self.components)))

    def _check_t(self, t):
        # small slack so integrator stage times at the interval ends pass
        if t < -1e-9 or t > self.horizon + 1e-9:
            raise TimeDomainError(f"t={t} outside [0, {self.horizon}]")

    def value(self, t, X):
        """Component rows (npts, n_components): f_i(t, x_1..x_k)."""
        self._check_t(t)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([c.value(t, X) for c in self.components], axis=-1)

    def value_padded(self, t, X, width):
        vals = self.value(t, X)
        if width == self.n_components:
            return vals
        out = np.zeros((vals.shape[0], width))
        out[:, : self.n_components] = vals
        return out


def constant_field(coeffs, name="constant"):
    coeffs = np.asarray(coeffs, dtype=float)
    comps = tuple(
        FieldComponent(
            value_fn=lambda t, X, c=c: np.full(X.shape[0], c),
            grad_fn=lambda t, X, k=len(coeffs): np.zeros((X.shape[0], k)),
            bound=abs(float(c)),
            name=f"const_{i+1}",
        )
        for i, c in enumerate(coeffs)
    )
    return CylindricalField(components=comps, smoothness=2, name=name)


def linear_field(B, name="linear", bound=np.inf):
    """F(x) = Bx restricted to the first k coordinates (test helper)."""
    B = np.asarray(B, dtype=float)
    k = B.shape[0]
    comps = tuple(
        FieldComponent(
            value_fn=lambda t, X, row=B[i]: X[:, :k] @ row,
            grad_fn=lambda t, X, row=B[i]: np.broadcast_to(row, (X.shape[0], k)).copy(),
            bound=bound,
            name=f"lin_{i+1}",
        )
        for i in range(k)
    )
    return CylindricalField(components=comps, smoothness=2, name=name)


@dataclass(frozen=True)
class Reaction:
    """Bounded scalar reaction r -> f(t, r), C1 in r."""

    fn: object
    deriv: object
    bound: float
    name: str = ""
    time_dependent: bool = False

    def __call__(self, t, r):
        return self.fn(t, r)

    def d(self, t, r):
        return self.deriv(t, r)


@dataclass(frozen=True)
class NemytskiiField:
    """F(t,x) = (-A)^{-1} applied to the pointwise reaction f(t, x(xi))."""

    reaction: Reaction
    n_modes: int
    grid: Grid = dc_field(default_factory=lambda: Grid.gauss_legendre(measures.SLICE_GRID_NODES))
    horizon: float = math.inf

    @property
    def time_dependent(self):
        return self.reaction.time_dependent

    @property
    def h_bound(self):
        inv = 1.0 / np.array([eigenvalue(j) for j in range(1, self.n_modes + 1)])
        return float(self.reaction.bound * inv.sum())

    def value(self, t, X):
        """All n_modes coefficient components of (-A)^{-1} f(t, x(.))."""
        if t < -1e-9 or t > self.horizon + 1e-9:
            raise TimeDomainError(f"t={t} outside [0, {self.horizon}]")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        E = basis_matrix(self.n_modes, self.grid)
        U = X @ E
        vals = self.reaction(t, U)
        inv = 1.0 / np.array([eigenvalue(j) for j in range(1, self.n_modes + 1)])
        return ((vals * self.grid.weights) @ E.T) * inv


def galerkin(nem, level):
    """Project a NemytskiiField to its first `level` modes on both sides.

    Component i (i <= level) is alpha_i^{-1} int e_i f(t, (P_level x)(xi)) dxi,
    a smooth cylinder in the first `level` coordinates; gradients come from
    the same quadrature with the reaction derivative.
    """
    if level > nem.n_modes:
        raise ValueError(f"galerkin level {level} exceeds n_modes {nem.n_modes}")
    E = basis_matrix(level, nem.grid)
    w = nem.grid.weights
    reaction = nem.reaction
    inv_alpha = 1.0 / np.array([eigenvalue(j) for j in range(1, level + 1)])
    # |f_i| <= bound * int |e_i| / alpha_i; int_0^1 |sqrt2 sin(i pi xi)| = 2 sqrt2 / pi
    comp_bounds = reaction.bound * (2.0 * math.sqrt(2.0) / math.pi) * inv_alpha

    def make(i):
        def value_fn(t, X):
            U = X[:, :level] @ E
            return ((reaction(t, U) * w) @ E[i]) * inv_alpha[i]

        def grad_fn(t, X):
            U = X[:, :level] @ E
            fp = reaction.d(t, U)
            return ((fp * E[i] * w) @ E.T) * inv_alpha[i]

        return FieldComponent(value_fn=value_fn, grad_fn=grad_fn, bound=float(comp_bounds[i]), name=f"{reaction.name}_g{i+1}")

    comps = tuple(make(i) for i in range(level))
    return CylindricalField(
        components=comps,
        smoothness=2,
        horizon=nem.horizon,
        time_dependent=reaction.time_dependent,
        name=f"{reaction.name}_galerkin{level}",
    )


def divergence(field, t, X):
    """sum_i d f_i / d x_i, analytic when gradients exist, else central FD."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if isinstance(field, NemytskiiField):
        # sum_i alpha_i^{-1} int e_i^2 f'(t, x(xi)) dxi
        E = basis_matrix(field.n_modes, field.grid)
        inv = 1.0 / np.array([eigenvalue(j) for j in range(1, field.n_modes + 1)])
        kernel = (E * E * inv[:, None]).sum(axis=0)
        U = X @ E
        return (field.reaction.d(t, U) * kernel) @ field.grid.weights
    if field.smoothness < 1:
        raise NotDifferentiableError(f"field {field.name or '?'} is only C0")
    k = field.n_components
    out = np.zeros(X.shape[0])
    for i, comp in enumerate(field.components):
        g = comp.grad(t, X)
        if g is not None:
            out += g[:, i]
            continue
        h = FD_STEP_BASE * (1.0 + np.abs(X[:, i]))
        Xp = X.copy()
        Xp[:, i] += h
        Xm = X.copy()
        Xm[:, i] -= h
        out += (comp.value(t, Xp) - comp.value(t, Xm)) / (2.0 * h)
    return out


def dstar(field, beta_oracle, t, X):
    """D*F(x) = -div F(t,x) - sum_i f_i(t,x) beta_{e_i}(x).

    beta_oracle maps (npts, N) points to (npts, >= n_components) rows of the
    log-gradient; pass a SliceDensity.beta for the exact operator or a
    LadderDensity.log_gradient for the clipped/mollified variant.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    vals = field.value(t, X)
    k = vals.shape[1]
    b = np.asarray(beta_oracle(X), dtype=float)[:, :k]
    return -divergence(field, t, X) - (vals * b).sum(axis=1)


def dstar_product_rule_check(field, phi, beta_oracle, X, t=0.0):
    """Max residual of D*(phi F) = phi D*F - <D phi, F> over the sample X.

    phi is a Cylinder (value + gradient) in at least n_components coords.
    The left side is evaluated through an independently assembled product
    field so the two routes share no intermediate values.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    k = field.n_components

    def product_component(i, comp):
        def value_fn(t_, Y):
            return phi.value(Y) * comp.value(t_, Y)

        def grad_fn(t_, Y):
            g_f = comp.grad(t_, Y)
            if g_f is None:
                raise NotDifferentiableError("product rule check needs analytic gradients")
            return phi.value(Y)[:, None] * g_f + comp.value(t_, Y)[:, None] * phi.grad(Y)[:, :k]

        return FieldComponent(value_fn=value_fn, grad_fn=grad_fn, bound=np.inf, name=f"phi*{comp.name}")

    product = CylindricalField(
        components=tuple(product_component(i, c) for i, c in enumerate(field.components)),
        smoothness=min(field.smoothness, 1),
        horizon=field.horizon,
        time_dependent=field.time_dependent,
        name=f"phi*{field.name}",
    )
    lhs = dstar(product, beta_oracle, t, X)
    f_vals = field.value(t, X)
    rhs = phi.value(X) * dstar(field, beta_oracle, t, X) - (phi.grad(X)[:, :k] * f_vals).sum(axis=1)
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# probes for the standing hypotheses


@dataclass(frozen=True)
class ClaimsReport:
    c_div: float
    c_beta: float
    c_div_half: float
    c_beta_half: float
    eps: float
    count: int

    @property
    def stable(self):
        def ok(full, half):
            scale = max(abs(full), 1e-12)
            return abs(full - half) <= 0.10 * scale + 1e-12

        return ok(self.c_div, self.c_div_half) and ok(self.c_beta, self.c_beta_half)


def claims_probe(nem, measure, eps, count, seed, level=None):
    """Smallest constants C with div-part and beta-part >= -C - eps*penalty.

    penalty(x) = |x|_2^2 + alpha |x|_p^p; samples drawn from the measure.
    Records full-sample and half-sample constants so stability under sample
    doubling is observable.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    level = level or nem.n_modes
    X = (
        measures.sample_gibbs(measure, count, seed)
        if isinstance(measure, measures.GibbsMeasure)
        else measures.sample_gaussian(measure, count, seed)
    )
    E = basis_matrix(level, nem.grid)
    w = nem.grid.weights
    inv = 1.0 / np.array([eigenvalue(j) for j in range(1, level + 1)])

    U = X[:, :level] @ E
    kernel = (E * E * inv[:, None]).sum(axis=0)
    div_part = (nem.reaction.d(0.0, U) * kernel) @ w
    f_comps = ((nem.reaction(0.0, U) * w) @ E.T) * inv
    b = measures.beta_components(measure, X)[:, :level]
    beta_part = (f_comps * b).sum(axis=1)

    alpha = getattr(measure, "alpha", 0.0)
    penalty = (X ** 2).sum(axis=1)
    if alpha > 0:
        Ufull = X @ basis_matrix(measure.n_modes, measure.grid)
        penalty = penalty + alpha * (np.abs(Ufull) ** measure.p @ measure.grid.weights)

    def smallest_c(vals, pen):
        return float(max(0.0, np.max(-vals - eps * pen)))

    half = count // 2
    return ClaimsReport(
        c_div=smallest_c(div_part, penalty),
        c_beta=smallest_c(beta_part, penalty),
        c_div_half=smallest_c(div_part[:half], penalty[:half]),
        c_beta_half=smallest_c(beta_part[:half], penalty[:half]),
        eps=float(eps),
        count=count,
    )


@dataclass(frozen=True)
class ConditionProbe:
    """Diagonal smoothing operator data for the sufficiency-chain probe."""

    eps_n: np.ndarray
    C: float = 0.0
    delta: float = 1.0
    tail_tolerance: float = 1e-6

    def __post_init__(self):
        eps = np.asarray(self.eps_n, dtype=float)
        if np.any(eps <= 0):
            raise ValueError("smoothing eigenvalues must be positive")
        if self.delta <= 0 or self.C < 0:
            raise ValueError("need delta > 0 and C >= 0")
        object.__setattr__(self, "eps_n", eps)

    def partial_sums(self):
        return np.cumsum(self.eps_n ** 2)

    def tail_gap(self):
        s = self.partial_sums()
        return float(s[-1] - s[len(s) // 2])

    def square_summable(self):
        s = self.partial_sums()
        return bool(np.all(np.diff(s) >= 0) and self.tail_gap() <= self.tail_tolerance)

    def smooth(self, field):
        """Component-wise eps_i scaling of a CylindricalField."""
        k = field.n_components
        if len(self.eps_n) < k:
            raise ValueError("need one smoothing eigenvalue per component")
        comps = tuple(
            FieldComponent(
                value_fn=lambda t, X, c=c, e=float(self.eps_n[i]): e * c.value(t, X),
                grad_fn=(None if c.grad_fn is None else (lambda t, X, c=c, e=float(self.eps_n[i]): e * c.grad(t, X))),
                bound=float(self.eps_n[i]) * c.bound,
                name=f"smoothed_{c.name}",
            )
            for i, c in enumerate(field.components)
        )
        return CylindricalField(
            components=comps,
            smoothness=field.smoothness,
            horizon=field.horizon,
            time_dependent=field.time_dependent,
            name=f"smoothed_{field.name}",
        )


# ---------------------------------------------------------------------------
# the exponential cost functional C_F(delta)


def delta_recipe(field, measure, count=2000, seed=0):
    """delta = min_i c_i / (N (||f_i||_inf + 1)) over the active components."""
    c = measures.integrability_constants(measure, count=count, seed=seed)
    k = field.n_components
    bounds = np.array([comp.bound for comp in field.components])
    if not np.all(np.isfinite(bounds)):
        raise ValueError("delta recipe needs finite declared component bounds")
    return float(np.min(c[:k] / (k * (bounds + 1.0))))


@dataclass(frozen=True)
class CfDeltaReport:
    estimate: float
    per_pair: dict
    delta: float
    domain_radius: float
    tail_count: int
    max_at_grid_edge: bool


ML_GRID = ((1, 2, 4, 8), (2, 4, 8, 16))


def cf_delta(
    field,
    disintegration,
    delta,
    T,
    tail_samples=1,
    seed=0,
    ml_grid=ML_GRID,
    domain_radius=None,
    n_per_axis=96,
    n_time=9,
    ladder_kwargs=None,
):
    """Estimate C_F(delta): the exponential cost of the positive part of D*F.

    For each sampled tail y the inner quantity is the (M,l)-grid maximum of
    int_0^T int (e^{delta (D*_{M,l} F)^+} - 1) Psi^2_{M,l} dx dt over the box
    of the given radius; results are averaged over tails. Autonomous fields
    collapse the time integral to a single factor of T.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    N = disintegration.N
    m = disintegration.measure
    n_tail = m.n_modes - N
    if n_tail > 0 and tail_samples > 0:
        full = (
            measures.sample_gibbs(m, tail_samples, as_rng(seed, "fields", "cf-tails"))
            if isinstance(m, measures.GibbsMeasure)
            else measures.sample_gaussian(m, tail_samples, as_rng(seed, "fields", "cf-tails"))
        )
        tails = full[:, N:]
    else:
        tails = np.zeros((1, max(n_tail, 0)))

    if domain_radius is None:
        domain_radius = float(6.0 / math.sqrt(np.min(m.lam[:N])) + 1.0)
    X, w = measures.tensor_grid(N, domain_radius, n_per_axis)
    t_nodes = np.linspace(0.0, T, n_time)
    time_dep = getattr(field, "time_dependent", False)

    per_pair = {}
    tail_estimates = []
    for y in tails:
        slc = disintegration.bind(y if n_tail > 0 else None)
        best = -np.inf
        for M in ml_grid[0]:
            for l in ml_grid[1]:
                lad = measures.ladder(slc, M, l, **(ladder_kwargs or {}))
                vals, lg = lad.value_and_log_gradient(X)

                def space_integral(t):
                    f_vals = field.value(t, X)
                    k = f_vals.shape[1]
                    ds = -divergence(field, t, X) - (f_vals * lg[:, :k]).sum(axis=1)
                    pos = np.clip(ds, 0.0, None)
                    if delta * pos.max() > 700.0:
                        raise DeltaTooLargeError(
                            f"delta={delta} overflows exp at (M,l)=({M},{l}); "
                            f"suggested delta={delta_recipe_safe(field, m)}",
                            suggested_delta=delta_recipe_safe(field, m),
                        )
                    return float(w @ ((np.exp(delta * pos) - 1.0) * vals))

                if time_dep:
                    vals_t = np.array([space_integral(t) for t in t_nodes])
                    est = float(_trapezoid(vals_t, t_nodes))
                else:
                    est = T * space_integral(0.0)
                key = (M, l)
                per_pair[key] = per_pair.get(key, 0.0) + est / len(tails)
                best = max(best, est)
        tail_estimates.append(best)

    grid_best = max(per_pair, key=per_pair.get)
    edge = grid_best[0] == ml_grid[0][-1] or grid_best[1] == ml_grid[1][-1]
    return CfDeltaReport(
        estimate=float(np.mean(tail_estimates)),
        per_pair=per_pair,
        delta=float(delta),
        domain_radius=float(domain_radius),
        tail_count=len(tails),
        max_at_grid_edge=bool(edge),
    )


def delta_recipe_safe(field, measure):
    try:
        return delta_recipe(field, measure)
    except Exception:
        return None
