"""Reaction-diffusion SPDE simulator in spectral coordinates.

dX = [AX + p_alpha(X)] dt + B dW with A the Dirichlet Laplacian (mode rates
alpha_j = pi^2 j^2), p a decreasing odd-degree polynomial reaction applied
pointwise, p_alpha its Yosida regularization (alpha = 0 means p itself), and
B diagonal with a bounded inverse. The stepping scheme treats the linear part
exactly per mode (exponential integrator) and the reaction and noise
explicitly; the Ornstein-Uhlenbeck reduction p = 0 is therefore sampled from
its exact transition kernel.

Also here: derivative flows along frozen paths, semigroup and gradient
estimators (the probabilistic integration-by-parts weight), the smoothing
commutator and its decay curve, the V-norm quadratic form, and the
martingale-moment ratio check.
"""

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np

from .rng import as_rng, map_units
from .spectral import Grid, basis_matrix, eigenvalue


class BlowUpError(FloatingPointError):
    pass


class SchemeError(AssertionError):
    pass


class SolverError(RuntimeError):
    pass


class NotConvergedError(RuntimeError):
    pass


@lru_cache(maxsize=64)
def _poly_pair(coeffs):
    p = np.polynomial.Polynomial(coeffs)
    return p, p.deriv()


@dataclass(frozen=True)
class SpdeConfig:
    n_modes: int
    dt: float
    T: float
    B_diag: tuple = ()
    p_coeffs: tuple = ()  # ascending powers; () or all-zero disables the reaction
    yosida_alpha: float = 0.0
    quad_nodes: int = 257

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be at least 1")
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        B = np.asarray(self.B_diag if len(self.B_diag) else np.ones(self.n_modes), dtype=float)
        if B.size == 1:
            B = np.full(self.n_modes, B.item())
        if B.shape != (self.n_modes,) or np.any(B <= 0):
            raise ValueError("B_diag must be positive with one entry per mode (bounded inverse)")
        object.__setattr__(self, "B_diag", tuple(B))
        coeffs = tuple(float(c) for c in self.p_coeffs)
        if any(c != 0 for c in coeffs):
            deg = max(i for i, c in enumerate(coeffs) if c != 0)
            if deg <= 1 or deg % 2 == 0:
                raise ValueError(f"reaction degree must be odd and > 1, got {deg}")
            if coeffs[deg] >= 0:
                raise ValueError("leading reaction coefficient must be negative")
            _, dp = _poly_pair(coeffs)
            probe = np.linspace(-20.0, 20.0, 4001)
            if np.any(dp(probe) > 0):
                raise ValueError("reaction must be nonincreasing (derivative positive on probe grid)")
        object.__setattr__(self, "p_coeffs", coeffs)
        if self.yosida_alpha < 0:
            raise ValueError("yosida_alpha must be nonnegative")

    @property
    def has_reaction(self):
        return any(c != 0 for c in self.p_coeffs)

    @property
    def rates(self):
        return np.array([eigenvalue(j) for j in range(1, self.n_modes + 1)])

    @property
    def b_array(self):
        return np.asarray(self.B_diag, dtype=float)

    @property
    def grid(self):
        return Grid.gauss_legendre(self.quad_nodes)

    def n_steps(self, interval):
        n = int(round(interval / self.dt))
        if abs(n * self.dt - interval) > 1e-10 * max(1.0, n):
            raise ValueError(f"interval {interval} not aligned with dt={self.dt}")
        return n


# ---------------------------------------------------------------------------
# Yosida regularization


def yosida_resolvent(p_coeffs, alpha, r):
    """J_alpha(r): the unique y with y - alpha p(y) = r, bracketed Newton."""
    if alpha <= 0:
        raise ValueError("resolvent needs alpha > 0")
    p, dp = _poly_pair(tuple(p_coeffs))
    r = np.asarray(r, dtype=float)
    pr = p(r)
    lo = np.minimum(r, r + alpha * pr)
    hi = np.maximum(r, r + alpha * pr)
    y = r + 0.5 * alpha * pr
    for _ in range(100):
        g = y - alpha * p(y) - r
        done = np.all(np.abs(g) <= 1e-12 * (1.0 + np.abs(r)))
        if done:
            return y if y.ndim else float(y)
        lo = np.where(g < 0, y, lo)
        hi = np.where(g > 0, y, hi)
        step = g / (1.0 - alpha * dp(y))
        y_new = y - step
        outside = (y_new < lo) | (y_new > hi)
        y = np.where(outside, 0.5 * (lo + hi), y_new)
    raise SolverError("resolvent Newton did not reach 1e-12 in 100 iterations")


def yosida_drift(p_coeffs, alpha, r):
    """p_alpha(r) = (J_alpha(r) - r)/alpha = p(J_alpha(r)); alpha=0 gives p."""
    p, _ = _poly_pair(tuple(p_coeffs))
    r = np.asarray(r, dtype=float)
    if alpha == 0:
        out = p(r)
        return out if out.ndim else float(out)
    J = yosida_resolvent(p_coeffs, alpha, r)
    out = (np.asarray(J) - r) / alpha
    return out if out.ndim else float(out)


def yosida_drift_prime(p_coeffs, alpha, r):
    """d/dr p_alpha(r) = p'(J_alpha(r)) / (1 - alpha p'(J_alpha(r))) <= 0."""
    p, dp = _poly_pair(tuple(p_coeffs))
    r = np.asarray(r, dtype=float)
    if alpha == 0:
        out = dp(r)
        return out if out.ndim else float(out)
    J = np.asarray(yosida_resolvent(p_coeffs, alpha, r))
    d = dp(J)
    out = d / (1.0 - alpha * d)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# simulation


@dataclass
class PathEnsemble:
    times: np.ndarray
    states: np.ndarray  # (n_paths, n_times, n_modes)
    dt: float
    T: float
    seed_labels: tuple = ()

    @property
    def n_paths(self):
        return self.states.shape[0]


def _reaction_modes(config, X, E):
    """project(p_alpha(synthesize(X))): reaction drift in mode coordinates."""
    U = X @ E
    V = yosida_drift(config.p_coeffs, config.yosida_alpha, U)
    return (V * config.grid.weights) @ E.T


def _scheme_factors(config):
    a = config.rates
    ema = np.exp(-a * config.dt)
    phi = (1.0 - ema) / a
    sig = config.b_array * np.sqrt((1.0 - ema ** 2) / (2.0 * a))
    return ema, phi, sig


def simulate(config, x0, seed, n_paths=1, record_every=1, disable_noise=False):
    """Forward paths of the spectral scheme; same seed gives identical output.

    x0: single coefficient vector shared across paths, or (n_paths, n_modes).
    Noise per step is sigma_j xi with sigma matching the exact per-step OU
    variance; disable_noise=True zeroes the increments (deterministic probe).
    """
    rng = as_rng(seed, "spde", "simulate")
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    if x0.shape[0] == 1 and n_paths > 1:
        x0 = np.repeat(x0, n_paths, axis=0)
    n_paths = x0.shape[0]
    n = config.n_steps(config.T)
    ema, phi, sig = _scheme_factors(config)
    E = basis_matrix(config.n_modes, config.grid) if config.has_reaction else None

    rec_idx = list(range(0, n + 1, record_every))
    if rec_idx[-1] != n:
        rec_idx.append(n)
    states = np.empty((n_paths, len(rec_idx), config.n_modes))
    times = np.array([config.dt * k for k in rec_idx])
    X = x0.copy()
    pos = 0
    if rec_idx[0] == 0:
        states[:, 0] = X
        pos = 1
    for k in range(1, n + 1):
        xi = rng.standard_normal((n_paths, config.n_modes))
        if disable_noise:
            xi = np.zeros_like(xi)
        drift = _reaction_modes(config, X, E) if config.has_reaction else 0.0
        X = ema * X + phi * drift + sig * xi
        if np.max(np.abs(X)) > 1e6:
            raise BlowUpError(f"state norm exceeded 1e6 at step {k} (invalid reaction?)")
        if pos < len(rec_idx) and rec_idx[pos] == k:
            states[:, pos] = X
            pos += 1
    return PathEnsemble(times=times, states=states, dt=config.dt, T=config.T, seed_labels=("spde", "simulate", str(seed)))


def _batch_stderr(series, n_batches=32):
    series = np.asarray(series, dtype=float)
    n = len(series) // n_batches
    if n < 1:
        return float(series.std(ddof=1) / math.sqrt(len(series)))
    means = series[: n * n_batches].reshape(n_batches, n).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


@dataclass(frozen=True)
class MomentReport:
    l2_moment: float
    l2_stderr: float
    l4_moment: float
    l4_stderr: float
    first_half_l2: float
    second_half_l2: float
    stationary: bool
    count: int


def sample_invariant(config, burn_in, count, thinning, seed):
    """Thinned post-burn-in states of one long path, with moment report.

    burn_in is in steps and must cover several relaxation times of the slow
    mode; the stationarity diagnostic compares first and second half means of
    |x|_H^2 at 3 batch-means stderr and raises NotConvergedError on failure.
    """
    if burn_in * config.dt < 5.0 / eigenvalue(1):
        raise ValueError(f"burn_in covers {burn_in * config.dt:.3g} time units; need >= {5.0 / eigenvalue(1):.3g}")
    rng = as_rng(seed, "spde", "invariant")
    ema, phi, sig = _scheme_factors(config)
    E = basis_matrix(config.n_modes, config.grid) if config.has_reaction else None
    X = np.zeros((1, config.n_modes))

    def step(X):
        xi = rng.standard_normal((1, config.n_modes))
        drift = _reaction_modes(config, X, E) if config.has_reaction else 0.0
        Xn = ema * X + phi * drift + sig * xi
        if np.max(np.abs(Xn)) > 1e6:
            raise BlowUpError("state norm exceeded 1e6 during invariant sampling")
        return Xn

    for _ in range(burn_in):
        X = step(X)
    samples = np.empty((count, config.n_modes))
    for i in range(count):
        for _ in range(thinning):
            X = step(X)
        samples[i] = X[0]

    l2 = (samples ** 2).sum(axis=1)
    U = samples @ basis_matrix(config.n_modes, config.grid)
    l4 = (U ** 4) @ config.grid.weights
    half = count // 2
    m1, m2 = float(l2[:half].mean()), float(l2[half:].mean())
    se1, se2 = _batch_stderr(l2[:half]), _batch_stderr(l2[half:])
    stationary = abs(m1 - m2) <= 3.0 * math.sqrt(se1 ** 2 + se2 ** 2)
    report = MomentReport(
        l2_moment=float(l2.mean()),
        l2_stderr=_batch_stderr(l2),
        l4_moment=float(l4.mean()),
        l4_stderr=_batch_stderr(l4),
        first_half_l2=m1,
        second_half_l2=m2,
        stationary=bool(stationary),
        count=count,
    )
    if not stationary:
        raise NotConvergedError(
            f"halves differ: {m1:.4g} vs {m2:.4g} with stderr {se1:.2g}/{se2:.2g}; increase burn_in"
        )
    return samples, report


# ---------------------------------------------------------------------------
# derivative flow and gradient estimators


def _eta_step(config, eta, X_before, ema, E):
    """One splitting step of the linearized flow along the frozen path."""
    eta = ema * eta
    if config.has_reaction:
        U = X_before @ E
        mult = np.exp(config.dt * yosida_drift_prime(config.p_coeffs, config.yosida_alpha, U))
        eta = ((eta @ E) * mult * config.grid.weights) @ E.T
    return eta


def derivative_flow(config, path_states, h, check_contraction=True):
    """eta trajectory along a frozen path: d eta = [A eta + Dp_alpha(X) eta] dt.

    path_states: (n_paths, n_steps+1, n_modes) at full resolution. Returns the
    same shape. The scheme is a product of contractions (exact linear decay,
    pointwise nonpositive-exponent multiplier, orthogonal projection), so
    |eta(t)| <= |h| holds up to roundoff and is asserted at 1e-8 slack.
    """
    states = np.asarray(path_states, dtype=float)
    if states.ndim == 2:
        states = states[None]
    n_paths, n_times, _ = states.shape
    h = np.asarray(h, dtype=float)
    eta = np.broadcast_to(h, (n_paths, config.n_modes)).copy()
    out = np.empty_like(states)
    out[:, 0] = eta
    ema = np.exp(-config.rates * config.dt)
    E = basis_matrix(config.n_modes, config.grid) if config.has_reaction else None
    h_norm = math.sqrt(float((h ** 2).sum()))
    for k in range(1, n_times):
        eta = _eta_step(config, eta, states[:, k - 1], ema, E)
        if check_contraction:
            worst = math.sqrt(float((eta ** 2).sum(axis=1).max()))
            if worst > h_norm * (1.0 + 1e-8) + 1e-300:
                raise SchemeError(f"contraction violated at step {k}: |eta|={worst} > |h|={h_norm}")
        out[:, k] = eta
    return out


@dataclass(frozen=True)
class EstimateReport:
    estimate: float
    stderr: float
    n_mc: int
    inconclusive: bool = False


def semigroup(config, phi, x, t, n_mc, seed):
    """(P_t phi)(x) by Monte Carlo over independent paths from x."""
    if config.n_steps(t) == 0:
        v = float(np.asarray(phi(np.atleast_2d(np.asarray(x, dtype=float)))).ravel()[0])
        return EstimateReport(estimate=v, stderr=0.0, n_mc=n_mc)
    cfg = _with_horizon(config, t)
    ens = simulate(cfg, np.asarray(x, dtype=float), seed, n_paths=n_mc, record_every=max(1, cfg.n_steps(t)))
    vals = np.asarray(phi(ens.states[:, -1]), dtype=float)
    return EstimateReport(
        estimate=float(vals.mean()),
        stderr=float(vals.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else math.inf,
        n_mc=n_mc,
    )


def _with_horizon(config, t):
    if abs(config.T - t) < 1e-15:
        return config
    return SpdeConfig(
        n_modes=config.n_modes,
        dt=config.dt,
        T=t,
        B_diag=config.B_diag,
        p_coeffs=config.p_coeffs,
        yosida_alpha=config.yosida_alpha,
        quad_nodes=config.quad_nodes,
    )


def bel_gradient(config, phi, x, h, t, n_mc, seed, return_weights=False):
    """Directional derivative of P_t phi at x via the probabilistic weight.

    (1/t) E[ phi(X_t) int_0^t <B^{-1} eta(s), dW(s)> ] with the stochastic
    integral accumulated left-point on the simulation grid, sharing the same
    normal increments as the path. stderr > 50% of |estimate| flags the
    result inconclusive.
    """
    if t <= 0:
        raise ValueError("bel_gradient needs t > 0")
    n = config.n_steps(t)
    rng = as_rng(seed, "spde", "bel")
    ema, phi_fac, sig = _scheme_factors(config)
    E = basis_matrix(config.n_modes, config.grid) if config.has_reaction else None
    X = np.repeat(np.atleast_2d(np.asarray(x, dtype=float)), n_mc, axis=0)
    eta = np.broadcast_to(np.asarray(h, dtype=float), X.shape).copy()
    Binv = 1.0 / config.b_array
    w = np.zeros(n_mc)
    sqdt = math.sqrt(config.dt)
    for _ in range(n):
        xi = rng.standard_normal((n_mc, config.n_modes))
        w += ((eta * Binv) * xi).sum(axis=1) * sqdt
        X_prev = X
        drift = _reaction_modes(config, X_prev, E) if config.has_reaction else 0.0
        X = ema * X_prev + phi_fac * drift + sig * xi
        eta = _eta_step(config, eta, X_prev, ema, E)
    vals = np.asarray(phi(X), dtype=float) * w / t
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else math.inf
    rep = EstimateReport(estimate=est, stderr=se, n_mc=n_mc, inconclusive=bool(se > 0.5 * abs(est)))
    return (rep, vals) if return_weights else rep


def fd_gradient(config, phi, x, h, t, n_mc, seed, step=1e-3):
    """Central finite difference of the semigroup in direction h (shared noise)."""
    h = np.asarray(h, dtype=float)
    x = np.asarray(x, dtype=float)
    up = semigroup(config, phi, x + step * h, t, n_mc, seed)
    dn = semigroup(config, phi, x - step * h, t, n_mc, seed)
    est = (up.estimate - dn.estimate) / (2.0 * step)
    se = math.sqrt(up.stderr ** 2 + dn.stderr ** 2) / (2.0 * step)
    return EstimateReport(estimate=est, stderr=se, n_mc=n_mc)


# ---------------------------------------------------------------------------
# commutator machinery


@dataclass(frozen=True)
class CommutatorEstimate:
    eps: float
    value: float
    stderr: float
    n_samples: int

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("L1 estimate cannot be negative")


def _commutator_samples(config, u, F, eps_sorted, x, n_mc, rng):
    """Per-path difference d_i(eps) = u(X_eps) w_i / eps - <Du, F>(X_eps).

    One simulation per base point x, integrated to max(eps) and snapshotted at
    every requested eps (all multiples of dt). Returns (n_eps, n_mc).
    """
    n_total = config.n_steps(eps_sorted[-1])
    marks = {config.n_steps(e): i for i, e in enumerate(eps_sorted)}
    ema, phi_fac, sig = _scheme_factors(config)
    E = basis_matrix(config.n_modes, config.grid) if config.has_reaction else None
    X = np.repeat(np.atleast_2d(np.asarray(x, dtype=float)), n_mc, axis=0)
    k_field = F.n_components
    h = np.zeros(config.n_modes)
    h[:k_field] = F.value(0.0, X[:1, :k_field])[0]
    eta = np.broadcast_to(h, X.shape).copy()
    Binv = 1.0 / config.b_array
    w = np.zeros(n_mc)
    sqdt = math.sqrt(config.dt)
    out = np.empty((len(eps_sorted), n_mc))

    def snapshot(i, eps):
        uval = np.asarray(u.value(X), dtype=float)
        gu = u.grad(X)
        k = min(gu.shape[1], k_field)
        g = (gu[:, :k] * F.value(0.0, X)[:, :k]).sum(axis=1)
        out[i] = uval * w / eps - g

    for k in range(1, n_total + 1):
        xi = rng.standard_normal((n_mc, config.n_modes))
        w += ((eta * Binv) * xi).sum(axis=1) * sqdt
        X_prev = X
        drift = _reaction_modes(config, X_prev, E) if config.has_reaction else 0.0
        X = ema * X_prev + phi_fac * drift + sig * xi
        eta = _eta_step(config, eta, X_prev, ema, E)
        if k in marks:
            snapshot(marks[k], eps_sorted[marks[k]])
    return out


def commutator(config, u, F, eps, x, n_mc, seed):
    """B_eps(u, F)(x) = <D P_eps u, F(x)> - P_eps(<Du, F>)(x), shared noise."""
    if not (0 < eps <= 1):
        raise ValueError(f"eps must be in (0, 1], got {eps}")
    rng = as_rng(seed, "spde", "commutator")
    d = _commutator_samples(config, u, F, [eps], np.asarray(x, dtype=float), n_mc, rng)[0]
    est = float(d.mean())
    se = float(d.std(ddof=1) / math.sqrt(n_mc))
    return EstimateReport(estimate=est, stderr=se, n_mc=n_mc, inconclusive=bool(se > 0.5 * abs(est)))


@dataclass(frozen=True)
class DecayCurveReport:
    estimates: tuple  # CommutatorEstimate, decreasing eps
    trend_established: bool
    drop: float
    drop_stderr: float


def commutator_decay_curve(
    config, u, F, eps_grid, n_mc_per_eps, n_x_samples, seed, burn_in=None, thinning=None, workers=1
):
    """L1(gamma) commutator norm on an eps grid, outer-sampled from the
    invariant measure; the contract is a decay trend from the largest to the
    smallest eps, and an unestablished trend is reported (not raised).

    Each base point gets its own substream keyed by its index, so the result
    is identical for any worker count."""
    eps_grid = sorted(float(e) for e in eps_grid)
    if burn_in is None:
        burn_in = int(math.ceil(6.0 / (eigenvalue(1) * config.dt)))
    if thinning is None:
        # one relaxation time of the slowest mode between kept draws
        thinning = int(math.ceil(1.0 / (eigenvalue(1) * config.dt)))
    xs, _ = sample_invariant(config, burn_in, n_x_samples, thinning, as_rng(seed, "spde", "curve-outer"))

    def one_point(ix):
        rng = as_rng(seed, "spde", "curve-inner", ix)
        d = _commutator_samples(config, u, F, eps_grid, xs[ix], n_mc_per_eps, rng)
        return np.abs(d.mean(axis=1))

    cols = map_units(one_point, range(n_x_samples), workers)
    abs_vals = np.stack(cols, axis=1)
    ests = []
    for i, e in enumerate(eps_grid):
        ests.append(
            CommutatorEstimate(
                eps=e,
                value=float(abs_vals[i].mean()),
                stderr=float(abs_vals[i].std(ddof=1) / math.sqrt(n_x_samples)),
                n_samples=n_x_samples * n_mc_per_eps,
            )
        )
    first = ests[-1]  # largest eps
    last = ests[0]  # smallest eps
    drop = first.value - last.value
    dse = math.sqrt(first.stderr ** 2 + last.stderr ** 2)
    by_desc = tuple(sorted(ests, key=lambda c: -c.eps))
    return DecayCurveReport(
        estimates=by_desc,
        trend_established=bool(drop > 2.0 * dse),
        drop=float(drop),
        drop_stderr=float(dse),
    )


def commutator_identity_probe(config, u, h, eps, n_outer, n_inner, n_simpson, seed):
    """Residual probe of the constant-direction smoothing identity.

    For a constant field F = h the commutator satisfies
    B_eps(u,h) = int_0^eps P_{eps-s}[ <A h + Dp_alpha(.) h, D P_s u> ](x) ds
    (OU check: u = x_1, h = e_1 gives both sides e^{-a_1 eps} - 1). Both sides
    are estimated by nested Monte Carlo at the origin; returns
    (lhs, rhs, lhs stderr).
    """
    if n_simpson % 2 == 1:
        n_simpson += 1
    x0 = np.zeros(config.n_modes)
    h = np.asarray(h, dtype=float)
    from .fields import constant_field

    width = int(np.max(np.nonzero(h)[0])) + 1 if np.any(h) else 1
    F = constant_field(h[:width])
    lhs = commutator(config, u, F, eps, x0, n_outer * n_inner, as_rng(seed, "spde", "ident-lhs"))

    s_nodes = np.linspace(0.0, eps, n_simpson + 1)
    s_nodes = np.array([config.dt * config.n_steps(s) if s > 0 else 0.0 for s in s_nodes])
    simpson_w = np.ones(n_simpson + 1)
    simpson_w[1:-1:2] = 4.0
    simpson_w[2:-1:2] = 2.0
    simpson_w *= (eps / n_simpson) / 3.0

    a = config.rates
    E = basis_matrix(config.n_modes, config.grid) if config.has_reaction else None

    def q_of(z, s, seed_s):
        """<A h + Dp_alpha(z) h, D_z P_s u (z)> for each row z."""
        if s == 0:
            inner_dir = np.asarray(u.grad(z), dtype=float)
        else:
            inner_dir = None
        # direction v(z) = -a*h + Dp_alpha(z) h in mode coordinates
        v = np.broadcast_to(-a * h, z.shape).copy()
        if config.has_reaction:
            U = z @ E
            mult = yosida_drift_prime(config.p_coeffs, config.yosida_alpha, U)
            v = v + (((np.broadcast_to(h, z.shape) @ E) * mult) * config.grid.weights) @ E.T
        if s == 0:
            k = inner_dir.shape[1]
            return (v[:, :k] * inner_dir).sum(axis=1)
        vals = np.empty(z.shape[0])
        for i in range(z.shape[0]):
            rep = bel_gradient(config, u.value, z[i], v[i], s, n_inner, as_rng(seed_s, "row", i))
            vals[i] = rep.estimate
        return vals

    rhs_terms = []
    for j, s in enumerate(s_nodes):
        cfg_out = _with_horizon(config, eps - s) if eps - s > 0 else None
        if cfg_out is None:
            z = np.atleast_2d(x0)
        else:
            ens = simulate(cfg_out, x0, as_rng(seed, "spde", "ident-outer", j), n_paths=n_outer, record_every=max(1, cfg_out.n_steps(eps - s)))
            z = ens.states[:, -1]
        rhs_terms.append(float(np.mean(q_of(z, s, as_rng(seed, "spde", "ident-inner", j)))))
    rhs = float(simpson_w @ np.array(rhs_terms))
    return lhs.estimate, rhs, lhs.stderr


# ---------------------------------------------------------------------------
# V-norm and the martingale moment ratio


def v_norm(config, phi, eps_grid, n_mc, seed, burn_in=None, thinning=None):
    """max over the eps grid of (1/eps) E_gamma[ phi (phi - P_eps phi) ].

    One invariant-measure draw and one path per MC sample; the path is run to
    max(eps) and snapshotted at each grid value, so every grid point uses the
    same outer randomness.
    """
    eps_grid = sorted(float(e) for e in eps_grid)
    if burn_in is None:
        burn_in = int(math.ceil(6.0 / (eigenvalue(1) * config.dt)))
    if thinning is None:
        thinning = int(math.ceil(1.0 / (eigenvalue(1) * config.dt)))
    xs, _ = sample_invariant(config, burn_in, n_mc, thinning, as_rng(seed, "spde", "vnorm-outer"))
    rng = as_rng(seed, "spde", "vnorm-inner")
    n_total = config.n_steps(eps_grid[-1])
    marks = {config.n_steps(e): i for i, e in enumerate(eps_grid)}
    ema, phi_fac, sig = _scheme_factors(config)
    E = basis_matrix(config.n_modes, config.grid) if config.has_reaction else None
    X = xs.copy()
    phi0 = np.asarray(phi(xs), dtype=float)
    vals = np.empty((len(eps_grid), n_mc))
    for k in range(1, n_total + 1):
        xi = rng.standard_normal((n_mc, config.n_modes))
        drift = _reaction_modes(config, X, E) if config.has_reaction else 0.0
        X = ema * X + phi_fac * drift + sig * xi
        if k in marks:
            i = marks[k]
            vals[i] = phi0 * (phi0 - np.asarray(phi(X), dtype=float)) / eps_grid[i]
    per_eps = [
        EstimateReport(
            estimate=float(vals[i].mean()),
            stderr=float(vals[i].std(ddof=1) / math.sqrt(n_mc)),
            n_mc=n_mc,
        )
        for i in range(len(eps_grid))
    ]
    best = max(range(len(eps_grid)), key=lambda i: per_eps[i].estimate)
    return per_eps[best], {eps_grid[i]: per_eps[i] for i in range(len(eps_grid))}


@dataclass(frozen=True)
class BdgReport:
    ratio: float
    bound: float
    numerator: float
    numerator_stderr: float
    denominator: float
    degenerate: bool
    p: float
    n_mc: int

    @property
    def margin(self):
        return self.bound / self.ratio if self.ratio > 0 else math.inf


def bdg_check(p, phi_values, t, n_mc, seed, n_steps=512):
    """Ratio E sup_{s<=t} |int Phi dW|^p over (int ||Phi||^2 ds)^{p/2}.

    Phi is a deterministic scalar step function given by its values on the
    uniform partition of [0, t]. Zero integrand returns a degenerate report
    instead of dividing by zero.
    """
    if p < 4:
        raise ValueError(f"moment order must be >= 4, got {p}")
    phi_values = np.asarray(phi_values, dtype=float)
    if phi_values.ndim == 0:
        phi_values = np.full(n_steps, float(phi_values))
    if len(phi_values) != n_steps:
        phi_values = np.interp(
            np.linspace(0.0, 1.0, n_steps, endpoint=False), np.linspace(0.0, 1.0, len(phi_values), endpoint=False), phi_values
        )
    dt = t / n_steps
    denom = float((phi_values ** 2).sum() * dt) ** (p / 2.0)
    bound = 12.0 ** p * p ** p
    if denom == 0.0:
        return BdgReport(ratio=0.0, bound=bound, numerator=0.0, numerator_stderr=0.0, denominator=0.0, degenerate=True, p=p, n_mc=n_mc)
    rng = as_rng(seed, "spde", "bdg")
    sup_p = np.empty(n_mc)
    chunk = max(1, 4_000_000 // n_steps)
    sq = math.sqrt(dt)
    for lo in range(0, n_mc, chunk):
        m = min(chunk, n_mc - lo)
        incr = rng.standard_normal((m, n_steps)) * (phi_values * sq)
        path = np.cumsum(incr, axis=1)
        sup_p[lo : lo + m] = np.max(np.abs(path), axis=1) ** p
    num = float(sup_p.mean())
    return BdgReport(
        ratio=num / denom,
        bound=bound,
        numerator=num,
        numerator_stderr=float(sup_p.std(ddof=1) / math.sqrt(n_mc)),
        denominator=denom,
        degenerate=False,
        p=float(p),
        n_mc=n_mc,
    )
