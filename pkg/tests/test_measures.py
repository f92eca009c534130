import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from refflow import measures
from refflow.cylinders import Cylinder
from refflow.measures import (
    GaussianMeasure,
    GibbsMeasure,
    LadderDensity,
    NotThinnableError,
    beta,
    beta_components,
    exp_integrability,
    ibp_residual,
    integrability_constants,
    jackknife_stderr,
    jensen_chain,
    ladder,
    lag1_autocorrelation,
    natural_precisions,
    psi_squared,
    sample_gaussian,
    sample_gibbs,
    tensor_grid,
)
from refflow.rng import stream


def gibbs4():
    return GibbsMeasure(base=GaussianMeasure(n_modes=4), alpha=1.0, p=4.0)


def test_natural_precisions():
    lam = natural_precisions(3)
    assert lam[0] == pytest.approx(2 * np.pi ** 2, rel=1e-15)
    assert lam[2] == pytest.approx(18 * np.pi ** 2, rel=1e-15)
    # oracle 1/(2 pi^2), tests/oracles/compute_oracles.py
    assert 1.0 / lam[0] == pytest.approx(0.050660591821168886, abs=1e-16)


def test_measure_validation():
    with pytest.raises(ValueError):
        GaussianMeasure(n_modes=2, lam=np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        GibbsMeasure(base=GaussianMeasure(n_modes=2), alpha=1.0, p=2.0)
    with pytest.raises(ValueError):
        GibbsMeasure(base=GaussianMeasure(n_modes=2), alpha=-0.5, p=4.0)


def test_gaussian_beta_is_linear():
    m = GaussianMeasure(n_modes=3)
    X = np.array([[0.1, -0.2, 0.3], [1.0, 0.0, -1.0]])
    comps = beta_components(m, X)
    assert np.allclose(comps, -m.lam * X, atol=1e-15)


def test_gibbs_beta_oracle():
    # beta_{e_1} at the point x = e_1 equals -2 pi^2 - 3/2
    # (tests/oracles/compute_oracles.py)
    m = gibbs4()
    val = beta(m, 0, np.array([1.0, 0.0, 0.0, 0.0]))
    assert val == pytest.approx(-21.239208802178717, abs=1e-10)


def test_beta_direction_linearity():
    m = gibbs4()
    x = np.array([[0.3, -0.1, 0.2, 0.05]])
    h1 = np.array([1.0, 0.0, 0.0, 0.0])
    h2 = np.array([0.0, 2.0, -1.0, 0.0])
    lhs = beta(m, h1 + h2, x)
    assert lhs == pytest.approx(beta(m, h1, x) + beta(m, h2, x), rel=1e-12)
    assert beta(m, 1, x) == pytest.approx(beta(m, np.array([0.0, 1.0]), x), rel=1e-12)


def test_sample_gaussian_distribution():
    m = GaussianMeasure(n_modes=2)
    X = sample_gaussian(m, 40000, 123)
    # KS against the exact mode-1 marginal
    _, pval = stats.kstest(X[:, 0], "norm", args=(0.0, m.mode_std[0]))
    assert pval > 1e-4
    assert np.allclose(X.std(axis=0), m.mode_std, rtol=0.05)


def test_sample_gibbs_alpha_zero_is_gaussian():
    m0 = GibbsMeasure(base=GaussianMeasure(n_modes=3), alpha=0.0, p=4.0)
    a = sample_gibbs(m0, 100, 7)
    b = sample_gaussian(m0.base, 100, 7)
    assert np.array_equal(a, b)


def test_sample_gibbs_deterministic_and_decorrelated():
    m = gibbs4()
    a = sample_gibbs(m, 500, 42)
    b = sample_gibbs(m, 500, 42)
    assert np.array_equal(a, b)
    assert abs(lag1_autocorrelation((a ** 2).sum(axis=1))) < 0.1


def test_sample_gibbs_matches_slice_quadrature():
    # E[x_1^2] under the 1-mode Gibbs measure, MC against the slice density
    m = GibbsMeasure(base=GaussianMeasure(n_modes=1), alpha=1.0, p=4.0)
    X = sample_gibbs(m, 30000, 5)
    slc = psi_squared(m, 1).bind(None)
    pts, w = tensor_grid(1, 1.5, 256)
    exact = float(w @ (pts[:, 0] ** 2 * slc.value(pts)))
    se = X[:, 0].std() ** 2 * math.sqrt(2.0 / len(X))
    assert abs(float((X[:, 0] ** 2).mean()) - exact) < 4 * se + 1e-4


def test_sampler_not_thinnable_error():
    # stiff coupling makes the independence chain sticky enough to need
    # thinning; capping the factor at 1 turns that into the hard error
    m = GibbsMeasure(base=GaussianMeasure(n_modes=4), alpha=30.0, p=4.0)
    with pytest.raises(NotThinnableError):
        sample_gibbs(m, 300, 1, max_thin=1)
    assert abs(lag1_autocorrelation((sample_gibbs(m, 300, 1) ** 2).sum(axis=1))) < 0.1


def test_exp_integrability_oracle():
    # E exp(0.01 |beta_{e_1}|) for the 1-mode Gaussian
    # (tests/oracles/compute_oracles.py, folded-normal MGF)
    m = GaussianMeasure(n_modes=1)
    rep = exp_integrability(m, 0, 0.01, 200000, 11)
    assert not rep.diverged
    assert rep.estimate == pytest.approx(1.0364598584324792, abs=4 * rep.stderr)
    with pytest.raises(ValueError):
        exp_integrability(m, 0, -1.0, 100, 0)


def test_integrability_constants_deterministic():
    m = gibbs4()
    c1 = integrability_constants(m)
    c2 = integrability_constants(m)
    assert np.array_equal(c1, c2)
    assert np.all(c1 > 0)
    # precision grows with the mode index, so the scale constants shrink
    assert c1[3] < c1[0]


def test_ibp_residual_gaussian():
    m = GaussianMeasure(n_modes=4)
    u = Cylinder(
        n_active=1,
        value_fn=lambda X: np.cos(X[:, 0]),
        grad_fn=lambda X: -np.sin(X[:, 0:1]),
        name="cos",
        bound=1.0,
    )
    rep = ibp_residual(m, u, 0, 50000, 3)
    assert rep.passed
    rep_vec = ibp_residual(m, u, np.array([1.0, 0.5]), 50000, 4)
    assert rep_vec.passed


def test_jackknife_matches_plain_stderr():
    w = np.random.default_rng(2).normal(size=400)
    # for the sample mean the jackknife reproduces std/sqrt(n) exactly
    assert jackknife_stderr(w) == pytest.approx(w.std(ddof=1) / math.sqrt(len(w)), rel=1e-10)


def test_psi_squared_gaussian_formula():
    m = GaussianMeasure(n_modes=1)
    slc = psi_squared(m, 1).bind(None)
    x = np.array([[0.2], [-0.4], [0.0]])
    lam = m.lam[0]
    expected = np.sqrt(lam / (2 * np.pi)) * np.exp(-lam * x[:, 0] ** 2 / 2)
    assert np.allclose(slc.value(x), expected, rtol=1e-12)
    pts, w = tensor_grid(1, 1.5, 256)
    assert float(w @ slc.value(pts)) == pytest.approx(1.0, abs=1e-10)


def test_slice_beta_matches_log_gradient():
    m = GibbsMeasure(base=GaussianMeasure(n_modes=3), alpha=1.0, p=4.0)
    slc = psi_squared(m, 2).bind(np.array([0.1]))
    X = np.array([[0.3, -0.2], [0.0, 0.5]])
    h = 1e-6
    b = slc.beta(X)
    for i in range(2):
        Xp = X.copy()
        Xp[:, i] += h
        Xm = X.copy()
        Xm[:, i] -= h
        fd = (np.log(slc.value(Xp)) - np.log(slc.value(Xm))) / (2 * h)
        assert np.allclose(b[:, i], fd, atol=5e-6)


def test_slice_beta_equals_stacked_measure_beta():
    m = GibbsMeasure(base=GaussianMeasure(n_modes=3), alpha=1.0, p=4.0)
    y = np.array([-0.15])
    slc = psi_squared(m, 2).bind(y)
    X = np.array([[0.25, -0.3]])
    stacked = np.concatenate([X, np.repeat(y[None], 1, axis=0)], axis=1)
    assert np.allclose(slc.beta(X), beta_components(m, stacked)[:, :2], rtol=1e-12)


def test_ladder_validation_and_first_branch():
    m = GaussianMeasure(n_modes=1)
    slc = psi_squared(m, 1).bind(None)
    with pytest.raises(ValueError):
        ladder(slc, 0.5, 4)
    with pytest.raises(ValueError):
        ladder(slc, 4, 0)
    same = ladder(slc, 4, 8, respect_first_branch=True)
    assert same is slc  # smooth positive bounded source short-circuits
    lad = ladder(slc, 4, 8)
    assert isinstance(lad, LadderDensity)
    assert lad is not slc


def test_ladder_respects_clip_bounds():
    m = GaussianMeasure(n_modes=1)
    slc = psi_squared(m, 1).bind(None)
    M = 2.0
    lad = ladder(slc, M, 4)
    pts, _ = tensor_grid(1, 3.0, 200)
    vals = lad.value(pts)
    assert np.all(vals >= 1.0 / M - 1e-12)
    assert np.all(vals <= M + 1e-12)
    assert abs(lad.conv_weights.sum() - 1.0) < 1e-14
    assert np.all(np.sqrt((lad.offsets ** 2).sum(axis=1)) <= 1.0 / lad.l + 1e-12)


def test_ladder_log_gradient_consistency():
    m = GibbsMeasure(base=GaussianMeasure(n_modes=1), alpha=1.0, p=4.0)
    slc = psi_squared(m, 1).bind(None)
    lad = ladder(slc, 4, 8)
    X = np.array([[0.15], [-0.35], [0.6]])
    vals, lg = lad.value_and_log_gradient(X)
    h = 1e-6
    fd = (np.log(lad.value(X + h)) - np.log(lad.value(X - h))) / (2 * h)
    assert np.allclose(lg[:, 0], fd, atol=5e-5)


@settings(max_examples=10, deadline=None)
@given(st.sampled_from([2.0, 10.0]), st.sampled_from([4, 16]), st.sampled_from([0.01, 0.05]))
def test_jensen_chain_ordering(M, l, eps):
    m = GibbsMeasure(base=GaussianMeasure(n_modes=1), alpha=1.0, p=4.0)
    slc = psi_squared(m, 1).bind(None)
    i_ml, i_m, i_exact = jensen_chain(slc, M, l, eps, 0)
    assert i_ml <= i_m + 1e-6
    assert i_m <= i_exact + 1e-6
    assert i_ml >= 0.0


def test_tensor_grid_normalizes_gaussian():
    m = GaussianMeasure(n_modes=2)
    slc = psi_squared(m, 2).bind(None)
    pts, w = tensor_grid(2, 1.5, 96)
    assert float(w @ slc.value(pts)) == pytest.approx(1.0, abs=1e-8)


def test_disintegration_tail_dependence():
    # moving the tail coefficient moves the Gibbs coupling, never the Gaussian part
    m = GibbsMeasure(base=GaussianMeasure(n_modes=2), alpha=1.0, p=4.0)
    dis = psi_squared(m, 1)
    x = np.array([[0.2]])
    v0 = dis.bind(np.array([0.0])).value(x)
    v1 = dis.bind(np.array([0.8])).value(x)
    assert not np.allclose(v0, v1)
    g = GaussianMeasure(n_modes=2)
    dis_g = psi_squared(g, 1)
    assert np.allclose(dis_g.bind(np.array([0.0])).value(x), dis_g.bind(np.array([0.8])).value(x))
