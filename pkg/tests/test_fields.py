import numpy as np
import pytest

from refflow import catalog, fields, measures
from refflow.fields import (
    ConditionProbe,
    CylindricalField,
    DeltaTooLargeError,
    FieldComponent,
    NemytskiiField,
    NotDifferentiableError,
    Reaction,
    TimeDomainError,
    cf_delta,
    claims_probe,
    constant_field,
    delta_recipe,
    divergence,
    dstar,
    dstar_product_rule_check,
    galerkin,
    linear_field,
)


def one_reaction():
    return Reaction(fn=lambda t, r: np.ones_like(r), deriv=lambda t, r: np.zeros_like(r), bound=1.0, name="one")


def test_constant_field_values_and_bound():
    f = constant_field([0.3, -0.2])
    X = np.random.default_rng(0).normal(size=(7, 5))
    vals = f.value(0.0, X)
    assert vals.shape == (7, 2)
    assert np.all(vals[:, 0] == 0.3)
    assert np.all(vals[:, 1] == -0.2)
    assert f.h_bound == pytest.approx(np.hypot(0.3, 0.2))
    assert np.all(divergence(f, 0.0, X) == 0.0)


def test_constant_field_dstar_matches_gaussian_formula():
    # D*F = -div F - sum c_i beta_i = sum c_i lam_i x_i for a constant field
    m = measures.GaussianMeasure(n_modes=3)
    slc = measures.psi_squared(m, 3).bind()
    coeffs = np.array([0.1, -0.4, 0.25])
    f = constant_field(coeffs)
    X = np.random.default_rng(1).normal(scale=0.3, size=(50, 3))
    got = dstar(f, slc.beta, 0.0, X)
    want = (X * m.lam * coeffs).sum(axis=1)
    assert np.allclose(got, want, rtol=1e-13, atol=1e-13)


def test_value_padded_zero_fills():
    f = constant_field([0.5])
    out = f.value_padded(0.0, np.zeros((3, 4)), 4)
    assert out.shape == (3, 4)
    assert np.all(out[:, 0] == 0.5)
    assert np.all(out[:, 1:] == 0.0)


def test_horizon_enforced():
    f = CylindricalField(
        components=(FieldComponent(value_fn=lambda t, X: X[:, 0], bound=1.0),),
        horizon=1.0,
    )
    f.value(1.0, np.zeros((1, 1)))  # endpoint ok
    with pytest.raises(TimeDomainError):
        f.value(2.0, np.zeros((1, 1)))
    nem = NemytskiiField(reaction=one_reaction(), n_modes=2, horizon=0.5)
    with pytest.raises(TimeDomainError):
        nem.value(0.75, np.zeros((1, 2)))


def test_nemytskii_unit_reaction_components():
    """f = 1 gives component j equal to 2 sqrt(2) / (j pi)^3 for odd j, 0 for even."""
    nem = NemytskiiField(reaction=one_reaction(), n_modes=4)
    vals = nem.value(0.0, np.random.default_rng(2).normal(size=(5, 4)))
    # [DERIVED] mpmath: alpha_j^{-1} int_0^1 e_j
    assert np.all(np.abs(vals[:, 0] - 0.091221114805547177) < 1e-14)
    assert np.all(np.abs(vals[:, 2] - 0.0033785598076128584) < 1e-14)
    assert np.all(np.abs(vals[:, 1]) < 1e-15)
    assert np.all(np.abs(vals[:, 3]) < 1e-15)
    assert np.all(divergence(nem, 0.0, np.zeros((1, 4))) == 0.0)


def test_nemytskii_h_bound_sums_inverse_eigenvalues():
    nem = NemytskiiField(reaction=one_reaction(), n_modes=3)
    want = sum(1.0 / (np.pi ** 2 * j ** 2) for j in (1, 2, 3))
    assert nem.h_bound == pytest.approx(want, rel=1e-12)


def test_nemytskii_divergence_matches_finite_differences():
    nem = catalog.build_field({"name": "nemytskii:neg_arctan", "n_modes": 4})
    X = np.random.default_rng(3).normal(scale=0.4, size=(30, 4))
    d = divergence(nem, 0.0, X)
    assert np.all(d <= 0.0)  # f' = -1/(1+r^2) < 0 and the kernel is nonnegative
    eps = 2e-6
    d_fd = np.zeros(X.shape[0])
    for i in range(4):
        Xp = X.copy()
        Xp[:, i] += eps
        Xm = X.copy()
        Xm[:, i] -= eps
        d_fd += (nem.value(0.0, Xp)[:, i] - nem.value(0.0, Xm)[:, i]) / (2 * eps)
    assert np.max(np.abs(d - d_fd)) < 1e-7


def test_galerkin_matches_full_field_on_low_modes():
    """On states supported in the first `level` modes the projection changes nothing."""
    nem = catalog.build_field({"name": "nemytskii:neg_arctan", "n_modes": 4})
    gal = galerkin(nem, 2)
    assert gal.n_components == 2
    rng = np.random.default_rng(4)
    X = np.zeros((40, 4))
    X[:, :2] = rng.normal(scale=0.4, size=(40, 2))
    assert np.max(np.abs(gal.value(0.0, X) - nem.value(0.0, X)[:, :2])) < 1e-13


def test_galerkin_gradients_match_finite_differences():
    nem = catalog.build_field({"name": "nemytskii:neg_arctan", "n_modes": 4})
    gal = galerkin(nem, 2)
    X = np.random.default_rng(5).normal(scale=0.4, size=(25, 4))
    analytic = divergence(gal, 0.0, X)
    stripped = CylindricalField(
        components=tuple(
            FieldComponent(value_fn=c.value_fn, grad_fn=None, bound=c.bound, name=c.name)
            for c in gal.components
        ),
        smoothness=1,
    )
    assert np.max(np.abs(analytic - divergence(stripped, 0.0, X))) < 1e-9


def test_galerkin_level_validation():
    nem = NemytskiiField(reaction=one_reaction(), n_modes=2)
    with pytest.raises(ValueError):
        galerkin(nem, 3)


def test_divergence_rejects_c0_fields():
    rough = CylindricalField(
        components=(FieldComponent(value_fn=lambda t, X: np.abs(X[:, 0]), bound=np.inf),),
        smoothness=0,
    )
    with pytest.raises(NotDifferentiableError):
        divergence(rough, 0.0, np.zeros((2, 1)))


def test_swirl_is_divergence_free():
    f = catalog.build_field({"name": "swirl", "s": 0.2})
    X = np.random.default_rng(6).normal(size=(40, 4))
    assert np.max(np.abs(divergence(f, 0.0, X))) < 1e-14


@pytest.mark.parametrize("field_spec", [{"name": "swirl", "s": 0.2}, {"name": "constant", "coeffs": [0.1, -0.2]}])
def test_product_rule_two_routes_agree(field_spec):
    m = measures.GaussianMeasure(n_modes=4)
    slc = measures.psi_squared(m, 4).bind()
    f = catalog.build_field(field_spec)
    phi = catalog.build_cylinder("rational_m12")
    X = np.random.default_rng(7).normal(scale=0.3, size=(80, 4))
    assert dstar_product_rule_check(f, phi, slc.beta, X) < 1e-12


def test_product_rule_on_gibbs_slice():
    m = measures.GibbsMeasure(base=measures.GaussianMeasure(n_modes=4), alpha=1.0, p=4.0)
    slc = measures.psi_squared(m, 4).bind()
    nem = catalog.build_field({"name": "nemytskii:neg_arctan", "n_modes": 4})
    gal = galerkin(nem, 2)
    phi = catalog.build_cylinder("gauss_m123")
    X = np.random.default_rng(8).normal(scale=0.3, size=(60, 4))
    assert dstar_product_rule_check(gal, phi, slc.beta, X) < 1e-12


def test_claims_probe_bounded_and_stable():
    nem = catalog.build_field({"name": "nemytskii:neg_arctan", "n_modes": 4})
    m = measures.GibbsMeasure(base=measures.GaussianMeasure(n_modes=4), alpha=1.0, p=4.0)
    rep = claims_probe(nem, m, eps=0.1, count=4000, seed=11)
    assert rep.stable
    # -div part is at most sup|f'| * sum 1/alpha_i = 0.14424...
    assert 0.0 <= rep.c_div <= 0.1443
    # r arctan(r) >= 0 makes the beta part nonnegative here
    assert rep.c_beta == 0.0
    assert rep.count == 4000


def test_claims_probe_rejects_nonpositive_eps():
    nem = catalog.build_field({"name": "nemytskii:neg_arctan", "n_modes": 2})
    m = measures.GaussianMeasure(n_modes=2)
    with pytest.raises(ValueError):
        claims_probe(nem, m, eps=0.0, count=100, seed=0)


def test_condition_probe_validation_and_smoothing():
    with pytest.raises(ValueError):
        ConditionProbe(eps_n=np.array([0.5, -0.1]))
    with pytest.raises(ValueError):
        ConditionProbe(eps_n=np.array([0.5]), delta=0.0)
    geo = ConditionProbe(eps_n=0.5 ** np.arange(1, 30), tail_tolerance=1e-6)
    assert geo.square_summable()
    slow = ConditionProbe(eps_n=1.0 / np.sqrt(np.arange(1, 30)), tail_tolerance=1e-6)
    assert not slow.square_summable()
    f = constant_field([2.0, 2.0])
    sm = ConditionProbe(eps_n=np.array([0.5, 0.25])).smooth(f)
    vals = sm.value(0.0, np.zeros((1, 4)))
    assert np.allclose(vals, [[1.0, 0.5]])
    assert sm.h_bound == pytest.approx(np.hypot(1.0, 0.5))
    with pytest.raises(ValueError):
        ConditionProbe(eps_n=np.array([0.5])).smooth(f)


def test_delta_recipe_positive_and_needs_finite_bounds():
    m = measures.GaussianMeasure(n_modes=1)
    d = delta_recipe(constant_field([0.1]), m)
    assert 0.0 < d < 1.0
    unbounded = linear_field(np.diag([-1.0]))
    with pytest.raises(ValueError):
        delta_recipe(unbounded, m)


def test_cf_delta_constant_field_approaches_closed_form():
    """Clipping only removes positive mass, so estimates sit below the exact value."""
    m = measures.GaussianMeasure(n_modes=1)
    dis = measures.psi_squared(m, 1)
    rep = cf_delta(constant_field([0.1]), dis, delta=0.05, T=1.0)
    # [DERIVED] mpmath: T (e^{s^2/2lam} Phi(s/sqrt(lam)) - 1/2), s = delta lam c
    exact = 0.0089871124597119349
    assert rep.estimate <= exact + 1e-12
    assert rep.estimate > 0.85 * exact
    for l in (2, 4, 8, 16):
        assert rep.per_pair[(1, l)] == 0.0
    assert rep.max_at_grid_edge
    assert max(rep.per_pair, key=rep.per_pair.get) == (8, 16)
    assert rep.tail_count == 1


def test_cf_delta_time_flag_only_changes_quadrature():
    m = measures.GaussianMeasure(n_modes=1)
    dis = measures.psi_squared(m, 1)
    f = constant_field([0.1])
    flagged = CylindricalField(components=f.components, smoothness=2, time_dependent=True)
    a = cf_delta(f, dis, delta=0.05, T=0.8)
    b = cf_delta(flagged, dis, delta=0.05, T=0.8)
    assert a.estimate == pytest.approx(b.estimate, rel=1e-12)


def test_cf_delta_rejects_bad_delta_and_flags_overflow():
    m = measures.GaussianMeasure(n_modes=1)
    dis = measures.psi_squared(m, 1)
    f = constant_field([0.1])
    with pytest.raises(ValueError):
        cf_delta(f, dis, delta=0.0, T=1.0)
    with pytest.raises(DeltaTooLargeError) as exc:
        cf_delta(f, dis, delta=1000.0, T=1.0)
    assert exc.value.suggested_delta is not None
    assert 0.0 < exc.value.suggested_delta < 1.0
