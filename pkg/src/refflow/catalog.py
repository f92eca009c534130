"""Registered building blocks: measures, fields, reactions, densities,
cylinders, test functions, observables, and the standard problem set.

Every entry carries a one-line mathematical description so `list-catalog`
output is self-explanatory. Builders take plain dicts (parsed config blocks)
and return the corresponding domain objects.
"""

import math

import numpy as np

from . import fields as fields_mod
from . import measures, transport, verify
from .cylinders import Cylinder


# ---------------------------------------------------------------------------
# measures


def build_measure(spec):
    name = spec.get("name", "gaussian")
    n_modes = int(spec.get("n_modes", 1))
    if name == "gaussian":
        return measures.GaussianMeasure(n_modes=n_modes)
    if name == "gibbs":
        return measures.GibbsMeasure(
            base=measures.GaussianMeasure(n_modes=n_modes),
            alpha=float(spec.get("alpha", 1.0)),
            p=float(spec.get("p", 4.0)),
        )
    raise ValueError(f"unknown measure {name!r}")


# ---------------------------------------------------------------------------
# scalar reactions for Nemytskii fields


def _neg_arctan():
    return fields_mod.Reaction(
        fn=lambda t, r: -np.arctan(r),
        deriv=lambda t, r: -1.0 / (1.0 + r ** 2),
        bound=math.pi / 2.0,
        name="neg_arctan",
    )


def _cubic_sat():
    def fn(t, r):
        s = r / np.sqrt(1.0 + r ** 2)
        return -(s ** 3)

    def deriv(t, r):
        s2 = r ** 2 / (1.0 + r ** 2)
        return -3.0 * s2 / (1.0 + r ** 2) ** 1.5

    return fields_mod.Reaction(fn=fn, deriv=deriv, bound=1.0, name="cubic_sat")


SCALAR_REACTIONS = {
    "neg_arctan": _neg_arctan,
    "cubic_sat": _cubic_sat,
}


def polynomial_reaction(spec):
    """SPDE reaction coefficients (ascending powers)."""
    name = spec.get("name", "ou") if spec else "ou"
    if name == "ou":
        return ()
    if name == "cubic":
        c1 = float(spec.get("c1", -1.0))
        if c1 > 0:
            raise ValueError(f"cubic reaction needs c1 <= 0, got {c1}")
        return (0.0, c1, 0.0, -1.0)
    if name == "quintic":
        return (0.0, float(spec.get("c1", -1.0)), 0.0, 0.0, 0.0, -1.0)
    raise ValueError(f"unknown reaction {name!r}")


# ---------------------------------------------------------------------------
# drift fields


def _swirl(s=0.2):
    c1 = fields_mod.FieldComponent(
        value_fn=lambda t, X: s * np.tanh(X[:, 1]),
        grad_fn=lambda t, X: np.stack([np.zeros(X.shape[0]), s / np.cosh(X[:, 1]) ** 2], axis=-1),
        bound=abs(s),
        name="swirl_1",
    )
    c2 = fields_mod.FieldComponent(
        value_fn=lambda t, X: -s * np.tanh(X[:, 0]),
        grad_fn=lambda t, X: np.stack([-s / np.cosh(X[:, 0]) ** 2, np.zeros(X.shape[0])], axis=-1),
        bound=abs(s),
        name="swirl_2",
    )
    return fields_mod.CylindricalField(components=(c1, c2), smoothness=2, name="swirl")


def build_field(spec, n_modes=None):
    name = spec.get("name", "constant")
    if name == "constant":
        return fields_mod.constant_field(np.asarray(spec.get("coeffs", [0.1]), dtype=float))
    if name == "swirl":
        return _swirl(float(spec.get("s", 0.2)))
    if name == "zero":
        return fields_mod.constant_field(np.zeros(int(spec.get("k", 1))))
    if name.startswith("nemytskii:"):
        rname = name.split(":", 1)[1]
        if rname not in SCALAR_REACTIONS:
            raise ValueError(f"unknown scalar reaction {rname!r}")
        nm = int(spec.get("n_modes", n_modes or 1))
        nem = fields_mod.NemytskiiField(reaction=SCALAR_REACTIONS[rname](), n_modes=nm)
        level = spec.get("level")
        return fields_mod.galerkin(nem, int(level)) if level else nem
    raise ValueError(f"unknown field {name!r}")


# ---------------------------------------------------------------------------
# initial densities


def build_density(spec):
    name = spec.get("name", "bump")
    if name == "bump":
        return transport.bump_density(
            centers=np.asarray(spec.get("centers", [0.0]), dtype=float),
            radii=np.asarray(spec.get("radii", [0.5]), dtype=float),
            height=float(spec.get("height", 1.0)),
        )
    raise ValueError(f"unknown density {name!r}")


# ---------------------------------------------------------------------------
# bounded C1 cylinders (IBP integrands, spatial test factors, observables)


def _cyl_cos_m1():
    return Cylinder(
        n_active=1,
        value_fn=lambda X: np.cos(X[:, 0]),
        grad_fn=lambda X: -np.sin(X[:, 0:1]),
        name="cos_m1",
        bound=1.0,
    )


def _cyl_sin_m12():
    return Cylinder(
        n_active=2,
        value_fn=lambda X: np.sin(X[:, 0] + 2.0 * X[:, 1]),
        grad_fn=lambda X: np.stack(
            [np.cos(X[:, 0] + 2.0 * X[:, 1]), 2.0 * np.cos(X[:, 0] + 2.0 * X[:, 1])], axis=-1
        ),
        name="sin_m12",
        bound=1.0,
    )


def _cyl_gauss_m123():
    def value(X):
        return np.exp(-(X[:, :3] ** 2).sum(axis=1))

    def grad(X):
        return -2.0 * X[:, :3] * value(X)[:, None]

    return Cylinder(n_active=3, value_fn=value, grad_fn=grad, name="gauss_m123", bound=1.0)


def _cyl_tanh_m1():
    return Cylinder(
        n_active=1,
        value_fn=lambda X: np.tanh(X[:, 0]),
        grad_fn=lambda X: 1.0 / np.cosh(X[:, 0:1]) ** 2,
        name="tanh_m1",
        bound=1.0,
    )


def _cyl_rational_m12():
    def value(X):
        return 1.0 / (1.0 + X[:, 0] ** 2 + X[:, 1] ** 2)

    def grad(X):
        return -2.0 * X[:, :2] * value(X)[:, None] ** 2

    return Cylinder(n_active=2, value_fn=value, grad_fn=grad, name="rational_m12", bound=1.0)


def _cyl_cos_sin_m13():
    def value(X):
        return np.cos(X[:, 0]) * np.sin(X[:, 2])

    def grad(X):
        g = np.zeros((X.shape[0], 3))
        g[:, 0] = -np.sin(X[:, 0]) * np.sin(X[:, 2])
        g[:, 2] = np.cos(X[:, 0]) * np.cos(X[:, 2])
        return g

    return Cylinder(n_active=3, value_fn=value, grad_fn=grad, name="cos_sin_m13", bound=1.0)


def _mode1_soft(c=1.0):
    return Cylinder(
        n_active=1,
        value_fn=lambda X: c * np.tanh(X[:, 0] / c),
        grad_fn=lambda X: 1.0 / np.cosh(X[:, 0:1] / c) ** 2,
        name=f"mode1_soft({c:g})",
        bound=c,
    )


def _energy_soft(k=4, c=1.0):
    def value(X):
        return c * np.tanh((X[:, :k] ** 2).sum(axis=1) / c)

    def grad(X):
        s = (X[:, :k] ** 2).sum(axis=1)
        return (2.0 * X[:, :k]) / np.cosh(s / c) ** 2

    return Cylinder(n_active=k, value_fn=value, grad_fn=grad, name=f"energy_soft({k},{c:g})", bound=c)


CYLINDERS = {
    "cos_m1": _cyl_cos_m1,
    "sin_m12": _cyl_sin_m12,
    "gauss_m123": _cyl_gauss_m123,
    "tanh_m1": _cyl_tanh_m1,
    "rational_m12": _cyl_rational_m12,
    "cos_sin_m13": _cyl_cos_sin_m13,
}

OBSERVABLES = {
    "mode1_soft": _mode1_soft,
    "energy_soft": _energy_soft,
}


def build_cylinder(name, **kw):
    if name in CYLINDERS:
        return CYLINDERS[name]()
    if name in OBSERVABLES:
        return OBSERVABLES[name](**kw)
    raise ValueError(f"unknown cylinder {name!r}")


# the six (u, h) pairs exercised by the log-derivative duality check;
# h is either a basis index (0-based) or a coefficient vector
IBP_PAIRS = (
    ("cos_m1", 0),
    ("sin_m12", 1),
    ("gauss_m123", 2),
    ("tanh_m1", 0),
    ("rational_m12", (1.0, 0.5, 0.0, 0.0)),
    ("cos_sin_m13", 3),
)


# ---------------------------------------------------------------------------
# time factors and test functions


def build_time_factor(name, T):
    if name == "linear_ramp":
        return (lambda t: 1.0 - t / T), (lambda t: -1.0 / T)
    if name == "quadratic_ramp":
        return (lambda t: (1.0 - t / T) ** 2), (lambda t: -2.0 * (1.0 - t / T) / T)
    if name == "cos_ramp":
        return (
            lambda t: math.cos(0.5 * math.pi * t / T),
            lambda t: -0.5 * math.pi / T * math.sin(0.5 * math.pi * t / T),
        )
    raise ValueError(f"unknown time factor {name!r}")


def build_test_function(spec, T):
    g, gp = build_time_factor(spec.get("g", "linear_ramp"), T)
    f = build_cylinder(spec.get("f", "cos_m1"))
    return verify.TestFunction(g=g, g_prime=gp, f=f, T=T, name=f"{spec.get('g','linear_ramp')}*{f.name}")


# ---------------------------------------------------------------------------
# the standard transport problems


def default_problems(which="1d"):
    """Problem specs for the verification suite; plain dicts, built lazily."""
    one_d = [
        {
            "id": "g1_const",
            "measure": {"name": "gaussian", "n_modes": 1},
            "N": 1,
            "field": {"name": "constant", "coeffs": [0.1]},
            "rho0": {"name": "bump", "centers": [0.0], "radii": [0.5]},
            "dt": 1e-3,
            "T": 0.5,
            "times": [0.25, 0.5],
            "test_function": {"g": "linear_ramp", "f": "cos_m1"},
        },
        {
            "id": "gibbs1_arctan",
            "measure": {"name": "gibbs", "n_modes": 1, "alpha": 1.0, "p": 4.0},
            "N": 1,
            "field": {"name": "nemytskii:neg_arctan", "n_modes": 1, "level": 1},
            "rho0": {"name": "bump", "centers": [0.15], "radii": [0.45]},
            "dt": 1e-3,
            "T": 0.5,
            "times": [0.25, 0.5],
            "test_function": {"g": "cos_ramp", "f": "tanh_m1"},
        },
    ]
    two_d = [
        {
            "id": "g2_swirl",
            "measure": {"name": "gaussian", "n_modes": 2},
            "N": 2,
            "field": {"name": "swirl", "s": 0.2},
            "rho0": {"name": "bump", "centers": [0.1, 0.0], "radii": [0.4, 0.4]},
            "dt": 1e-3,
            "T": 0.25,
            "times": [0.125, 0.25],
            "test_function": {"g": "linear_ramp", "f": "rational_m12"},
        },
    ]
    if which == "1d":
        return one_d
    if which == "2d":
        return two_d
    if which == "all":
        return one_d + two_d
    raise ValueError(f"unknown problem set {which!r}")


def build_problem(spec, ladder_spec=None, respect_first_branch=False):
    """Assemble (measure, slice/ladder reference, field, rho0, config, u)."""
    m = build_measure(spec["measure"])
    N = int(spec["N"])
    dis = measures.psi_squared(m, N)
    slc = dis.bind(None)
    if ladder_spec:
        reference = measures.ladder(
            slc,
            float(ladder_spec["M"]),
            int(ladder_spec["l"]),
            respect_first_branch=respect_first_branch,
        )
    else:
        reference = slc
    field = build_field(spec["field"], n_modes=m.n_modes)
    rho0 = build_density(spec["rho0"])
    config = transport.FlowConfig(dt_ode=float(spec.get("dt", 1e-3)), T=float(spec.get("T", 0.5)))
    u = build_test_function(spec.get("test_function", {}), config.T)
    return m, reference, field, rho0, config, u


# ---------------------------------------------------------------------------
# listing


CATALOG_SECTIONS = (
    (
        "measures",
        [
            ("gaussian(n_modes)", "product Gaussian, mode-j precision 2 pi^2 j^2"),
            ("gibbs(alpha,p)", "Gaussian reweighted by exp(-(alpha/p) int |x(xi)|^p dxi)/Z, p > 2"),
        ],
    ),
    (
        "fields",
        [
            ("constant(coeffs)", "fixed coefficient vector on the first k modes"),
            ("zero(k)", "zero drift in k components"),
            ("swirl(s)", "divergence-free bounded rotation (s tanh(x2), -s tanh(x1))"),
            ("nemytskii:neg_arctan", "(-A)^{-1} composed with f(r) = -arctan(r); |f| <= pi/2"),
            ("nemytskii:cubic_sat", "(-A)^{-1} composed with f(r) = -(r/sqrt(1+r^2))^3; |f| <= 1"),
        ],
    ),
    (
        "reactions",
        [
            ("ou", "p = 0: pure Ornstein-Uhlenbeck linear dynamics"),
            ("cubic(c1)", "p(r) = -r^3 + c1 r with c1 <= 0 (decreasing, odd degree 3)"),
            ("quintic(c1)", "p(r) = -r^5 + c1 r with c1 <= 0 (decreasing, odd degree 5)"),
        ],
    ),
    (
        "densities",
        [
            ("bump(centers,radii,height)", "product of C2 bumps h prod (1-((x_i-c_i)/r_i)^2)_+^3"),
        ],
    ),
    (
        "cylinders",
        [
            ("cos_m1", "cos(x1)"),
            ("sin_m12", "sin(x1 + 2 x2)"),
            ("gauss_m123", "exp(-(x1^2+x2^2+x3^2))"),
            ("tanh_m1", "tanh(x1)"),
            ("rational_m12", "1/(1 + x1^2 + x2^2)"),
            ("cos_sin_m13", "cos(x1) sin(x3)"),
        ],
    ),
    (
        "time_factors",
        [
            ("linear_ramp", "g(t) = 1 - t/T"),
            ("quadratic_ramp", "g(t) = (1 - t/T)^2"),
            ("cos_ramp", "g(t) = cos(pi t / 2T)"),
        ],
    ),
    (
        "observables",
        [
            ("mode1_soft(c)", "c tanh(x1/c): smooth bounded mode-1 readout"),
            ("energy_soft(k,c)", "c tanh(|x|_k^2/c): smooth bounded energy readout"),
        ],
    ),
)


def catalog_text():
    lines = []
    for section, entries in CATALOG_SECTIONS:
        lines.append(f"{section}:")
        width = max(len(n) for n, _ in entries)
        for n, desc in entries:
            lines.append(f"  {n:<{width}}  {desc}")
    return "\n".join(lines)
