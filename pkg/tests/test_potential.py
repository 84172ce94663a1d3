import math
import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from mems_plate.core import ModelParams
from mems_plate.errors import AdmissibilityError, TouchdownError
from mems_plate.potential import (PotentialField, PotentialSolver, TransformedCoefficients, solve_transformed, closed_form_energy, closed_form_g, derive_transformed_pde,
                                  electrostatic_energy, electrostatic_energy_midpoint, gradient_trace,
                                  h2_norm, lipschitz_probe, solve_potential)
from mems_plate.verify import manufactured_errors, manufactured_forcing, manufactured_solution

X, Z, ETA = sp.symbols("x z eta")
U0, U1, U2, EPS = sp.symbols("u0 u1 u2 epsilon")


def _physical_operator(phi_expr):
    """eps^2 psi_xx + psi_zz for psi(x, z) = phi(x, (1+z)/(1+u(x))), u a generic function."""
    uf = sp.Function("u")(X)
    psi = phi_expr.subs(ETA, (1 + Z) / (1 + uf))
    lap = EPS**2 * sp.diff(psi, X, 2) + sp.diff(psi, Z, 2)
    lap = lap.subs(Z, ETA * (1 + uf) - 1)
    d2, d1 = sp.Derivative(uf, (X, 2)), sp.Derivative(uf, X)
    return sp.simplify(lap.subs(d2, U2).subs(d1, U1).subs(uf, U0))


@pytest.fixture(scope="module")
def symbolic_coefficients():
    # a = L[x^2/2], d = L[eta], b = L[x eta] - x d, c = L[eta^2/2] - eta d
    a = _physical_operator(X**2 / 2)
    d = _physical_operator(ETA)
    b = sp.simplify(_physical_operator(X * ETA) - X * d)
    c = sp.simplify(_physical_operator(ETA**2 / 2) - ETA * d)
    return [sp.lambdify((X, ETA, U0, U1, U2, EPS), e, "numpy") for e in (a, b, c, d)]


def test_coefficients_against_symbolic_chain_rule(symbolic_coefficients):
    p = ModelParams(n_x=31, n_eta=15)
    u = -0.3 * (1 - p.grid.x**2) ** 2
    coef = derive_transformed_pde(u, 0.5, p.grid2d)
    X_, E_ = p.grid2d.mesh()
    for i, j in [(3, 2), (8, 7), (16, 10), (25, 14), (30, 1)]:
        args = (X_[i, j], E_[i, j], coef.u[i], coef.ux[i], coef.uxx[i], 0.5)
        got = (coef.a[i, j], coef.b[i, j], coef.c[i, j], coef.d[i, j])
        for f, val in zip(symbolic_coefficients, got):
            assert val == pytest.approx(float(f(*args)), rel=1e-12, abs=1e-14)


def test_plate_derivatives_second_order():
    errs = []
    for n in (31, 63, 127):
        p = ModelParams(n_x=n, n_eta=7)
        x = p.grid.x_full
        coef = derive_transformed_pde(-0.3 * (1 - p.grid.x**2) ** 2, 0.5, p.grid2d)
        errs.append(max(np.max(np.abs(coef.ux - 1.2 * x * (1 - x**2))),
                        np.max(np.abs(coef.uxx - 1.2 * (1 - 3 * x**2))[1:-1])))
    assert all(math.log2(a / b) > 1.8 for a, b in zip(errs, errs[1:]))


def test_flat_plate_coefficients(params):
    coef = derive_transformed_pde(np.zeros(params.grid.n_interior), 0.4, params.grid2d)
    assert np.allclose(coef.a, 0.4**2, rtol=0, atol=1e-16)
    assert not np.any(coef.b) and np.all(coef.c == 1) and not np.any(coef.d)


def test_zero_aspect_ratio_coefficients(params, bump):
    u = -0.4 * bump
    coef = derive_transformed_pde(u, 0.0, params.grid2d)
    assert not (np.any(coef.a) or np.any(coef.b) or np.any(coef.d))
    assert np.allclose(coef.c[1:-1, :], (1 / (1 + u) ** 2)[:, None], rtol=1e-14)


def test_ellipticity(params, bump):
    coef = derive_transformed_pde(-0.9 * bump, 1.0, params.grid2d)
    assert np.all(coef.c > 0)


def test_touchdown_guard(params, bump):
    with pytest.raises(TouchdownError):
        derive_transformed_pde(-0.995 * bump, 0.3, params.grid2d)


@pytest.mark.parametrize("eps", [0.0, 0.1, 0.5, 1.0])
def test_flat_plate_potential(params, eps):
    fld = solve_potential(np.zeros(params.grid.n_interior), params.with_(eps=eps))
    _, E = params.grid2d.mesh()
    assert np.max(np.abs(fld.phi - E)) <= 1e-10
    assert np.max(np.abs(gradient_trace(fld) - 1)) <= 1e-10
    assert electrostatic_energy(fld) == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("amp", [-0.7, -0.3, 0.25])
def test_zero_aspect_ratio_closed_form(params, bump, amp):
    u = amp * bump
    fld = solve_potential(u, params.with_(eps=0.0))
    _, E = params.grid2d.mesh()
    assert np.max(np.abs(fld.phi - E)) <= 1e-10
    assert np.max(np.abs(gradient_trace(fld) - closed_form_g(u))) <= 1e-10


def test_zero_aspect_ratio_energy_quadrature(params, bump):
    u = -0.5 * bump
    fld = solve_potential(u, params.with_(eps=0.0))
    x = params.grid.x_full
    oracle = float(np.trapezoid(1 / (1 + params.grid.pad(u)), x))
    assert electrostatic_energy(fld) == pytest.approx(oracle, rel=1e-12)
    assert closed_form_energy(u, params.grid) == pytest.approx(oracle, rel=1e-12)


def test_constant_gap_fixture(params):
    # u = c everywhere, including the lateral walls, so u_x = u_xx = 0 and phi = eta exactly
    c, eps = -0.35, 0.7
    g2 = params.grid2d
    ones = np.ones(g2.shape)
    coef = TransformedCoefficients(eps**2 * ones, 0 * ones, ones / (1 + c) ** 2, 0 * ones,
                                   np.full(g2.shape[0], c), np.zeros(g2.shape[0]), np.zeros(g2.shape[0]))
    phi = solve_transformed(coef, g2)
    _, E = g2.mesh()
    assert np.max(np.abs(phi - E)) <= 1e-10
    fld = PotentialField(phi, np.full(params.grid.n_interior, c), eps, g2)
    # the clamped closure gives u_x != 0 at the two wall-adjacent nodes, so only the rest are exact
    assert np.allclose(gradient_trace(fld)[1:-1], 1 / (1 + c) ** 2, rtol=1e-10)


def test_manufactured_forcing_matches_sympy():
    u = -sp.Rational(1, 5) * (1 - X**2) ** 2
    eps = sp.Rational(1, 2)
    phim = ETA + sp.sin(sp.pi * X) * ETA * (1 - ETA)
    w, ux, uxx = 1 + u, sp.diff(u, X), sp.diff(u, X, 2)
    a, b = eps**2, -2 * eps**2 * ETA * ux / w
    c = (1 + eps**2 * ETA**2 * ux**2) / w**2
    d = eps**2 * ETA * (2 * ux**2 / w**2 - uxx / w)
    F = a * sp.diff(phim, X, 2) + b * sp.diff(phim, X, ETA) + c * sp.diff(phim, ETA, 2) + d * sp.diff(phim, ETA)
    f = sp.lambdify((X, ETA), F, "numpy")
    xs, es = np.meshgrid(np.linspace(-1, 1, 9), np.linspace(0, 1, 7), indexing="ij")
    assert np.allclose(manufactured_forcing(xs, es), f(xs, es), rtol=1e-13, atol=1e-13)
    assert np.allclose(manufactured_solution(xs, es), sp.lambdify((X, ETA), phim, "numpy")(xs, es))


def test_manufactured_convergence_order():
    errs = manufactured_errors((33, 65, 129))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 1.9


def test_energy_quadratures_agree(params, bump):
    for eps in (0.1, 0.3, 1.0):
        fld = solve_potential(-0.4 * bump, params.with_(eps=eps))
        a, b = electrostatic_energy(fld), electrostatic_energy_midpoint(fld)
        assert a > 0
        assert abs(a - b) <= 1e-3 * abs(a)


def test_max_principle_and_positive_g(params, bump):
    for amp in (-0.6, -0.2, 0.3):
        fld = solve_potential(amp * bump, params)
        assert fld.phi.min() >= -1e-12 and fld.phi.max() <= 1 + 1e-12
        assert np.all(gradient_trace(fld) >= 0)


@settings(max_examples=25, deadline=None)
@given(amp=st.floats(-0.8, 0.5), eps=st.floats(0.0, 1.0))
def test_g_continuous(params, bump, amp, eps):
    solver = PotentialSolver(params.with_(eps=eps))
    u = amp * bump
    w = np.sin(np.pi * params.grid.x) * bump
    base = solver.g(u)
    diffs = [np.max(np.abs(solver.g(u + d * w) - base)) for d in (1e-2, 1e-3, 1e-4)]
    # first-order response: each tenfold cut in delta shrinks the change about tenfold
    assert diffs[1] <= 0.2 * diffs[0] and diffs[2] <= 0.2 * diffs[1]


def test_closed_form_solver_matches_full(params, bump):
    u = -0.5 * bump
    p = params.with_(eps=0.0)
    assert np.allclose(PotentialSolver(p, closed_form=True).g(u), PotentialSolver(p).g(u), atol=1e-12)
    assert PotentialSolver(p, closed_form=True).energy(u) == pytest.approx(PotentialSolver(p).energy(u), rel=1e-12)


def test_h2_norm_of_zero_and_linear(params):
    X_, E_ = params.grid2d.mesh()
    assert h2_norm(np.zeros_like(X_), params.grid2d) == 0.0
    assert h2_norm(E_, params.grid2d) > 0


def test_lipschitz_identical(params, ctx, bump):
    rep = lipschitz_probe(-0.1 * bump, -0.1 * bump, params, ctx)
    assert rep.identical and math.isnan(rep.phi_ratio) and math.isnan(rep.g_ratio)


def test_lipschitz_quotient_stabilises(params, ctx, bump):
    u = -0.1 * bump
    e1 = ctx.eigenfunction(0)
    ratios = [lipschitz_probe(u, u + d * e1, params, ctx).phi_ratio for d in (1e-2, 5e-3, 2.5e-3, 1.25e-3)]
    steps = np.abs(np.diff(ratios))
    assert np.all(np.isfinite(ratios)) and max(ratios) < 10
    assert steps[-1] < steps[0] and steps[-1] < 1e-3 * ratios[-1]


def test_lipschitz_random_pairs_finite(params, ctx, rng):
    from mems_plate.decay import random_admissible_samples

    samples = random_admissible_samples(ctx, params.kappa, 10, rng)
    c0 = max(lipschitz_probe(a, b, params, ctx).phi_ratio for a, b in zip(samples, samples[1:]))
    assert 0 < c0 < np.inf


def test_lipschitz_requires_admissible(params, ctx, bump):
    with pytest.raises(AdmissibilityError):
        lipschitz_probe(-0.97 * bump, 0 * bump, params, ctx)
