import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from abconformal import (DomainError, PhiFunction, ScalarField, UVWTriple, VectorField, ab_metric,
                         check_ab_system, check_conformal_finsler, conformal_field, constant_oneform, covariant_d1_oneform, deform,
                         deformed_fields, draw_samples, euclidean_metric, projective_pair, randers_b2_from_p2,
                         uvw_closed_form, uvw_ode_solve)
from abconformal.deformation import b_squared, check_lemma41, chi, denominator_root, randers_p2_from_b2, xv_b_squared
from abconformal.randers import RandersModel

from helpers import flat_e, homothetic_params, killing_params


def killing_setup(seed, mu, t_max=0.81):
    rng = np.random.default_rng(seed)
    p = killing_params(rng, 3, mu)
    a, b = projective_pair(p.lam, p.mu, p.e, 3)
    V, c = conformal_field("thm2_ii", p, 3)
    S = draw_samples(3, 200, seed, domain=a.domain, metric=a, accept=lambda x, y: b_squared(a, b, x) < t_max)
    return a, b, V, c, S


def admissible_k(rng):
    """(k1, k2, k3) with k2 != k1 k3 and a positive denominator on [0, 0.81]."""
    while True:
        k1, k2, k3 = rng.uniform(-1.0, 1.0, 3)
        if abs(k2 - k1 * k3) > 1e-3 and denominator_root(k1, k2, k3, 0.81) is None:
            return k1, k2, k3


# closed form and ODE -----------------------------------------------------------------------

def test_closed_form_at_zero():
    u, v, w = uvw_closed_form(0.7, -0.2, 0.4, 0.0)
    assert (u, v, w) == (1.0, pytest.approx(1.1, abs=1e-15), 1.0)


def test_closed_form_with_vanishing_chi():
    t = np.linspace(0, 0.8, 9)
    assert np.all(chi(1.3, 0.0, 0.0, t) == 0)
    u, v, w = uvw_closed_form(1.3, 0.0, 0.0, t)
    assert np.all(u == 1) and np.allclose(v, 1.3, atol=1e-15)
    np.testing.assert_allclose(w, np.sqrt(1 + 1.3 * t), rtol=1e-15)


def test_closed_form_square_metric_values():
    u, v, w = uvw_closed_form(2.0, 0.0, -3.0, 0.36)
    # chi = (3/2) ln(1 - t): u = (1-t)^3, v = -u, w = (1-t)^(1/2) (1-t)^(3/2)
    assert u == pytest.approx(0.64**3, abs=1e-12)
    assert u == pytest.approx(0.262144, abs=1e-12)
    assert v == pytest.approx(-0.262144, abs=1e-12)
    assert w == pytest.approx(0.4096, abs=1e-12)
    t = np.linspace(0, 0.8, 17)
    np.testing.assert_allclose(chi(2.0, 0.0, -3.0, t), 1.5 * np.log(1 - t), atol=1e-11)


def test_closed_form_rejects_denominator_root():
    with pytest.raises(DomainError, match="0.5"):
        uvw_closed_form(-2.0, 0.0, 0.0, 0.8)           # 1 - 2t vanishes at t = 0.5
    assert denominator_root(-2.0, 0.0, 0.0, 0.8) == pytest.approx(0.5)
    assert denominator_root(1.0, 1.0, 1.0, 0.8) is None


def test_ode_examples():
    assert uvw_ode_solve(2.0, 0.0, -3.0, (1.0, -1.0, 1.0), 0.0) == (1.0, -1.0, 1.0)
    u, v, w = uvw_ode_solve(2.0, 0.0, -3.0, (1.0, -1.0, 1.0), 0.36)
    assert abs(u - 0.262144) < 1e-8 and abs(v + 0.262144) < 1e-8 and abs(w - 0.4096) < 1e-8


def test_ode_matches_closed_form_on_grid():
    rng = np.random.default_rng(0)
    t = np.linspace(0, 0.8 * 0.81, 101)
    for _ in range(10):
        k1, k2, k3 = admissible_k(rng)
        ref = np.array(uvw_closed_form(k1, k2, k3, t))
        got = np.array(uvw_ode_solve(k1, k2, k3, (1.0, k1 + k3, 1.0), t))
        assert np.max(np.abs(got - ref)) < 1e-8


def test_ode_solution_satisfies_its_equations():
    k1, k2, k3 = 0.5, 0.3, -0.4
    tr = UVWTriple.ode(k1, k2, k3)
    t = np.linspace(0.0, 0.6, 7)
    d = tr.derivatives(t)                       # d[component, order, ...]
    u, v, w = d[:, 0]
    du, dv, dw = d[:, 1]
    q = 1 + (k1 + k3) * t + k2 * t * t
    np.testing.assert_allclose(du, (v - k1 * u) / q, atol=1e-10)
    np.testing.assert_allclose(dv, (u * (k2 * u - k3 * v - 2 * k1 * v) + 2 * v * v) / (u * q), atol=1e-10)
    np.testing.assert_allclose(dw, w * (3 * v - k3 * u - 2 * k1 * u) / (2 * u * q), atol=1e-10)


def test_ode_rejects_nonpositive_initial_u():
    with pytest.raises(DomainError, match="initial u"):
        uvw_ode_solve(0.0, 0.0, 0.0, (0.0, -1.0, 1.0), 0.5)
    # u decays toward 0 without reaching it, and stays positive
    u, _, _ = uvw_ode_solve(2.0, 0.0, -3.0, (0.1, -5.0, 1.0), np.linspace(0, 0.8, 9))
    assert np.all(u > 0)


def test_triple_range_and_validation():
    tr = UVWTriple.navigation(t_max=0.5)
    with pytest.raises(DomainError):
        tr(0.6)
    with pytest.raises(DomainError):
        UVWTriple.custom(lambda t: 0.0 * t, lambda t: t, lambda t: 1.0 + 0.0 * t)(0.1)
    with pytest.raises(DomainError):
        UVWTriple.custom(lambda t: 1.0 + 0.0 * t, lambda t: t, lambda t: 0.0 * t)(0.1)


# deform --------------------------------------------------------------------------------------

def test_navigation_with_zero_form_is_identity():
    a, b = euclidean_metric(3), constant_oneform([0, 0, 0])
    y = np.array([0.3, -1.2, 0.4])
    h2, rho, b2 = deform(a, b, UVWTriple.navigation(), np.zeros(3), y)
    assert h2 == pytest.approx(y @ y, rel=1e-15) and rho == 0 and b2 == 0


def test_randers_projective_doubles_beta_at_three_quarters():
    a, b = euclidean_metric(2), constant_oneform([np.sqrt(0.75), 0.0])
    y = np.array([0.4, 0.9])
    h2, rho, b2 = deform(a, b, UVWTriple.randers_projective(), np.zeros(2), y)
    assert b2 == pytest.approx(0.75, rel=1e-15)
    assert rho == pytest.approx(2 * np.sqrt(0.75) * 0.4, rel=1e-14)
    assert h2 == pytest.approx(y @ y, rel=1e-15)


def test_navigation_at_one_quarter():
    a, b = euclidean_metric(2), constant_oneform([0.5, 0.0])
    y = np.array([0.6, 0.8])
    h2, rho, b2 = deform(a, b, UVWTriple.navigation(), np.zeros(2), y)
    assert b2 == 0.25
    assert h2 == pytest.approx(0.75 * (y @ y) - 0.75 * 0.3**2, rel=1e-15)
    assert rho == pytest.approx(-0.75 * 0.3, rel=1e-15)
    # with beta(y) = 0 the quadratic part is 0.75 alpha^2
    h2, rho, _ = deform(a, b, UVWTriple.navigation(), np.zeros(2), np.array([0.0, 1.0]))
    assert h2 == pytest.approx(0.75) and rho == 0


def test_deform_rejects_indefinite_result():
    tr = UVWTriple.custom(lambda t: 1.0 + 0.0 * t, lambda t: -8.0 + 0.0 * t, lambda t: 1.0 + 0.0 * t)
    with pytest.raises(DomainError):
        deform(euclidean_metric(2), constant_oneform([0.5, 0.0]), tr, np.zeros(2), np.array([1.0, 0.0]))


def test_deformed_fields_match_pointwise_deform():
    a, b, _, _, S = killing_setup(3, 1.0)
    tr = UVWTriple.closed_form(2.0, 0.0, -3.0)
    h, rho = deformed_fields(a, b, tr)
    h2, r, _ = deform(a, b, tr, S.x, S.y)
    np.testing.assert_allclose(h.norm_sq(S.x, S.y), h2, rtol=1e-13)
    np.testing.assert_allclose(rho.contract(S.x, S.y), r, rtol=1e-13, atol=1e-15)


# randers conversion -----------------------------------------------------------------------------

def test_randers_b2_examples():
    assert randers_b2_from_p2(0.0) == 0.0
    assert randers_b2_from_p2(1.0) == 0.5
    assert randers_b2_from_p2(3.0) == 0.75


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 0.9))
def test_randers_b2_p2_round_trip(b2):
    assert abs(randers_b2_from_p2(randers_p2_from_b2(b2)) - b2) < 1e-14


# equivalence of the pair system before and after deformation ----------------------------------

TRIPLES = [UVWTriple.closed_form(2.0, 0.0, -3.0), UVWTriple.ode(0.5, 0.3, -0.4), UVWTriple.navigation(),
           UVWTriple.randers_projective()]


@pytest.mark.parametrize("mu", [-1.0, 0.0, 1.0])
@pytest.mark.parametrize("triple", TRIPLES, ids=lambda t: t.kind)
def test_lemma41_passing_instances(mu, triple):
    a, b, V, c, S = killing_setup(int(5 + mu), mu)
    before, after = check_lemma41(a, b, V, c, triple, S)
    assert before.passed and before.max_residual < 1e-9
    assert after.passed and after.max_residual < 1e-8


def test_lemma41_flat_homothetic():
    rng = np.random.default_rng(7)
    e = flat_e(rng, 3, 0.6)
    V, c = conformal_field("thm2_i", homothetic_params(rng, 3, e), 3)
    S = draw_samples(3, 100, 8)
    for tr in TRIPLES:
        before, after = check_lemma41(euclidean_metric(3), constant_oneform(e), V, c, tr, S)
        assert before.max_residual < 1e-9 and after.max_residual < 1e-8


def test_lemma41_zero_field():
    a, b, _, _, S = killing_setup(9, 1.0)
    V = VectorField(3, lambda x: [0.0 * x[0]] * 3)
    c = ScalarField(3, lambda x: 0.0)
    for tr in TRIPLES:
        before, after = check_lemma41(a, b, V, c, tr, S)
        assert before.max_residual == 0 and after.max_residual == 0


@pytest.mark.parametrize("eps", [1e-2, 1e-4, 1e-6])
def test_lemma41_perturbed_residuals_are_comparable(eps):
    for mu in (-1.0, 1.0):
        a, b, V, c, S = killing_setup(11, mu)
        Vp = VectorField(3, lambda x: [v + eps * x[0] * (i == 1) for i, v in enumerate(V.fn(x))])
        cp = ScalarField(3, lambda x: c.fn(x) + eps)
        for tr in TRIPLES:
            for VV, cc in ((Vp, c), (V, cp)):
                before, after = check_lemma41(a, b, VV, cc, tr, S)
                r = before.max_residual
                assert not before.passed and not after.passed
                assert r / 10 <= after.max_residual <= 10 * r


# invariants ------------------------------------------------------------------------------------

@pytest.mark.parametrize("mu", [-1.0, 0.5, 1.0])
def test_xv_of_b_squared_vanishes_for_conformal_pairs(mu):
    a, b, V, c, S = killing_setup(13, mu)
    assert check_ab_system(a, b, V, c, S).passed
    assert np.max(np.abs(xv_b_squared(a, b, V, S.x))) < 1e-9
    rng = np.random.default_rng(14)
    e = flat_e(rng, 3)
    Vf, _ = conformal_field("thm2_i", homothetic_params(rng, 3, e), 3)
    assert np.max(np.abs(xv_b_squared(euclidean_metric(3), constant_oneform(e), Vf, S.x))) < 1e-12


@pytest.mark.parametrize("lam,mu,e", [(1.0, 1.0, [0, 0, 0]), (0.4, -0.5, [0.1, 0.2, 0.0]), (-0.3, 0.8, [0.0, 0.1, -0.2])])
def test_deformed_rho_of_projective_randers_is_closed_conformal(lam, mu, e):
    m = RandersModel(lam, mu, e, 3)
    S = draw_samples(3, 100, 15, domain=m.domain, metric=m.alpha, accept=lambda x, y: b_squared(m.alpha, m.beta, x) < 0.81)
    _, rho = deformed_fields(m.alpha, m.beta, UVWTriple.randers_projective())
    P = covariant_d1_oneform(rho, m.alpha, S.x)
    factor = 2 * m.tau(S.x) / np.sqrt(1 - b_squared(m.alpha, m.beta, S.x))
    assert np.max(np.abs(P - factor[:, None, None] * m.alpha(S.x))) < 1e-9


def test_deformed_metric_is_conformal_for_riemannian_field():
    # the deformed Finsler metric inherits the conformal property
    a, b, V, c, S = killing_setup(17, 1.0)
    h, rho = deformed_fields(a, b, UVWTriple.closed_form(2.0, 0.0, -3.0))
    F = ab_metric(h, rho, PhiFunction.randers())
    S = draw_samples(3, 100, 18, domain=a.domain, accept=lambda x, y: (b_squared(a, b, x) < 0.81)
                     & (np.abs(rho.contract(x, y)) < 0.9 * np.sqrt(h.norm_sq(x, y))))
    assert check_conformal_finsler(F, V, c, S).max_residual < 1e-8
