import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from abconformal import (DomainError, Jet3, NotPositiveDefiniteError, conformal_field,
                         constant_curvature_metric, jet_inverse, projective_pair, spd_inverse)
from abconformal.jets import exp, is_spd, log, sqrt, taylor_eval

from helpers import fd_grad, fd_hess, general_params


def test_polynomial_jet():
    j = taylor_eval(lambda x: x[0] * x[0] + x[1] * x[1], np.array([1.0, 2.0]), order=2)
    assert j.value == 5.0
    np.testing.assert_array_equal(j.grad, [2.0, 4.0])
    np.testing.assert_array_equal(j.hess, 2 * np.eye(2))


def test_sqrt_one_plus_t_derivatives():
    j = taylor_eval(lambda x: sqrt(1.0 + x[0]), np.array([0.0]), order=3)
    assert (j.value, j.grad[0], j.hess[0, 0], j.third[0, 0, 0]) == (1.0, 0.5, -0.25, 0.375)


def test_inverse_square_hessian_matches_finite_differences():
    f = lambda x: 1.0 / (1.0 + x[0] * x[0] + x[1] * x[1])
    j = taylor_eval(f, np.zeros(2), order=2)
    fd = fd_hess(lambda p: f(p), np.zeros(2), h=1e-5)
    assert abs(j.value - 1.0) == 0
    np.testing.assert_array_equal(j.grad, [0.0, 0.0])
    np.testing.assert_allclose(j.hess, fd, atol=1e-8)
    np.testing.assert_allclose(j.hess, -2 * np.eye(2), atol=1e-15)


def test_order_truncation():
    j = taylor_eval(lambda x: exp(x[0] * x[1]), np.array([0.3, 0.2]), order=1)
    assert j.order == 1 and j.hess is None and j.third is None
    j0 = taylor_eval(lambda x: x[0] * 3.0, np.array([0.3, 0.2]), order=0)
    assert j0.grad is None and j0.value == pytest.approx(0.9)


def test_symmetry_is_bitwise():
    rng = np.random.default_rng(4)
    x = rng.uniform(-0.4, 0.4, size=(20, 4))
    f = lambda v: exp(v[0] * v[1] - v[2]) / (1.0 + v[3] * v[3] + v[0] * v[2] * v[1])
    j = taylor_eval(f, x, order=3)
    assert np.array_equal(j.hess, np.swapaxes(j.hess, -1, -2))
    t = j.third
    for perm in [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]:
        assert np.array_equal(t, np.transpose(t, (0,) + tuple(p + 1 for p in perm)))


def test_domain_errors_name_the_subexpression():
    with pytest.raises(DomainError, match="radicand"):
        taylor_eval(lambda x: sqrt(x[0] - 1.0, label="radicand"), np.array([0.5]))
    with pytest.raises(DomainError):
        taylor_eval(lambda x: log(x[0]), np.array([-0.5]))
    with pytest.raises(DomainError):
        taylor_eval(lambda x: 1.0 / x[0], np.array([0.0]))


def test_jets_are_immutable():
    j = Jet3.variables(np.array([1.0, 2.0]))[0]
    with pytest.raises(AttributeError):
        j.value = 3.0


def _catalog_fields():
    rng = np.random.default_rng(0)
    n = 3
    out = []
    for mu in (-1.0, 1.0):
        out.append(("projective metric", constant_curvature_metric(mu, "projective", n)))
        out.append(("conformal metric", constant_curvature_metric(mu, "conformal", n)))
        h, rho = projective_pair(0.4, mu, [0.1, -0.2, 0.05], n)
        out.append(("rho", rho))
        for fam in ("lemma22_cc", "lemma22_cf", "closed_i", "closed_ii"):
            V, c = conformal_field(fam, general_params(rng, n, mu), n)
            out += [(fam + " V", V), (fam + " c", c)]
    return out


@pytest.mark.parametrize("name,field", _catalog_fields(), ids=lambda v: v if isinstance(v, str) else "")
def test_jet_derivatives_match_finite_differences(name, field):
    rng = np.random.default_rng(1)
    d = rng.normal(size=(100, 3))
    x = 0.45 * d / np.linalg.norm(d, axis=1)[:, None] * rng.uniform(size=(100, 1)) ** (1 / 3)
    tj = field.jet(x, order=2)
    for k in range(0, 100, 9):
        g = fd_grad(field, x[k])
        assert np.all(np.abs(tj.d1[k] - g) < 1e-6 * (1 + np.abs(tj.d1[k]))), name
        h = fd_hess(field, x[k])
        assert np.all(np.abs(tj.d2[k] - h) < 1e-4 * (1 + np.abs(tj.d2[k]))), name


finite = st.floats(-0.8, 0.8, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=3, max_size=3), st.integers(0, 2**31))
def test_product_rule(x, seed):
    x = np.array(x)
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=3), rng.normal(size=3)
    f = lambda v: exp(a[0] * v[0] + a[1] * v[1] * v[2]) + a[2]
    g = lambda v: sqrt(2.0 + b[0] * v[0] * v[1] + 0.1 * b[1] * v[2] * v[2]) * b[2]
    whole = taylor_eval(lambda v: f(v) * g(v), x)
    prod = taylor_eval(f, x) * taylor_eval(g, x)
    for blk in ("value", "grad", "hess", "third"):
        w, p = getattr(whole, blk), getattr(prod, blk)
        np.testing.assert_allclose(w, p, rtol=1e-13, atol=1e-13 * (1 + np.max(np.abs(p))))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.2, 3.0), min_size=2, max_size=2))
def test_exp_log_roundtrip(x):
    x = np.array(x)
    j = taylor_eval(lambda v: exp(log(v[0] * v[1] + 1.0)), x)
    ref = taylor_eval(lambda v: v[0] * v[1] + 1.0, x)
    np.testing.assert_allclose(j.third, ref.third, atol=1e-12)
    np.testing.assert_allclose(j.hess, ref.hess, atol=1e-12)


def test_spd_inverse_examples():
    np.testing.assert_array_equal(spd_inverse(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(spd_inverse(np.diag([4.0, 1.0])), np.diag([0.25, 1.0]), rtol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**31))
def test_spd_inverse_multiply_back_and_involution(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    m = a @ a.T + n * np.eye(n)
    inv = spd_inverse(m)
    assert np.max(np.abs(m @ inv - np.eye(n))) < 1e-12
    np.testing.assert_allclose(spd_inverse(inv), m, rtol=1e-11, atol=1e-11 * np.max(np.abs(m)))
    assert np.array_equal(inv, inv.T)


def test_spd_inverse_reports_pivot():
    with pytest.raises(NotPositiveDefiniteError) as err:
        spd_inverse(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert err.value.smallest_pivot == pytest.approx(-3.0)
    assert not is_spd(np.array([[1.0, 0.0], [0.0, -1e-3]]))


def test_jet_inverse_matches_numpy_and_differentiates():
    g = constant_curvature_metric(1.0, "projective", 3)
    x = np.array([[0.1, -0.2, 0.3]])
    xs = Jet3.variables(x, order=2)
    inv = jet_inverse(g.fn(xs))
    val = np.array([[e.value[0] for e in row] for row in inv])
    np.testing.assert_allclose(val, np.linalg.inv(g(x[0])), rtol=1e-13)
    d = fd_grad(lambda p: np.linalg.inv(g(p)), x[0])
    grad = np.array([[e.grad[0] for e in row] for row in inv])
    np.testing.assert_allclose(grad, d, atol=1e-8)
