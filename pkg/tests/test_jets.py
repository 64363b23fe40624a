import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from riccideg import jets as J
from riccideg.jets import (
    Box,
    Jet,
    JetDomainError,
    ScalarField,
    compose_univariate,
    finite_difference_oracle,
    jet_first_second,
    lift,
    monomials,
)

P = np.array([2.0, 3.0, 5.0])


def test_monomial_ordering_is_graded_lex():
    m = monomials(3)
    assert len(m) == 20
    assert m[:4] == ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1))
    assert m[4:10] == ((2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2))
    assert [sum(a) for a in m] == sorted(sum(a) for a in m)


def test_product_of_coordinates():
    x1 = lift("coordinate", axis=0, point=P)
    x2 = lift("coordinate", axis=1, point=P)
    j = lift("mul", (x1, x2))
    assert j.value == 6
    assert j.partial((1, 0, 0)) == 3
    assert j.partial((0, 1, 0)) == 2
    assert j.partial((1, 1, 0)) == 1
    assert j.partial((0, 0, 1)) == 0
    third = [a for a in monomials(3) if sum(a) == 3]
    assert all(j.partial(a) == 0 for a in third)


def test_adding_zero_constant():
    c = lift("add", (Jet.const(4.25), Jet.const(0.0)))
    assert c.value == 4.25
    assert np.all(c.coeffs[1:] == 0)


def test_square_over_x_recovers_x():
    p = np.array([1.7, 0.3, -0.4])
    x1 = Jet.coordinate(0, p)
    q = lift("div", (x1 * x1, x1))
    np.testing.assert_allclose(q.coeffs, x1.coeffs, rtol=0, atol=4 * np.finfo(float).eps)


def test_neg_and_sub():
    x = Jet.coordinate(2, P)
    assert np.array_equal(lift("neg", (x,)).coeffs, -x.coeffs)
    assert np.array_equal(lift("sub", (x, x)).coeffs, np.zeros(20))


def test_exp_series_coefficients():
    x1 = Jet.coordinate(0, np.zeros(3))
    e = J.exp(x1)
    got = [float(e.coeff((n, 0, 0))) for n in range(4)]
    np.testing.assert_allclose(got, [1, 1, 0.5, 1 / 6], rtol=1e-15)
    assert e.partial((3, 0, 0)) == pytest.approx(1.0)


def test_trig_of_zero_constant():
    z = Jet.const(0.0)
    s, c = J.sin(z), J.cos(z)
    assert np.all(s.coeffs == 0)
    assert c.value == 1 and np.all(c.coeffs[1:] == 0)


def test_tanh_against_finite_differences():
    f = ScalarField(lambda x1, x2, x3: J.tanh(x3))
    p = np.array([0.0, 0.0, 1.0])
    g_fd, h_fd = finite_difference_oracle(f, p, 1e-4)
    g_j, h_j = jet_first_second(f, p)
    np.testing.assert_allclose(g_j, g_fd, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(h_j, h_fd, rtol=1e-6, atol=1e-7)
    t = math.tanh(1.0)
    d3 = -2 * (1 - t**2) * (1 - 3 * t**2)
    assert J.tanh(Jet.coordinate(2, p)).partial((0, 0, 3)) == pytest.approx(d3, rel=1e-13)


def test_compose_constant_outer():
    x = Jet.coordinate(1, P)
    c = compose_univariate([7.0, 0.0, 0.0, 0.0], x)
    assert c.value == 7 and np.all(c.coeffs[1:] == 0)


def test_compose_square():
    x3 = Jet.coordinate(2, P)
    t = 5.0
    c = compose_univariate([t * t, 2 * t, 2.0, 0.0], x3)
    np.testing.assert_allclose(c.coeffs, (x3 * x3).coeffs, atol=1e-14)


def test_compose_tanh_matches_elementary():
    x3 = Jet.coordinate(2, P) * 0.1
    inner = x3 * 2.0
    v = float(inner.value)
    t = math.tanh(v)
    s2 = 1 - t * t
    c = compose_univariate([t, s2, -2 * t * s2, s2 * (6 * t * t - 2)], inner)
    np.testing.assert_allclose(c.coeffs, J.tanh(inner).coeffs, rtol=1e-14, atol=1e-15)


def test_fd_oracle_simple_fields():
    sq = ScalarField(lambda x1, x2, x3: x1 * x1)
    g, h = finite_difference_oracle(sq, np.array([1.0, 0.0, 0.0]), 1e-4)
    assert abs(g[0] - 2) <= 1e-7
    assert abs(h[0] - 2) <= 1e-5
    const = ScalarField(lambda x1, x2, x3: x1 * 0.0 + 3.0)
    g, h = finite_difference_oracle(const, np.array([0.2, 0.1, 0.4]), 1e-4)
    assert np.max(np.abs(g)) <= 1e-12 and np.max(np.abs(h)) <= 1e-12


def test_fd_oracle_refuses_stencil_outside_domain():
    box = Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    f = ScalarField(lambda x1, x2, x3: x1, box)
    with pytest.raises(JetDomainError, match="stencil"):
        finite_difference_oracle(f, np.array([0.99, 0.5, 0.5]), 0.05)


def test_domain_errors_name_the_point():
    p = np.array([-1.5, 0.25, 2.0])
    x = Jet.coordinate(0, p)
    with pytest.raises(JetDomainError, match=r"-1\.5"):
        J.log(x)
    with pytest.raises(JetDomainError, match="sqrt"):
        J.sqrt(x)
    with pytest.raises(JetDomainError, match="division"):
        1.0 / (x - x)


def test_real_power_and_integer_power():
    p = np.array([1.3, 0.0, 0.0])
    x = Jet.coordinate(0, p)
    np.testing.assert_allclose((x**3).coeffs, (x * x * x).coeffs, rtol=1e-14)
    half = J.power(x, 0.5)
    np.testing.assert_allclose(half.coeffs, J.sqrt(x).coeffs, rtol=1e-14)
    np.testing.assert_allclose((x**-1.0).coeffs, (1.0 / x).coeffs, rtol=1e-14)


def test_batched_evaluation_matches_pointwise():
    f = ScalarField(lambda x1, x2, x3: J.exp(x1 * x2) * J.sin(x3) + x1 / (2.0 + x3))
    pts = np.array([[0.1, 0.2, 0.3], [0.4, -0.2, 0.5], [-0.3, 0.7, 0.1]]).T
    batch = f(pts)
    for k in range(3):
        single = f(pts[:, k])
        np.testing.assert_array_equal(batch.coeffs[:, k], single.coeffs)


def test_evaluation_is_deterministic():
    f = ScalarField(lambda x1, x2, x3: J.tanh(x1 * x3) * J.log(2.0 + x2 * x2))
    p = np.array([0.3, -0.8, 1.1])
    assert np.array_equal(f(p).coeffs, f(p).coeffs)


def test_sympy_oracle_third_order():
    """All 20 coefficients of a composite against exact symbolic derivatives."""
    a, b, c = sp.symbols("a b c")
    expr = sp.exp(a * b) * sp.cos(c) / (2 + a * a) + sp.sqrt(3 + b * c) * sp.tanh(a - c)
    p = np.array([0.4, -0.7, 0.9])
    x1, x2, x3 = Jet.coordinates(p)
    j = J.exp(x1 * x2) * J.cos(x3) / (x1 * x1 + 2.0) + J.sqrt(x2 * x3 + 3.0) * J.tanh(x1 - x3)
    subs = dict(zip((a, b, c), p))
    for alpha in monomials(3):
        d = expr
        for sym, n in zip((a, b, c), alpha):
            if n:
                d = sp.diff(d, sym, n)
        exact = float(d.subs(subs))
        assert float(j.partial(alpha)) == pytest.approx(exact, rel=1e-12, abs=1e-13), alpha


# --- property: polynomials -------------------------------------------------

coef = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
pt = st.tuples(*[st.floats(-2, 2, allow_nan=False)] * 3)


def _poly_derivative(coeffs, alpha, p):
    """Exact d^alpha of sum c_beta x^beta, written out term by term."""
    total = 0.0
    for c, beta in zip(coeffs, monomials(3)):
        if any(b < a for a, b in zip(alpha, beta)):
            continue
        term = c
        for a, b, x in zip(alpha, beta, p):
            term *= math.factorial(b) / math.factorial(b - a) * x ** (b - a)
        total += term
    return total


@settings(max_examples=200, deadline=None)
@given(st.lists(coef, min_size=20, max_size=20), pt)
def test_polynomial_jets_are_exact(coeffs, p):
    p = np.array(p)
    x = Jet.coordinates(p)
    j = Jet.const(0.0, point=p)
    for c, beta in zip(coeffs, monomials(3)):
        term = Jet.const(c, point=p)
        for axis, n in enumerate(beta):
            for _ in range(n):
                term = term * x[axis]
        j = j + term
    for alpha in monomials(3):
        exact = _poly_derivative(coeffs, alpha, p)
        scale = 1 + sum(abs(c) for c in coeffs) * 8
        assert abs(float(j.partial(alpha)) - exact) <= 1e-12 * scale


# --- property: random composites vs finite differences ----------------------

UNARY = [
    ("exp", lambda j: J.exp(j * 0.5)),
    ("sin", J.sin),
    ("cos", J.cos),
    ("tanh", J.tanh),
    ("log", lambda j: J.log(j * j + 1.0)),
    ("sqrt", lambda j: J.sqrt(j * j + 0.5)),
    ("sinh", lambda j: J.sinh(j * 0.5)),
]


def random_composite(rng, depth=3):
    if depth == 0 or rng.random() < 0.25:
        kind = rng.integers(4)
        if kind == 3:
            return lambda x: Jet.const(np.broadcast_to(0.7, x[0].batch_shape), point=x[0].point) + 0.0 * x[0]
        k = float(rng.uniform(-1.5, 1.5))
        return lambda x, kind=kind, k=k: x[kind] * k
    op = rng.integers(5)
    if op < 2:
        _, fn = UNARY[rng.integers(len(UNARY))]
        inner = random_composite(rng, depth - 1)
        return lambda x: fn(inner(x))
    a = random_composite(rng, depth - 1)
    b = random_composite(rng, depth - 1)
    if op == 2:
        return lambda x: a(x) + b(x)
    if op == 3:
        return lambda x: a(x) * b(x)
    return lambda x: a(x) / (b(x) * b(x) + 1.0)


def composite_fields(n=50, seed=20240611):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        fn = random_composite(rng)
        p = rng.uniform(-1, 1, size=3)
        out.append((ScalarField(lambda x1, x2, x3, fn=fn: fn((x1, x2, x3))), p))
    return out


def fd_agreement(field, p, step=1e-4):
    g_fd, h_fd = finite_difference_oracle(field, p, step)
    g_j, h_j = jet_first_second(field, p)
    jet = np.concatenate([g_j, h_j])
    fd = np.concatenate([g_fd, h_fd])
    return float(np.max(np.abs(jet - fd) / np.maximum(1.0, np.abs(jet))))


def test_random_composites_agree_with_finite_differences():
    worst = max(fd_agreement(f, p) for f, p in composite_fields())
    assert worst <= 1e-6


def test_batched_fd_oracle_matches_single_points():
    field, _ = composite_fields(1, seed=7)[0]
    pts = np.array([[0.1, -0.3, 0.4], [0.5, 0.2, -0.6]]).T
    g_batch, h_batch = finite_difference_oracle(field, pts, 1e-4)
    for k in range(pts.shape[1]):
        g, h = finite_difference_oracle(field, pts[:, k], 1e-4)
        np.testing.assert_array_equal(g, g_batch[:, k])
        np.testing.assert_array_equal(h, h_batch[:, k])
