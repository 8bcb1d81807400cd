import numpy as np
import pytest
import sympy as sp

from measureflow import Polynomial


def to_sympy(p, xs):
    expr = 0
    for c, e in p.terms:
        term = sp.Float(c, 30)
        for x, k in zip(xs, e):
            term *= x**k
        expr += term
    return expr


def random_poly(rng, arity, max_degree=3, n_terms=4):
    terms = []
    for _ in range(n_terms):
        e = tuple(int(rng.integers(0, max_degree + 1)) for _ in range(arity))
        terms.append((float(rng.standard_normal()), e))
    return Polynomial(arity, terms)


def test_normalization_merges_and_drops_zeros():
    p = Polynomial(1, [(1.0, (2,)), (2.0, (2,)), (0.0, (1,)), (3.0, (0,)), (-3.0, (0,))])
    assert p.terms == ((3.0, (2,)),)


def test_evaluation_scalar_and_batch():
    p = Polynomial(2, [(2.0, (1, 1)), (1.0, (0, 2))])
    assert p([3.0, 4.0]) == pytest.approx(2 * 12 + 16)
    batch = p(np.array([[1.0, 1.0], [0.0, 2.0]]))
    assert batch == pytest.approx([3.0, 4.0])


def test_arity_checked():
    p = Polynomial.coordinate(2)
    with pytest.raises(ValueError):
        p([1.0])


def test_algebra_matches_sympy():
    rng = np.random.Generator(np.random.Philox(5))
    xs = sp.symbols("x1 x2")
    for _ in range(10):
        p = random_poly(rng, 2)
        q = random_poly(rng, 2)
        pt = rng.standard_normal(2)
        subs = dict(zip(xs, pt))
        for ours, ref in [
            (p + q, to_sympy(p, xs) + to_sympy(q, xs)),
            (p - q, to_sympy(p, xs) - to_sympy(q, xs)),
            (p * q, to_sympy(p, xs) * to_sympy(q, xs)),
            (2.5 * p, 2.5 * to_sympy(p, xs)),
        ]:
            assert ours(pt) == pytest.approx(float(ref.subs(subs)), rel=1e-10, abs=1e-10)


def test_partial_derivatives_match_sympy():
    rng = np.random.Generator(np.random.Philox(9))
    xs = sp.symbols("x1 x2 x3")
    for _ in range(8):
        p = random_poly(rng, 3)
        pt = rng.standard_normal(3)
        subs = dict(zip(xs, pt))
        for j in range(3):
            ref = sp.diff(to_sympy(p, xs), xs[j])
            assert p.partial(j)(pt) == pytest.approx(
                float(ref.subs(subs)), rel=1e-10, abs=1e-10
            )


def test_differentiation_is_closed():
    p = Polynomial(2, [(1.0, (3, 2))])
    d = p.partial(0)
    assert isinstance(d, Polynomial)
    assert d.terms == ((3.0, (2, 2)),)
    assert p.partial(1).partial(1).terms == ((2.0, (3, 0)),)


def test_constant_derivative_is_zero():
    c = Polynomial.constant(2, 4.0)
    assert c.partial(0).is_zero()


def test_json_roundtrip():
    p = Polynomial(2, [(1.5, (1, 0)), (-2.0, (0, 3))])
    q = Polynomial.from_jsonable(2, p.to_jsonable())
    assert p == q
