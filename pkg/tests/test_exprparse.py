import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chordflow import exprparse as ep
from chordflow.errors import ArityError, DomainError, ExprSyntaxError, UnknownIdentifier

from oracles import fd_derivatives, random_expression


def test_call_node():
    assert ep.parse("cos(u1)") == ep.Call("cos", ep.Var(1))


def test_precedence():
    tree = ep.parse("u1^2 + 4*u2^2 - 1")
    assert ep.to_source(tree) == "(((u1 ^ 2.0) + (4.0 * (u2 ^ 2.0))) - 1.0)"


def test_power_is_right_associative_and_beats_unary_minus():
    assert ep.to_source(ep.parse("2^3^2")) == "(2.0 ^ (3.0 ^ 2.0))"
    assert ep.evaluate(ep.parse("-2^2"), []) == -4.0


@pytest.mark.parametrize("src, message", [
    ("2 +", "SyntaxError at offset 3: expected expression, found end of input"),
    ("2u1", "SyntaxError at offset 1: expected operator or end of input, found 'u1'"),
    ("sin(1,2)", "ArityError at offset 5: sin takes exactly 1 argument"),
])
def test_golden_error_messages(src, message):
    with pytest.raises((ExprSyntaxError, ArityError)) as info:
        ep.parse(src)
    assert str(info.value) == message


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier):
        ep.parse("foo(u1)")
    with pytest.raises(UnknownIdentifier):
        ep.parse("u3", nvars=2)


def test_variable_exponent_rejected():
    with pytest.raises(ExprSyntaxError):
        ep.parse("2^u1")


@pytest.mark.parametrize("src, u", [
    ("log(u1)", [0.0]), ("sqrt(u1)", [-1.0]), ("1/u1", [0.0]),
    ("u1^0.5", [-2.0]), ("u1^-1", [0.0]),
])
def test_domain_errors(src, u):
    with pytest.raises(DomainError) as info:
        ep.eval_jet(ep.parse(src), u, 1, 1)
    assert info.value.offset is not None


def test_pythagorean_identity():
    hd = ep.eval_jet(ep.parse("sin(u1)^2 + cos(u1)^2"), [0.7], 1, 1)
    assert hd.v == pytest.approx(1.0, abs=1e-12)
    assert max(abs(hd.d1), abs(hd.d2), abs(hd.d12)) < 1e-12


def test_power_rule():
    assert ep.eval_jet(ep.parse("u1^3"), [2.0], 1, 1).astuple() == (8.0, 12.0, 12.0, 12.0)


def test_product_rule():
    assert ep.eval_jet(ep.parse("u1*u2"), [3.0, 5.0], 1, 2).astuple() == (15.0, 5.0, 3.0, 1.0)


def test_vectorized_jet_matches_scalar():
    tree = ep.parse("exp(u1) * sin(u2) + u1^2")
    xs = np.linspace(-1, 1, 5)
    vec = ep.eval_jet(tree, [xs, 0.3 * xs], 1, 2)
    for k, x in enumerate(xs):
        s = ep.eval_jet(tree, [x, 0.3 * x], 1, 2)
        assert np.allclose([vec.v[k], vec.d1[k], vec.d2[k], vec.d12[k]], s.astuple(), rtol=1e-15)


def test_random_expressions_match_high_precision_differences():
    rng = random.Random(7)
    for _ in range(40):
        src = random_expression(rng, 2)
        u = [rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)]
        i, j = rng.choice([(1, 1), (1, 2), (2, 2)])
        hd = ep.eval_jet(ep.parse(src), u, i, j)
        val, d1, d12 = fd_derivatives(src, u, i, j)
        for got, want in ((hd.v, val), (hd.d1, d1), (hd.d12, d12)):
            assert abs(got - want) <= 1e-6 * max(1.0, abs(want)), src


_exprs = st.builds(lambda seed: random_expression(random.Random(seed), 3),
                   st.integers(0, 10**6))


@given(_exprs)
@settings(max_examples=80, deadline=None)
def test_print_parse_roundtrip(src):
    tree = ep.parse(src)
    again = ep.parse(ep.to_source(tree))
    assert again == tree
    assert ep.to_source(again) == ep.to_source(tree)


@given(_exprs, st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
@settings(max_examples=60, deadline=None)
def test_mixed_partials_symmetric(src, a, b, c):
    tree = ep.parse(src)
    h12 = ep.eval_jet(tree, [a, b, c], 1, 2)
    h21 = ep.eval_jet(tree, [a, b, c], 2, 1)
    assert h12.v == h21.v
    assert h12.d12 == pytest.approx(h21.d12, rel=1e-12, abs=1e-12)
    assert h12.d1 == h21.d2


def test_constants():
    assert ep.evaluate(ep.parse("pi + e"), []) == pytest.approx(math.pi + math.e)
