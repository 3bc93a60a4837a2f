import pytest

from qprism.errors import SpecError
from qprism.exactpoly import IntPoly
from qprism.grammar import parse_poly, poly_to_string


def test_basic_terms():
    assert parse_poly("1+q+2*q^2") == IntPoly.const(1) + IntPoly.var("q") + 2 * IntPoly.var("q", 2)
    assert parse_poly("0") == IntPoly()
    assert parse_poly("-q") == -IntPoly.var("q")


def test_juxtaposition_and_star_agree():
    assert parse_poly("2q^2") == parse_poly("2*q^2")
    assert parse_poly("q x") == parse_poly("q*x")


def test_parentheses():
    assert parse_poly("(q-1)*x") == (IntPoly.var("q") - 1) * IntPoly.var("x")
    assert parse_poly("(1+q)^2") == (IntPoly.var("q") + 1) ** 2


def test_prime_coordinate_is_x():
    assert parse_poly("x'") == IntPoly.var("x")
    assert parse_poly("(q-1)*x'^3") == (IntPoly.var("q") - 1) * IntPoly.var("x", 3)


def test_free_generators():
    assert parse_poly("w0*w1") == IntPoly.var("w0") * IntPoly.var("w1")
    assert parse_poly("w{2}") == IntPoly.var("w2")


def test_allowed_variables_enforced():
    with pytest.raises(SpecError):
        parse_poly("x", allowed={"q"})


def test_malformed():
    for bad in ["", "q+", "((q)", "q^", "2**q", "y"]:
        with pytest.raises(SpecError):
            parse_poly(bad)


def test_round_trip():
    samples = [
        "1+q+2*q^2",
        "-1+q^3",
        "q*x^2",
        "2+3*x+q^2*x^3",
        "w1+q^2*w1",
        "0",
    ]
    for text in samples:
        poly = parse_poly(text)
        assert parse_poly(poly_to_string(poly)) == poly


def test_render_matches_spec_style():
    assert poly_to_string(parse_poly("1 + q + 2*q^2")) == "1+q+2*q^2"
