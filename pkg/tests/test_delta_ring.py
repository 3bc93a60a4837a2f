import random
from math import comb

import pytest

from qprism.base_ring import RingContext, q_int_poly
from qprism.delta_ring import (
    DeltaElement,
    delta_map,
    envelope_presentation,
    is_distinguished,
    nygaard_member,
    phi_delta,
    phi_map,
    qpd_check,
)
from qprism.errors import (
    InvalidArgs,
    OrderOverflow,
    PrecisionExhausted,
    WindowTooSmall,
)
from qprism.exactpoly import IntPoly
from qprism.grammar import parse_poly


def elem(ctx, text, **kw):
    return DeltaElement.parse(ctx, text, **kw)


def test_delta_of_q_and_x_vanish():
    ctx = RingContext(3, 3, 2)
    assert delta_map(elem(ctx, "q")).poly.is_zero()
    assert delta_map(elem(ctx, "x")).poly.is_zero()


def test_delta_of_p():
    # delta(p) = (p - p^p)/p = 1 - p^{p-1}
    for p, expected in ((2, -1), (3, -8)):
        ctx = RingContext(p, 2, 2)
        assert delta_map(elem(ctx, str(p))).poly == IntPoly.const(expected)


def test_phi_is_p_power_plus_p_delta():
    rng = random.Random(3)
    ctx = RingContext(2, 3, 2)
    for _ in range(30):
        f = DeltaElement(ctx, _random_poly(rng, ctx))
        phi, delta = phi_delta(f)
        assert phi.poly == f.poly**ctx.p + IntPoly.const(ctx.p) * delta.poly


def test_phi_ring_homomorphism():
    rng = random.Random(5)
    ctx = RingContext(3, 2, 2)
    for _ in range(20):
        a = DeltaElement(ctx, _random_poly(rng, ctx))
        b = DeltaElement(ctx, _random_poly(rng, ctx))
        assert phi_map(a * b).poly == (phi_map(a).poly * phi_map(b).poly)
        assert phi_map(a + b).poly == (phi_map(a).poly + phi_map(b).poly)


def test_phi_on_q_analogs():
    ctx = RingContext(3, 2, 2)
    for n in range(7):
        f = DeltaElement(ctx, q_int_poly(n, 1))
        assert phi_map(f).poly == q_int_poly(n, ctx.p)


def _random_poly(rng, ctx, with_x=True, with_omega=False):
    total = IntPoly()
    for _ in range(rng.randrange(1, 4)):
        c = rng.randrange(ctx.pn)
        mono = IntPoly.const(c)
        mono = mono * IntPoly.var("q", rng.randrange(ctx.m_prec))
        if with_x and rng.random() < 0.5:
            mono = mono * IntPoly.var("x", rng.randrange(3))
        if with_omega and rng.random() < 0.3:
            mono = mono * IntPoly.var("w0", rng.randrange(2))
        total = total + mono
    return total


def test_product_law():
    rng = random.Random(7)
    for p in (2, 3):
        ctx = RingContext(p, 3, 2)
        for _ in range(25):
            a = DeltaElement(ctx, _random_poly(rng, ctx, with_omega=True))
            b = DeltaElement(ctx, _random_poly(rng, ctx, with_omega=True))
            da, db = delta_map(a).poly, delta_map(b).poly
            lhs = delta_map(a * b).poly
            rhs = a.poly**p * db + b.poly**p * da + IntPoly.const(p) * da * db
            assert lhs == rhs


def test_sum_law():
    rng = random.Random(9)
    for p in (2, 3, 5):
        ctx = RingContext(p, 3, 2)
        for _ in range(15):
            a = DeltaElement(ctx, _random_poly(rng, ctx))
            b = DeltaElement(ctx, _random_poly(rng, ctx))
            lhs = delta_map(a + b).poly
            correction = IntPoly()
            for i in range(1, p):
                correction = correction + IntPoly.const(comb(p, i) // p) * a.poly**i * b.poly ** (p - i)
            rhs = delta_map(a).poly + delta_map(b).poly - correction
            assert lhs == rhs


def test_lift_independence():
    # two lifts differing by p^N h give the same delta at precision N-1
    rng = random.Random(11)
    ctx = RingContext(2, 3, 2)
    for _ in range(20):
        f = DeltaElement(ctx, _random_poly(rng, ctx))
        h = _random_poly(rng, ctx)
        g = DeltaElement(ctx, f.poly + IntPoly.const(ctx.pn) * h)
        diff = delta_map(f).poly - delta_map(g).poly
        mod = ctx.p ** (ctx.n_prec - 1)
        assert all(c % mod == 0 for c in diff.terms.values())


def test_precision_ledger():
    ctx = RingContext(2, 3, 2)
    f = elem(ctx, "x+q")
    d1 = delta_map(f)
    assert d1.precision == 2
    d2 = delta_map(d1)
    assert d2.precision == 1
    with pytest.raises(PrecisionExhausted):
        delta_map(d2)


def test_order_overflow():
    ctx = RingContext(2, 3, 2)
    f = DeltaElement(ctx, IntPoly.var("w0"), omega_cap=1)
    d1 = delta_map(f)
    assert d1.delta_order == 1
    with pytest.raises(OrderOverflow):
        delta_map(d1)


def test_distinguished_p_q():
    for p in (2, 3, 5):
        ctx = RingContext(p, 2, 2)
        assert is_distinguished(DeltaElement(ctx, q_int_poly(p, 1)))


def test_distinguished_p2_exact_value():
    # delta((2)_q) = ((1+q^2) - (1+q)^2)/2 = -q
    ctx = RingContext(2, 2, 2)
    d = delta_map(DeltaElement(ctx, q_int_poly(2, 1)))
    assert d.poly == -IntPoly.var("q")


def test_q_minus_one_not_distinguished():
    for p in (2, 3):
        ctx = RingContext(p, 2, 2)
        assert not is_distinguished(elem(ctx, "q-1"))
        # oracle: delta(q-1) vanishes at q=1
        d = delta_map(elem(ctx, "q-1"))
        assert d.poly.eval_int({"q": 1}) == 0


def test_p_is_distinguished():
    ctx = RingContext(2, 2, 2)
    assert is_distinguished(elem(ctx, "2"))


def test_qpd_zero_element():
    ctx = RingContext(2, 2, 2)
    assert qpd_check(elem(ctx, "0"), [elem(ctx, "q-1")])


def test_qpd_q_minus_one_in_its_own_ideal():
    # phi(q-1) = (p)_q (q-1) and delta(q-1) is divisible by q-1
    for p in (2, 3):
        ctx = RingContext(p, 3, 3)
        assert qpd_check(elem(ctx, "q-1"), [elem(ctx, "q-1")])


def test_qpd_unit_not_in_zero_ideal():
    ctx = RingContext(2, 2, 2)
    assert not qpd_check(elem(ctx, "1"), [elem(ctx, "0")])


def test_qpd_window_semantics():
    # p = 3, f = (q-1)x: phi(f) - (3)_q delta(f) = -(3)_q (q-1)^2 x^3, which
    # needs the x^2 multiplier of the generator x, so the verdict flips from
    # undecided to member exactly when the window reaches 2
    ctx = RingContext(3, 2, 3)
    f = elem(ctx, "(q-1)*x")
    J = [elem(ctx, "x")]
    with pytest.raises(WindowTooSmall):
        qpd_check(f, J, window=1)
    assert qpd_check(f, J, window=2)


def test_qpd_window_too_small_reported():
    # x-free probe against an x-carrying ideal: undecided at any window
    # (m_prec = 3 keeps the probe nonzero after truncation)
    ctx = RingContext(3, 2, 3)
    with pytest.raises(WindowTooSmall):
        qpd_check(elem(ctx, "q-1"), [elem(ctx, "x")], window=3)


def test_nygaard_unit_ideal_variant():
    ctx = RingContext(2, 3, 3)
    # phi(q-1) = (q^2-1) = (2)_q (q-1) lies in ((2)_q)
    assert nygaard_member(elem(ctx, "q-1"))
    assert not nygaard_member(elem(ctx, "1"))


def test_envelope_prispol_relation_p2():
    # delta(x + (2)_q w0) = (1+q^2) w1 - q w0^2 - (1+q) x w0, by the
    # symbolic rule delta(a+b) = delta(a) + delta(b) - ab at p = 2
    ctx = RingContext(2, 3, 2)
    g = DeltaElement(ctx, -IntPoly.var("x"))
    d = DeltaElement(ctx, q_int_poly(2, 1))
    pres = envelope_presentation(g, d, 0)
    expected = parse_poly("(1+q^2)*w1 - q*w0^2 - (1+q)*x*w0")
    assert pres.relations[0].poly == expected
    # independent oracle: delta(d*w0) via the product rule with delta(d) = -q
    dd = delta_map(d).poly
    oracle = (
        d.poly**2 * IntPoly.var("w1")
        + IntPoly.var("w0", 2) * dd
        + IntPoly.const(2) * dd * IntPoly.var("w1")
        - IntPoly.var("x") * d.poly * IntPoly.var("w0")
    )
    assert pres.relations[0].poly == oracle


def test_envelope_degenerate_relation():
    ctx = RingContext(2, 3, 2)
    g = DeltaElement(ctx, IntPoly())
    d = DeltaElement(ctx, q_int_poly(2, 1))
    pres = envelope_presentation(g, d, 0)
    assert pres.relations[0].poly == d.poly * IntPoly.var("w0")


def test_envelope_iterates_are_deltas():
    ctx = RingContext(2, 4, 2)
    g = DeltaElement(ctx, IntPoly.var("q"))
    d = DeltaElement(ctx, q_int_poly(2, 1))
    pres = envelope_presentation(g, d, 2)
    assert len(pres.relations) == 3
    assert pres.relations[1].poly == delta_map(pres.relations[0]).poly
    assert pres.relations[2].poly == delta_map(pres.relations[1]).poly


def test_envelope_unit_multiple_reduces():
    # g = d*h with h a unit: the relation ideal contains w0 - h up to units,
    # checked at K=1 by substituting w0 = h and x = 0 into every relation
    ctx = RingContext(2, 4, 2)
    h = IntPoly.const(3)
    d = DeltaElement(ctx, q_int_poly(2, 1))
    g = DeltaElement(ctx, d.poly * h)
    pres = envelope_presentation(g, d, 1)
    for rel in pres.relations:
        subbed = rel.poly.substitute({"w0": h, "w1": delta_map(DeltaElement(ctx, h)).poly})
        assert subbed.is_zero()


def test_envelope_requires_precision():
    ctx = RingContext(2, 2, 2)
    g = DeltaElement(ctx, -IntPoly.var("x"))
    d = DeltaElement(ctx, q_int_poly(2, 1))
    with pytest.raises(PrecisionExhausted):
        envelope_presentation(g, d, 3)


def test_reduce_to_w_rejects_x():
    ctx = RingContext(2, 2, 2)
    with pytest.raises(InvalidArgs):
        elem(ctx, "x").reduce_to_w()
