"""Monotone map families: evaluation, derivatives, inversion, composition."""

import mpmath
import pytest
from mpmath import mpf

from gietlab import (
    Affine,
    Chain,
    CubicPerturbation,
    InverseOf,
    NotADiffeo,
    SinePerturbation,
    compose,
    identity_map,
    map_from_descriptor,
    workprec,
)
from gietlab.maps import PiecewiseLinear

from conftest import BITS


def test_affine_evaluation():
    f = Affine(mpf(2), mpf(3))
    v, d1 = f.eval1(mpf(1))
    assert v == 5 and d1 == 2
    v, d1, d2, d3 = f.eval3(mpf(1))
    assert (v, d1, d2, d3) == (5, 2, 0, 0)


def test_affine_mapping_endpoints():
    f = Affine.mapping(mpf(1), mpf(3), mpf(0), mpf(1))
    assert f.value(mpf(1)) == 0
    assert f.value(mpf(3)) == 1
    assert f.value(mpf(2)) == mpf(1) / 2


def test_affine_inverse_value():
    f = Affine(mpf(2), mpf(3))
    assert f.inverse_value(mpf(5)) == 1


def test_sine_perturbation_fixes_endpoints():
    with workprec(BITS):
        h = SinePerturbation(mpf("0.1"), 1)
        assert h.value(mpf(0)) == 0
        assert abs(h.value(mpf(1)) - 1) < mpf(2) ** -(BITS - 8)


def test_sine_perturbation_closed_form():
    # h(x) = x - (a / 2 pi k) sin(2 pi k x)
    with workprec(BITS):
        a, k = mpf("0.25"), 2
        h = SinePerturbation(a, k)
        x = mpf("0.3")
        expected = x - a / (2 * mpmath.pi * k) * mpmath.sin(2 * mpmath.pi * k * x)
        v, d1 = h.eval1(x)
        assert abs(v - expected) < mpf(2) ** -(BITS - 8)
        assert abs(d1 - (1 - a * mpmath.cos(2 * mpmath.pi * k * x))) < mpf(2) ** -(BITS - 8)


def test_sine_perturbation_rejects_non_diffeo():
    with pytest.raises(NotADiffeo):
        SinePerturbation(mpf("1.5"), 1)


def test_cubic_perturbation_is_monotone():
    with workprec(BITS):
        h = CubicPerturbation(mpf("0.2"), mpf("0.5"))
        xs = [mpf(i) / 64 for i in range(65)]
        vals = [h.value(x) for x in xs]
        assert all(b > a for a, b in zip(vals, vals[1:]))


def test_inverse_round_trip():
    with workprec(BITS):
        h = SinePerturbation(mpf("0.3"), 3)
        hinv = InverseOf(h)
        for xf in ("0.1", "0.37", "0.85"):
            x = mpf(xf)
            assert abs(hinv.value(h.value(x)) - x) < mpf(2) ** -(BITS - 16)
            v, d1 = hinv.eval1(h.value(x))
            _, dh = h.eval1(x)
            assert abs(d1 - 1 / dh) < mpf(2) ** -(BITS - 24)


def test_chain_composition_order():
    # Chain applies maps in list order; compose(after, before) matches
    f = Affine(mpf(2), mpf(0))
    g = Affine(mpf(1), mpf(3))
    c = Chain([f, g])   # x -> g(f(x)) = 2x + 3
    assert c.value(mpf(1)) == 5
    assert compose(g, f).value(mpf(1)) == 5


def test_chain_peephole_cancels_inverse_pairs():
    with workprec(BITS):
        h = SinePerturbation(mpf("0.2"), 1)
        hinv = InverseOf(h)
        c = Chain([h, hinv, Affine(mpf(1), mpf(0))])
        x = mpf("0.4")
        assert abs(c.value(x) - x) < mpf(2) ** -(BITS - 16)


def test_chain_derivative_is_product():
    with workprec(BITS):
        h = SinePerturbation(mpf("0.2"), 1)
        f = Affine(mpf("0.5"), mpf("0.1"))
        c = Chain([f, h])
        x = mpf("0.6")
        v1, dh_at = h.eval1(f.value(x))
        _, d = c.eval1(x)
        assert abs(d - mpf("0.5") * dh_at) < mpf(2) ** -(BITS - 16)


def test_identity_map():
    e = identity_map()
    x = mpf("0.123")
    v, d1 = e.eval1(x)
    assert v == x and d1 == 1


def test_piecewise_linear():
    pl = PiecewiseLinear([mpf(0), mpf("0.5"), mpf(1)],
                         [mpf(0), mpf("0.25"), mpf(1)])
    v, d1 = pl.eval1(mpf("0.75"))
    assert v == mpf("0.625") and d1 == mpf("1.5")


def test_descriptor_round_trip():
    with workprec(BITS):
        h = SinePerturbation(mpf("0.25"), 2)
        c = Chain([Affine(mpf(2), mpf("0.125")), h, InverseOf(h)])
        rebuilt = map_from_descriptor(c.descriptor(), BITS)
        for xf in ("0.05", "0.3", "0.44"):
            x = mpf(xf)
            assert abs(rebuilt.value(x) - c.value(x)) < mpf(2) ** -(BITS - 16)


def test_descriptor_memo_shares_objects():
    with workprec(BITS):
        h = SinePerturbation(mpf("0.1"), 1)
        desc = {"family": "chain",
                "maps": [h.descriptor(), h.descriptor()]}
        rebuilt = map_from_descriptor(desc, BITS)
        assert rebuilt.maps[0] is rebuilt.maps[1]
