"""Generalized interval exchanges: evaluation, inverses, conjugation, metrics."""

import itertools

import mpmath
import pytest
from mpmath import mpf

from gietlab import (
    AtSingularity,
    GIET,
    OnBoundary,
    StandardIET,
    apply,
    boundary,
    c2_distance,
    c2_distance_to_iets,
    conjugate_by_diffeo,
    nonlinearity,
    total_nonlinearity,
    workprec,
)
from gietlab.maps import SinePerturbation

from conftest import BITS, SWAP2, golden_ratio, random_iet


def test_rotation_is_translation_by_lengths():
    with workprec(BITS):
        g = golden_ratio()
        T0 = StandardIET(SWAP2, [g, 1 - g])
        # first interval translates forward by the second length
        x = mpf("0.1")
        assert abs(apply(T0, x) - (x + (1 - g))) < T0.tau
        # second interval translates back by the first length
        y = g + mpf("0.1")
        assert abs(apply(T0, y) - (y - g)) < T0.tau


def test_forward_inverse_round_trip(golden_T0, conj_T, rng):
    with workprec(BITS):
        for T in (golden_T0, conj_T):
            for _ in range(20):
                x = mpf(str(rng.uniform(0.01, 0.99)))
                assert abs(apply(T, apply(T, x), direction="inverse") - x) \
                    < 100 * T.tau


def test_lengths_partition_the_interval(rng):
    with workprec(BITS):
        for d in (3, 4, 5):
            T = random_iet(rng, d)
            assert abs(sum(T.lambda_top) - T.total_length) < T.tau
            assert all(l > 0 for l in T.lambda_top)


def test_apply_at_singularity_raises(golden_T0):
    with workprec(BITS):
        g = golden_ratio()
        with pytest.raises(AtSingularity):
            apply(golden_T0, g)


def test_standard_iet_is_standard(golden_T0, conj_T):
    assert golden_T0.is_standard()
    assert not conj_T.is_standard()
    assert all(r == 1 for r in golden_T0.rho())


def test_boundary_of_rotation_is_zero(golden_T0):
    b = boundary(golden_T0)
    assert all(v == 0 for v in b)


def test_conjugation_pointwise(golden_T0, conj_T):
    # T(h(x)) = h(T0(x)) away from singularities
    with workprec(BITS):
        h = SinePerturbation(mpf("0.1"), 1)
        for xf in ("0.05", "0.2", "0.44", "0.7", "0.93"):
            x = mpf(xf)
            lhs = apply(conj_T, h.value(x))
            rhs = h.value(apply(golden_T0, x))
            assert abs(lhs - rhs) < 100 * conj_T.tau


def test_nonlinearity_vanishes_on_iets(golden_T0):
    assert nonlinearity(golden_T0, mpf("0.1")) == 0
    assert total_nonlinearity(golden_T0) == 0


def test_total_nonlinearity_positive_on_conjugate(conj_T):
    assert total_nonlinearity(conj_T) > 0


def test_c2_distance_to_iets(golden_T0, conj_T):
    assert c2_distance_to_iets(golden_T0) == 0
    assert c2_distance_to_iets(conj_T) > 0
    assert c2_distance(golden_T0, golden_T0) == 0


def test_log_slope_matches_conjugacy_derivative(golden_T0, conj_T):
    # log DT(h(x)) = log Dh(T0 x) - log Dh(x) for conjugated translations
    with workprec(BITS):
        h = SinePerturbation(mpf("0.1"), 1)
        for xf in ("0.1", "0.33", "0.8"):
            x = mpf(xf)
            _, dh_x = h.eval1(x)
            _, dh_tx = h.eval1(apply(golden_T0, x))
            got = conj_T.log_slope_at(h.value(x))
            want = mpmath.log(dh_tx) - mpmath.log(dh_x)
            assert abs(got - want) < mpf(2) ** -(BITS - 24)


def test_orbit_iterator_matches_orbit_step(conj_T):
    with workprec(BITS):
        x = mpf("0.3")
        it = conj_T.orbit_iterator(x)
        y = x
        for _ in range(50):
            y = conj_T.orbit_step(y)
            assert abs(next(it) - y) < 100 * conj_T.tau


def test_orbit_slopes_match_log_slopes(conj_T):
    with workprec(BITS):
        x = mpf("0.3")
        pts1 = conj_T.orbit_slopes(x, strict=False)
        pts2 = conj_T.orbit_log_slopes(x, strict=False)
        for _ in range(50):
            (x1, d1), (x2, ls) = next(pts1), next(pts2)
            assert abs(x1 - x2) < 100 * conj_T.tau
            assert abs(mpmath.log(d1) - ls) < mpf(2) ** -(BITS - 32)


def test_conjugation_structure_detected(conj_T, golden_T0):
    assert conj_T._conjugation_structure() is not None
    assert golden_T0._conjugation_structure() is None


def test_from_coordinates_profile_map():
    # nontrivial log slope: branch expands by e^rho on its interval
    with workprec(BITS):
        lam = [mpf("0.4"), mpf("0.6")]
        rho1 = mpf("0.2")
        # pick the second log slope so the image lengths still tile [0, 1)
        rho2 = mpmath.log((1 - lam[0] * mpmath.exp(rho1)) / lam[1])
        T = GIET.from_coordinates(SWAP2, lam, log_slopes=[rho1, rho2],
                                  precision=BITS)
        assert abs(sum(T.bottom_lengths) - T.total_length) < 10 * T.tau
        r = T.rho()
        assert abs(mpmath.log(r[0]) - mpf("0.2")) < mpf(2) ** -(BITS - 24)
