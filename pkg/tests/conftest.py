"""Shared fixtures: golden rotation, its smooth conjugate, random IET factory."""

import random

import mpmath
import pytest
from mpmath import mpf

from gietlab import StandardIET, conjugate_by_diffeo, workprec
from gietlab.maps import SinePerturbation

BITS = 256

mpmath.mp.prec = BITS + 10

SWAP2 = ((1, 2), (2, 1))


def golden_ratio():
    with workprec(BITS + 10):
        return (mpf(5).sqrt() - 1) / 2


@pytest.fixture(scope="session")
def golden_T0():
    with workprec(BITS + 10):
        g = golden_ratio()
        return StandardIET(SWAP2, [g, 1 - g], precision=BITS)


@pytest.fixture(scope="session")
def conj_T(golden_T0):
    """h o T0 o h^{-1} with h = sine perturbation of amplitude 0.1."""
    with workprec(BITS + 10):
        h = SinePerturbation(mpf("0.1"), 1)
        return conjugate_by_diffeo(golden_T0, h)


def reversal(d):
    return (tuple(range(1, d + 1)), tuple(range(d, 0, -1)))


def random_lengths(rng, d):
    # full-precision random lengths: low-entropy (decimal) lengths behave like
    # rationals and hit exact connections after a few hundred Euclid steps
    with workprec(BITS + 10):
        parts = [mpf(rng.getrandbits(200) + 1) / mpf(2) ** 200 + mpf("0.1")
                 for _ in range(d)]
        total = sum(parts)
        lams = [p / total for p in parts[:-1]]
        lams.append(1 - sum(lams))
        return lams


def random_iet(rng, d, precision=BITS):
    return StandardIET(reversal(d), random_lengths(rng, d), precision=precision)


@pytest.fixture
def rng():
    return random.Random(0)
