"""Combinatorial data: permutation validation, irreducibility, singularities."""

import pytest

from gietlab import (
    NotAPermutation,
    Reducible,
    singularity_structure,
    validate_combinatorics,
)

from conftest import reversal


def test_swap_is_valid():
    comb = validate_combinatorics((1, 2), (2, 1))
    assert comb.d == 2
    assert comb.pi_top == (1, 2)
    assert comb.pi_bottom == (2, 1)


def test_reversals_are_valid():
    for d in range(2, 8):
        top, bottom = reversal(d)
        comb = validate_combinatorics(top, bottom)
        assert comb.d == d


def test_not_a_permutation():
    with pytest.raises(NotAPermutation):
        validate_combinatorics((1, 1), (2, 1))
    with pytest.raises(NotAPermutation):
        validate_combinatorics((1, 2, 3), (3, 2))
    with pytest.raises(NotAPermutation):
        validate_combinatorics((0, 1), (1, 0))


def test_identity_is_reducible():
    with pytest.raises(Reducible):
        validate_combinatorics((1, 2), (1, 2))


def test_proper_invariant_prefix_is_reducible():
    # {1,2} maps to the first two slots on both rows
    with pytest.raises(Reducible):
        validate_combinatorics((1, 2, 3), (2, 1, 3))


def test_singularity_euler_relation():
    # 2g = d - kappa + 1 for one-marked-point suspensions
    for d in range(2, 8):
        comb = validate_combinatorics(*reversal(d))
        s = singularity_structure(comb)
        assert 2 * s.genus == comb.d - s.kappa + 1


def test_golden_combinatorics_is_torus():
    s = singularity_structure(validate_combinatorics((1, 2), (2, 1)))
    assert s.genus == 1
    assert s.kappa == 1
