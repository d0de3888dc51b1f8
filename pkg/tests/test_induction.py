"""Induction chain: elementary steps, accelerations, cocycle, heights, towers."""

import random
from fractions import Fraction

import mpmath
import pytest
from mpmath import mpf

from gietlab import (
    IncidenceMatrix,
    NumericalConnection,
    StandardIET,
    apply,
    chain_for,
    cocycle_product,
    heights,
    keane_probe,
    renormalized_map,
    workprec,
    zorich_step,
)
from gietlab.induction import positive_accel_step, rv_step

from conftest import BITS, SWAP2, golden_ratio, random_iet


# Fibonacci products: accelerated golden matrices have norm 13 each, and the
# norms of their products follow the Fibonacci subsequence F(7), F(11), ...
GOLDEN_STEP_NORM = 13
GOLDEN_PRODUCT_NORMS = [13, 89, 610, 4181, 28657, 196418]
GOLDEN_HEIGHTS_K3 = (377, 233)


def continued_fraction(x, n):
    quotients = []
    for _ in range(n):
        a = int(x)
        quotients.append(a)
        frac = x - a
        if frac == 0:
            break
        x = 1 / frac
    return quotients


def rotation_iet(alpha):
    return StandardIET(SWAP2, [alpha, 1 - alpha], precision=BITS)


def test_incidence_matrix_algebra():
    i2 = IncidenceMatrix.identity(2)
    e = IncidenceMatrix(((1, 1), (0, 1)))
    assert (i2 @ e).entries == e.entries
    assert (e @ e).entries == ((1, 2), (0, 1))
    assert e.norm() == 3
    assert e.min_entry() == 0
    assert not e.is_positive()
    assert e.apply((1, 1)) == (2, 1)
    assert e.transpose_apply((1, 1)) == (1, 2)


def test_rv_step_golden_alternates():
    with workprec(BITS):
        T = rotation_iet(golden_ratio())
        winners = []
        for _ in range(6):
            T, _, w = rv_step(T)
            winners.append(w)
        assert winners == ["bottom", "top"] * 3


def test_rv_step_euclid_subtraction():
    with workprec(BITS):
        T = rotation_iet(mpf("0.7"))
        nt, mat, winner = rv_step(T)
        # longer last interval sits on the bottom row; lengths follow Euclid
        assert winner == "bottom"
        assert abs(nt.lambda_top[0] - mpf("0.4")) < nt.tau
        assert abs(nt.lambda_top[1] - mpf("0.3")) < nt.tau


def test_rv_step_exact_tie_raises():
    with workprec(BITS):
        T = rotation_iet(mpf("0.5"))
        with pytest.raises(NumericalConnection):
            rv_step(T)


def test_zorich_golden_runs_are_one():
    with workprec(BITS):
        T = rotation_iet(golden_ratio())
        for _ in range(8):
            rec = zorich_step(T)
            assert rec.rv_steps_consumed == 1
            T = rec.induced


def test_zorich_sqrt2_runs_are_two():
    with workprec(BITS):
        x = mpf(2).sqrt() - 1   # CF [0; 2, 2, 2, ...]
        T = StandardIET(SWAP2, [1 / (1 + x), x / (1 + x)], precision=BITS)
        for _ in range(6):
            rec = zorich_step(T)
            assert rec.rv_steps_consumed == 2
            T = rec.induced


def test_zorich_first_run_of_07():
    with workprec(BITS):
        T = rotation_iet(mpf("0.7"))
        rec = zorich_step(T)
        assert rec.rv_steps_consumed == 2   # 0.7 -> 0.4 -> 0.1


def test_zorich_runs_match_continued_fraction(rng):
    # run lengths reproduce the partial quotients of max(lam)/min(lam)
    with workprec(BITS):
        for _ in range(5):
            alpha = mpf(str(rng.uniform(0.02, 0.98)))
            T = rotation_iet(alpha)
            lam = T.lambda_top
            cf = continued_fraction(max(lam) / min(lam), 10)
            runs = []
            for _ in range(10):
                rec = zorich_step(T)
                runs.append(rec.rv_steps_consumed)
                T = rec.induced
            assert runs == cf[:len(runs)]


def test_positive_acceleration_golden_norms(golden_T0):
    chain = chain_for(golden_T0)
    chain.ensure(len(GOLDEN_PRODUCT_NORMS))
    for k in range(1, len(GOLDEN_PRODUCT_NORMS) + 1):
        rec = chain.record(k)
        assert rec.matrix.norm() == GOLDEN_STEP_NORM
        assert rec.matrix.is_positive()
        assert rec.matrix.min_entry() >= 1
        q = cocycle_product([chain.record(i) for i in range(1, k + 1)], 0, k)
        assert q.norm() == GOLDEN_PRODUCT_NORMS[k - 1]


def test_positive_accel_step_functional(golden_T0):
    rec = positive_accel_step(golden_T0)
    assert rec.matrix.is_positive()
    assert rec.matrix.min_entry() >= 1


def test_cocycle_relation_exact(rng):
    with workprec(BITS):
        T = random_iet(rng, 4)
        chain = chain_for(T)
        kmax = 6
        chain.ensure(kmax)
        recs = [chain.record(i) for i in range(1, kmax + 1)]
        for m in range(kmax):
            for n in range(m + 1, kmax):
                for p in range(n + 1, kmax + 1):
                    lhs = cocycle_product(recs, m, p)
                    rhs = cocycle_product(recs, n, p) @ cocycle_product(recs, m, n)
                    assert lhs.entries == rhs.entries


def test_lengths_relation(rng):
    # lambda_m = A(m,n)^T lambda_n within tolerance
    with workprec(BITS):
        T = random_iet(rng, 3)
        chain = chain_for(T)
        chain.ensure(5)
        recs = [chain.record(i) for i in range(1, 6)]
        for m in range(0, 4):
            for n in range(m + 1, 5):
                a = cocycle_product(recs, m, n)
                # lengths of the level-m top intervals
                tops_m = [r - l for l, r in chain.top_intervals(m)]
                tops_n = [r - l for l, r in chain.top_intervals(n)]
                back = a.transpose_apply(tops_n)
                for u, v in zip(tops_m, back):
                    assert abs(u - v) < mpf(2) ** -(BITS // 2 - 4)


def test_heights_golden_fibonacci(golden_T0):
    chain = chain_for(golden_T0)
    chain.ensure(3)
    assert tuple(chain.heights(3)) == GOLDEN_HEIGHTS_K3


def test_heights_match_first_return_times(rng):
    with workprec(BITS):
        T = random_iet(rng, 3)
        chain = chain_for(T)
        # deepest level whose brute-force check stays cheap
        k = 1
        chain.ensure(2)
        if max(chain.heights(2)) <= 3000:
            k = 2
        hs = chain.heights(k)
        tops = chain.top_intervals(k)
        base_right = max(r for _, r in tops)
        for j, (l, r) in enumerate(tops):
            x = (l + r) / 2
            y = x
            steps = 0
            while True:
                y = T.orbit_step(y)
                steps += 1
                if y < base_right:
                    break
                assert steps <= hs[j]
            assert steps == hs[j]


def test_heights_helper_vs_chain(golden_T0):
    chain = chain_for(golden_T0)
    chain.ensure(4)
    recs = [chain.record(i) for i in range(1, 5)]
    assert tuple(heights(recs, 4)) == tuple(chain.heights(4))


def test_renormalized_map_basics(golden_T0, conj_T):
    with workprec(BITS):
        assert renormalized_map(golden_T0, 0) is golden_T0
        rk = renormalized_map(golden_T0, 3)
        assert rk.is_standard()
        assert abs(rk.total_length - 1) < 10 * rk.tau
        rc = renormalized_map(conj_T, 2)
        assert rc.d == conj_T.d
        assert not rc.is_standard()


def test_keane_probe(golden_T0):
    with workprec(BITS):
        report = keane_probe(golden_T0, 40)
        assert report.survived
        assert report.first_tie_step is None
        T = rotation_iet(mpf(3) / 10)
        report = keane_probe(T, 200)
        assert not report.survived
        assert report.first_tie_step is not None
