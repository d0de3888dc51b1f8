"""Interval-exchange renormalization: elementary induction steps, Zorich and
positive accelerations, the integer incidence cocycle, and renormalized maps.

The elementary step is implemented geometrically so it is valid verbatim for
generalized maps: compare the last top-interval length against the last
bottom-interval length, cut at the image (or preimage) of the new right end,
and concatenate first-return words over the base branches. Heights are word
lengths; incidence matrices accumulate the elementary factors I + E_{i,j}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import mpmath
from mpmath import mpf

from .combinatorics import CombinatorialDatum, validate_combinatorics
from .errors import (
    NumericalConnection,
    PositivityTimeout,
    RangeError,
    RunLimitExceeded,
    DepthBudget,
)
from .giet import GIET, StandardIET
from .maps import Affine, Chain, ScaledConjugation
from .precision import workprec

__all__ = [
    "IncidenceMatrix",
    "InductionRecord",
    "InductionChain",
    "rv_step",
    "zorich_step",
    "positive_accel_step",
    "cocycle_product",
    "heights",
    "renormalized_map",
    "keane_probe",
    "chain_for",
]


@dataclass(frozen=True)
class IncidenceMatrix:
    """d x d nonnegative integer matrix with arbitrary-precision entries."""

    entries: tuple  # tuple of row tuples of python ints

    @property
    def d(self):
        return len(self.entries)

    @staticmethod
    def identity(d):
        return IncidenceMatrix(
            tuple(tuple(1 if i == j else 0 for j in range(d)) for i in range(d))
        )

    @staticmethod
    def elementary(d, row, col):
        """I + E_{row,col} (0-based)."""
        return IncidenceMatrix(
            tuple(
                tuple((1 if i == j else 0) + (1 if (i, j) == (row, col) else 0)
                      for j in range(d))
                for i in range(d)
            )
        )

    def __matmul__(self, other):
        a, b = self.entries, other.entries
        d = len(a)
        return IncidenceMatrix(
            tuple(
                tuple(sum(a[i][k] * b[k][j] for k in range(d)) for j in range(d))
                for i in range(d)
            )
        )

    def apply(self, vec):
        return tuple(sum(r[j] * vec[j] for j in range(self.d)) for r in self.entries)

    def transpose_apply(self, vec):
        d = self.d
        return tuple(
            sum(self.entries[i][j] * vec[i] for i in range(d)) for j in range(d)
        )

    def norm(self):
        """Entrywise absolute sum."""
        return sum(abs(v) for row in self.entries for v in row)

    def column_sums(self):
        d = self.d
        return tuple(sum(self.entries[i][j] for i in range(d)) for j in range(d))

    def is_positive(self):
        return all(v > 0 for row in self.entries for v in row)

    def min_entry(self):
        return min(v for row in self.entries for v in row)


class Word:
    """Persistent word over integer letters with O(1) concatenation.

    Return words grow exponentially along the induction (Fibonacci-fast for the
    golden rotation), so they are kept as shared binary concatenation trees and
    only iterated where a budget cap bounds their length (e.g. tower floors).
    """

    __slots__ = ("letter", "left", "right", "length")

    def __init__(self, letter=None, left=None, right=None):
        if letter is not None:
            self.letter = letter
            self.left = self.right = None
            self.length = 1
        else:
            self.letter = None
            self.left = left
            self.right = right
            self.length = left.length + right.length

    def concat(self, other):
        return Word(left=self, right=other)

    def __len__(self):
        return self.length

    def __iter__(self):
        stack = [self]
        while stack:
            node = stack.pop()
            if node.letter is not None:
                yield node.letter
            else:
                stack.append(node.right)
                stack.append(node.left)

    def __eq__(self, other):
        if isinstance(other, Word):
            return self.length == other.length and all(
                a == b for a, b in zip(self, other)
            )
        if isinstance(other, (tuple, list)):
            return self.length == len(other) and all(
                a == b for a, b in zip(self, other)
            )
        return NotImplemented

    def __repr__(self):
        if self.length <= 32:
            return f"Word({tuple(self)})"
        return f"<Word length={self.length}>"


@dataclass
class InductionRecord:
    """One acceleration step of the renormalization chain.

    `induced` is the renormalized map R^k T on [0,1]; the unrenormalized induced
    map is its affine conjugate by x -> inducing_interval_length * x.
    """

    step_index: int
    matrix: IncidenceMatrix
    rv_steps_consumed: int
    induced: GIET
    inducing_interval_length: object  # mpf
    winners: str = ""
    positivity_block_split: int | None = None
    heights_by_label: tuple = ()
    top_order: tuple = ()
    bottom_order: tuple = ()
    top_lengths: tuple = ()      # by label, absolute
    bottom_lengths: tuple = ()   # by label, absolute
    base_words: tuple = ()       # by label, word over base-branch labels
    level_words: tuple = ()      # by label, word over previous-level labels
    branch_maps: tuple = ()      # by label, composed induced branch (absolute)


class _Engine:
    """Mutable induction state over a fixed base map."""

    def __init__(self, T):
        self.T = T
        self.tau = T.tau
        self.d = T.d
        self.top_order = list(T.comb.pi_top)
        self.bot_order = list(T.comb.pi_bottom)
        self.top_len = list(T.lambda_top)
        self.bot_len = list(T.bottom_lengths)
        self.base_words = [Word(j) for j in range(1, self.d + 1)]
        self.level_words = [Word(j) for j in range(1, self.d + 1)]
        # composed induced branches; Chain's affine peephole keeps these O(1)
        # for standard maps, so cut evaluation never walks the full word
        self.branch_maps = list(T.branches)
        self.L = T.total_length
        self.elementary_count = 0

    def reset_level_words(self):
        self.level_words = [Word(j) for j in range(1, self.d + 1)]

    def top_left_endpoint(self, label):
        acc = mpf(0)
        for l in self.top_order:
            if l == label:
                return acc
            acc += self.top_len[l - 1]
        raise KeyError(label)

    def bottom_left_endpoint(self, label):
        acc = mpf(0)
        for l in self.bot_order:
            if l == label:
                return acc
            acc += self.bot_len[l - 1]
        raise KeyError(label)

    def elementary_step(self):
        """One elementary induction step; returns (matrix, winner)."""
        alpha = self.top_order[-1]
        beta = self.bot_order[-1]
        lt = self.top_len[alpha - 1]
        lb = self.bot_len[beta - 1]
        if abs(lt - lb) <= self.tau:
            raise NumericalConnection(self.elementary_count)
        if lt > lb:
            winner = "top"
            new_L = self.L - lb
            cut = self.branch_maps[alpha - 1].value(new_L)
            bl = self.bottom_left_endpoint(alpha)
            br = bl + self.bot_len[alpha - 1]
            self.base_words[beta - 1] = (
                self.base_words[beta - 1].concat(self.base_words[alpha - 1])
            )
            self.level_words[beta - 1] = (
                self.level_words[beta - 1].concat(self.level_words[alpha - 1])
            )
            self.branch_maps[beta - 1] = Chain(
                [self.branch_maps[beta - 1], self.branch_maps[alpha - 1]]
            )
            mat = IncidenceMatrix.elementary(self.d, beta - 1, alpha - 1)
            self.top_len[alpha - 1] = lt - lb
            self.bot_len[alpha - 1] = cut - bl
            self.bot_len[beta - 1] = br - cut
            self.bot_order.pop()
            self.bot_order.insert(self.bot_order.index(alpha) + 1, beta)
        else:
            winner = "bottom"
            new_L = self.L - lt
            cut = self.branch_maps[beta - 1].inverse_value(new_L)
            tl = self.top_left_endpoint(beta)
            tr = tl + self.top_len[beta - 1]
            self.base_words[alpha - 1] = (
                self.base_words[beta - 1].concat(self.base_words[alpha - 1])
            )
            self.level_words[alpha - 1] = (
                self.level_words[beta - 1].concat(self.level_words[alpha - 1])
            )
            self.branch_maps[alpha - 1] = Chain(
                [self.branch_maps[beta - 1], self.branch_maps[alpha - 1]]
            )
            mat = IncidenceMatrix.elementary(self.d, alpha - 1, beta - 1)
            self.top_len[beta - 1] = cut - tl
            self.top_len[alpha - 1] = tr - cut
            self.top_order.pop()
            self.top_order.insert(self.top_order.index(beta) + 1, alpha)
            self.bot_len[beta - 1] = lb - lt
        self.L = new_L
        self.elementary_count += 1
        return mat, winner

    def current_winner_preview(self):
        alpha = self.top_order[-1]
        beta = self.bot_order[-1]
        lt = self.top_len[alpha - 1]
        lb = self.bot_len[beta - 1]
        if abs(lt - lb) <= self.tau:
            raise NumericalConnection(self.elementary_count)
        return "top" if lt > lb else "bottom"

    def zorich_run(self, cap):
        """Maximal run of constant-winner elementary steps."""
        mat = IncidenceMatrix.identity(self.d)
        winner = self.current_winner_preview()
        run = 0
        while True:
            e, w = self.elementary_step()
            mat = e @ mat
            run += 1
            if run > cap:
                raise RunLimitExceeded(
                    f"constant-winner run exceeded {cap} elementary steps"
                )
            try:
                nxt = self.current_winner_preview()
            except NumericalConnection:
                # report the completed run; the tie will surface on the next call
                break
            if nxt != winner:
                break
        return mat, winner, run

    def comb(self):
        return CombinatorialDatum(self.d, tuple(self.top_order), tuple(self.bot_order))

    def snapshot(self):
        return dict(
            heights=tuple(w.length for w in self.base_words),
            top_order=tuple(self.top_order),
            bottom_order=tuple(self.bot_order),
            top_lengths=tuple(self.top_len),
            bottom_lengths=tuple(self.bot_len),
            base_words=tuple(self.base_words),
            level_words=tuple(self.level_words),
            branch_maps=tuple(self.branch_maps),
        )


def _renormalized_from_engine(engine, prev_branches, prev_length):
    """Materialize R^k T from the engine state.

    prev_branches are the previous level's renormalized branches ([0,1]-scale),
    prev_length the previous inducing-interval length, so each new branch is one
    word over prev_branches conjugated by the moderate scaling lam_k/lam_{k-1}.
    """
    T = engine.T
    comb = engine.comb()
    d = engine.d
    lam_abs = engine.top_len
    bot_abs = engine.bot_len
    L = engine.L
    ratio = L / prev_length
    if T.is_standard():
        lam_unit = [lam_abs[j] / L for j in range(d)]
        giet = StandardIET(comb, lam_unit, precision=T.precision)
        renorm_branches = list(giet.branches)
        return giet, renorm_branches
    renorm_branches = []
    for j in range(d):
        bm = engine.branch_maps[j]
        size = len(bm.maps) if isinstance(bm, Chain) else 1
        if size <= 16:
            # the composed absolute branch collapsed (peepholes), so the
            # renormalized branch is just its affine conjugate by x -> L*x
            renorm_branches.append(
                Chain([Affine(L, mpf(0)), bm, Affine(1 / L, mpf(0))])
            )
        else:
            children = [prev_branches[l - 1] for l in engine.level_words[j]]
            renorm_branches.append(ScaledConjugation(children, ratio))
    lam_unit = [lam_abs[j] / L for j in range(d)]
    bot_unit = [bot_abs[j] / L for j in range(d)]
    top_pts = [mpf(0)]
    for l in comb.pi_top:
        top_pts.append(top_pts[-1] + lam_unit[l - 1])
    bot_pts = [mpf(0)]
    for l in comb.pi_bottom:
        bot_pts.append(bot_pts[-1] + bot_unit[l - 1])
    slopes = [mpmath.log(bot_unit[j] / lam_unit[j]) for j in range(d)]
    profiles = []
    for j in range(1, d + 1):
        ti = comb.top_position(j)
        bi = comb.bottom_position(j)
        to_top = Affine.mapping(mpf(0), mpf(1), top_pts[ti], top_pts[ti + 1])
        from_bot = Affine.mapping(bot_pts[bi], bot_pts[bi + 1], mpf(0), mpf(1))
        profiles.append(Chain([to_top, renorm_branches[j - 1], from_bot]))
    giet = GIET(comb, lam_unit, slopes, profiles, renorm_branches, bot_unit,
                T.precision, mpf(1))
    return giet, renorm_branches


class InductionChain:
    """Append-only chain of positive-acceleration records over a base map."""

    def __init__(self, T, zorich_cap=10 ** 6, positivity_cap=512, depth_cap=64):
        self.T = T
        self.zorich_cap = zorich_cap
        self.positivity_cap = positivity_cap
        self.depth_cap = depth_cap
        self._engine = _Engine(T)
        self.records: list[InductionRecord] = []
        self._renorm_branches = [list(T.branches)]  # per level
        self._lengths = [T.total_length]
        self._partitions = {}      # used by towers
        self._special_sums = {}    # used by birkhoff
        self._orbit = None         # orbit-of-zero cache used by regularity
        self._orbit_gen = None     # resumable iterator backing the cache
        self._orbit_dprods = None  # prefix products of DT along that orbit
        self._orbit_floats = None  # float shadow of the orbit for prefilters

    @property
    def depth(self):
        return len(self.records)

    def ensure(self, k):
        if k > self.depth_cap:
            raise DepthBudget(f"requested level {k} exceeds depth cap {self.depth_cap}")
        with workprec(self.T.precision):
            while self.depth < k:
                self._accel_step()
        return self

    def _accel_step(self):
        eng = self._engine
        eng.reset_level_words()
        rv0 = eng.elementary_count
        winners = []
        block = IncidenceMatrix.identity(eng.d)
        total = None
        split = None
        zsteps = 0
        while True:
            mat, winner, run = eng.zorich_run(self.zorich_cap)
            winners.append(f"{winner}x{run}")
            block = mat @ block
            zsteps += 1
            if zsteps > self.positivity_cap:
                raise PositivityTimeout(
                    f"no positive product within {self.positivity_cap} runs"
                )
            if block.is_positive():
                if total is None:
                    total = block
                    split = eng.elementary_count - rv0
                    block = IncidenceMatrix.identity(eng.d)
                else:
                    total = block @ total
                    break
        induced, renorm = _renormalized_from_engine(
            eng, self._renorm_branches[-1], self._lengths[-1]
        )
        snap = eng.snapshot()
        rec = InductionRecord(
            step_index=self.depth + 1,
            matrix=total,
            rv_steps_consumed=eng.elementary_count - rv0,
            induced=induced,
            inducing_interval_length=eng.L,
            winners=",".join(winners),
            positivity_block_split=split,
            heights_by_label=snap["heights"],
            top_order=snap["top_order"],
            bottom_order=snap["bottom_order"],
            top_lengths=snap["top_lengths"],
            bottom_lengths=snap["bottom_lengths"],
            base_words=snap["base_words"],
            level_words=snap["level_words"],
            branch_maps=snap["branch_maps"],
        )
        self.records.append(rec)
        self._renorm_branches.append(renorm)
        self._lengths.append(eng.L)

    # ------------------------------------------------------------- accessors
    def record(self, k):
        if not 1 <= k <= self.depth:
            raise RangeError(f"level {k} not in 1..{self.depth}")
        return self.records[k - 1]

    def lam(self, k):
        """Inducing-interval length at level k (k = 0: full domain)."""
        self.ensure(k)
        return self._lengths[k]

    def heights(self, k):
        """Return times of the level-k bases, by label (level 0: all ones)."""
        if k == 0:
            return tuple(1 for _ in range(self.T.d))
        self.ensure(k)
        return self.record(k).heights_by_label

    def top_intervals(self, k):
        """Absolute (left, right) of the level-k top intervals, by label."""
        if k == 0:
            return tuple(self.T.top_interval(j) for j in range(1, self.T.d + 1))
        self.ensure(k)
        rec = self.record(k)
        out = [None] * self.T.d
        acc = mpf(0)
        for label in rec.top_order:
            ln = rec.top_lengths[label - 1]
            out[label - 1] = (acc, acc + ln)
            acc += ln
        return tuple(out)

    def base_words(self, k):
        if k == 0:
            return tuple((j,) for j in range(1, self.T.d + 1))
        self.ensure(k)
        return self.record(k).base_words

    def level_words(self, k):
        if k == 0:
            return tuple((j,) for j in range(1, self.T.d + 1))
        self.ensure(k)
        return self.record(k).level_words

    def induced_value(self, k, label, x):
        """Evaluate the level-k induced map's branch (absolute coordinates)."""
        if k == 0:
            return self.T.branch_value(label, x)
        self.ensure(k)
        return self.record(k).branch_maps[label - 1].value(x)

    def renorm_branch(self, k, label):
        self.ensure(k)
        return self._renorm_branches[k][label - 1]


_CHAIN_ATTR = "_gietlab_chain"


def chain_for(T):
    """Memoized induction chain for a map."""
    chain = getattr(T, _CHAIN_ATTR, None)
    if chain is None:
        chain = InductionChain(T)
        setattr(T, _CHAIN_ATTR, chain)
    return chain


def as_chain(obj):
    return obj if isinstance(obj, InductionChain) else chain_for(obj)


# ------------------------------------------------------------ functional ops

def _engine_to_induced_giet(eng):
    """Materialize the unrenormalized induced map on [0, L] from engine state."""
    T = eng.T
    comb = eng.comb()
    d = eng.d
    branches = list(eng.branch_maps)
    lam = list(eng.top_len)
    return GIET.from_branches(comb, lam, branches, precision=T.precision,
                              total_length=eng.L)


def rv_step(T):
    """One elementary induction step.

    Returns (induced GIET on the shortened interval, elementary incidence
    matrix, winner side).
    """
    with workprec(T.precision):
        eng = _Engine(T)
        mat, winner = eng.elementary_step()
        return _engine_to_induced_giet(eng), mat, winner


def _record_from_engine(eng, mat, winners, rv_consumed, split=None):
    induced, _ = _renormalized_from_engine(eng, list(eng.T.branches),
                                           eng.T.total_length)
    snap = eng.snapshot()
    return InductionRecord(
        step_index=1,
        matrix=mat,
        rv_steps_consumed=rv_consumed,
        induced=induced,
        inducing_interval_length=eng.L,
        winners=winners,
        positivity_block_split=split,
        heights_by_label=snap["heights"],
        top_order=snap["top_order"],
        bottom_order=snap["bottom_order"],
        top_lengths=snap["top_lengths"],
        bottom_lengths=snap["bottom_lengths"],
        base_words=snap["base_words"],
        level_words=snap["level_words"],
        branch_maps=snap["branch_maps"],
    )


def zorich_step(T, run_cap=10 ** 6):
    """Maximal constant-winner group of elementary steps (one accelerated step).

    In the two-interval case the run length is the continued-fraction partial
    quotient of the rotation number.
    """
    with workprec(T.precision):
        eng = _Engine(T)
        mat, winner, run = eng.zorich_run(run_cap)
        return _record_from_engine(eng, mat, f"{winner}x{run}", run)


def positive_accel_step(T, run_cap=10 ** 6, positivity_cap=512):
    """Accelerate until the product is a product of two strictly positive blocks.

    Accumulates Zorich steps until the running product is strictly positive,
    then again from a fresh start; the returned matrix is the product of the two
    positive blocks and the block boundary is recorded for audit.
    """
    with workprec(T.precision):
        eng = _Engine(T)
        winners = []
        block = IncidenceMatrix.identity(eng.d)
        total = None
        split = None
        z = 0
        while True:
            mat, winner, run = eng.zorich_run(run_cap)
            winners.append(f"{winner}x{run}")
            block = mat @ block
            z += 1
            if z > positivity_cap:
                raise PositivityTimeout(
                    f"no positive product within {positivity_cap} runs"
                )
            if block.is_positive():
                if total is None:
                    total = block
                    split = eng.elementary_count
                    block = IncidenceMatrix.identity(eng.d)
                else:
                    total = block @ total
                    break
        return _record_from_engine(eng, total, ",".join(winners),
                                   eng.elementary_count, split)


def cocycle_product(records, m, n):
    """Q(m, n) = A_{n-1} ... A_m over exact integers."""
    if isinstance(records, InductionChain):
        records.ensure(n if n > 0 else 0)
        records = records.records
    if not (0 <= m < n <= len(records)):
        raise RangeError(f"need 0 <= m < n <= {len(records)}, got ({m}, {n})")
    d = records[0].matrix.d
    q = IncidenceMatrix.identity(d)
    for i in range(m, n):
        q = records[i].matrix @ q
    return q


def heights(records, k):
    """Tower heights q_k = Q(0,k) * (1,...,1); q_0 is all ones by convention."""
    if isinstance(records, InductionChain):
        d = records.T.d
        if k == 0:
            return tuple(1 for _ in range(d))
        records.ensure(k)
        recs = records.records
    else:
        recs = records
        d = recs[0].matrix.d
        if k == 0:
            return tuple(1 for _ in range(d))
    return cocycle_product(recs, 0, k).apply(tuple(1 for _ in range(d)))


def renormalized_map(T, k):
    """R^k T: the level-k induced map rescaled linearly to [0,1]."""
    if k == 0:
        return T
    chain = as_chain(T)
    chain.ensure(k)
    return chain.record(k).induced


@dataclass
class KeaneReport:
    survived: bool
    steps_requested: int
    steps_completed: int
    first_tie_step: int | None
    min_length: object


def keane_probe(T, N):
    """Run up to N elementary steps looking for numerical near-connections."""
    with workprec(T.precision):
        eng = _Engine(T)
        for i in range(N):
            try:
                eng.elementary_step()
            except NumericalConnection:
                return KeaneReport(False, N, i, i + 1,
                                   min(min(eng.top_len), min(eng.bot_len)))
        return KeaneReport(True, N, N, None,
                           min(min(eng.top_len), min(eng.bot_len)))
