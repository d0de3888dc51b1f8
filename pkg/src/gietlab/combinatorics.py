"""Combinatorial data: permutation pairs, irreducibility, singularity structure."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NotAPermutation, Reducible


@dataclass(frozen=True)
class CombinatorialDatum:
    """Pair of permutations of {1..d} giving the top/bottom interval orders.

    pi_top[i] is the label of the (i+1)-th interval from the left in the top
    partition; pi_bottom likewise for the bottom partition.
    """

    d: int
    pi_top: tuple
    pi_bottom: tuple

    def top_position(self, label):
        return self.pi_top.index(label)

    def bottom_position(self, label):
        return self.pi_bottom.index(label)

    def monodromy(self):
        """Position permutation p: top position i -> bottom position of that label
        (1-based on both sides)."""
        return tuple(
            self.pi_bottom.index(self.pi_top[i]) + 1 for i in range(self.d)
        )


@dataclass(frozen=True)
class SingularityStructure:
    genus: int
    kappa: int
    assignment: tuple  # assignment[i] in {1..kappa} for singularity u_i, i = 0..d


def validate_combinatorics(pi_top, pi_bottom):
    """Check both rows are permutations of {1..d} and the pair is irreducible."""
    top = tuple(int(v) for v in pi_top)
    bottom = tuple(int(v) for v in pi_bottom)
    d = len(top)
    if d < 2 or len(bottom) != d:
        raise NotAPermutation("rows must have equal length d >= 2")
    full = set(range(1, d + 1))
    if set(top) != full or len(top) != d:
        raise NotAPermutation(f"top row is not a permutation of 1..{d}")
    if set(bottom) != full or len(bottom) != d:
        raise NotAPermutation(f"bottom row is not a permutation of 1..{d}")
    for k in range(1, d):
        if set(top[:k]) == set(bottom[:k]):
            raise Reducible(k)
    return CombinatorialDatum(d=d, pi_top=top, pi_bottom=bottom)


def singularity_structure(pi: CombinatorialDatum) -> SingularityStructure:
    """Genus, number of singularity classes, and the endpoint assignment map.

    Built from the cycle structure of the canonical singularity permutation sigma
    on {0, 1, ..., d} associated with the monodromy p (the standard combinatorial
    construction from the interval-exchange literature; externally sourced, see
    the repo notes). Satisfies d = 2*genus + kappa - 1.
    """
    d = pi.d
    p = pi.monodromy()  # p[i-1] = p(i), 1-based
    pinv = [0] * (d + 1)  # pinv[v] = i with p(i) = v
    for i, v in enumerate(p, start=1):
        pinv[v] = i

    def sigma(j):
        if j == 0:
            return pinv[1] - 1
        pj = p[j - 1]
        if pj == d:
            return d
        return pinv[pj + 1] - 1

    seen = [False] * (d + 1)
    assignment = [0] * (d + 1)
    kappa = 0
    for start in range(d + 1):
        if seen[start]:
            continue
        kappa += 1
        j = start
        while not seen[j]:
            seen[j] = True
            assignment[j] = kappa
            j = sigma(j)
    genus2 = d + 1 - kappa
    if genus2 % 2 != 0:
        raise ValueError("inconsistent singularity cycle count (not a stratum)")
    return SingularityStructure(
        genus=genus2 // 2, kappa=kappa, assignment=tuple(assignment)
    )
