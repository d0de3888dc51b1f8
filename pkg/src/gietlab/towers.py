"""Dynamical partitions: Rohlin towers, floor addressing, mesh, pair scale.

A level-k partition consists of d towers: the bases are the top intervals of
the level-k induced map (a subinterval [0, lam_k) of the domain) and the floors
are their forward images up to the return time. Floor endpoints are obtained by
pushing the base endpoints forward along the recorded first-return word, so each
floor's endpoints follow the same single branch (closure-extended).

Boundary conventions: public locate() raises OnBoundary within tau of a floor
endpoint. The orbit of 0 consists exactly of floor *left* endpoints, so internal
membership queries (locate_halfopen) treat floors as half-open [left, right).
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

from mpmath import mpf

from .errors import FloorBudgetExceeded, OnBoundary, ScaleNotFound
from .induction import as_chain
from .precision import workprec

__all__ = [
    "FloorAddress",
    "DynamicalPartition",
    "ScaleResult",
    "build_partition",
    "locate",
    "locate_halfopen",
    "mesh",
    "scale_of_pair",
]

DEFAULT_FLOOR_CAP = 2 * 10 ** 5


@dataclass(frozen=True)
class FloorAddress:
    level: int
    tower: int   # label j in 1..d
    height: int  # 0 <= height < q_k^j


class DynamicalPartition:
    """Immutable level-k tower partition with sorted floor addressing."""

    def __init__(self, level, bases, heights, floors_by_tower, tau):
        self.level = level
        self.bases = bases            # by label: (left, right)
        self.heights = heights        # by label
        self.floors_by_tower = floors_by_tower  # [label-1][m] = (left, right)
        self.tau = tau
        entries = []
        for j, floors in enumerate(floors_by_tower, start=1):
            for m, (l, r) in enumerate(floors):
                entries.append((l, r, j, m))
        entries.sort(key=lambda e: e[0])
        self._entries = entries
        self._lefts = [e[0] for e in entries]

    @property
    def floor_count(self):
        return len(self._entries)

    @property
    def floor_endpoints(self):
        """Sorted floor boundaries (left endpoints plus the domain's right end)."""
        return self._lefts + [self._entries[-1][1]]

    def floor_interval(self, address):
        return self.floors_by_tower[address.tower - 1][address.height]

    def _index_of(self, x):
        i = bisect.bisect_right(self._lefts, x) - 1
        return min(max(i, 0), len(self._entries) - 1)

    def locate(self, x):
        """Floor containing x; raises OnBoundary within tau of an endpoint."""
        i = self._index_of(x)
        l, r, j, m = self._entries[i]
        if abs(x - l) < self.tau or abs(x - r) < self.tau:
            raise OnBoundary(f"point within tolerance of a level-{self.level} floor endpoint")
        return FloorAddress(self.level, j, m)

    def locate_halfopen(self, x):
        """Floor containing x with floors read as [left, right); exact left
        endpoints (orbit-of-zero points) resolve to their own floor."""
        i = self._index_of(x)
        l, r, j, m = self._entries[i]
        return FloorAddress(self.level, j, m)

    def mesh(self):
        return max(r - l for (l, r, _, _) in self._entries)

    def iter_floors(self):
        for (l, r, j, m) in self._entries:
            yield FloorAddress(self.level, j, m), (l, r)


def build_partition(chain, k, floor_cap=DEFAULT_FLOOR_CAP):
    """Build (and cache) the level-k partition.

    Floor endpoints are pushed forward branch by branch along the return word;
    heights are the word lengths, which coincide exactly with the integer-cocycle
    heights.
    """
    chain = as_chain(chain)
    cached = chain._partitions.get(k)
    if cached is not None:
        return cached
    chain.ensure(k) if k > 0 else None
    T = chain.T
    with workprec(T.precision):
        heights = chain.heights(k)
        total = sum(heights)
        if total > floor_cap:
            raise FloorBudgetExceeded(
                f"level {k} has {total} floors, exceeding the cap {floor_cap}"
            )
        bases = chain.top_intervals(k)
        words = chain.base_words(k)
        floors_by_tower = []
        for j in range(1, T.d + 1):
            l, r = bases[j - 1]
            floors = [(l, r)]
            letters = []
            word_iter = iter(words[j - 1])
            for _ in range(heights[j - 1] - 1):
                letters.append(next(word_iter))
            for l, r in zip(T.word_orbit_iterator(l, letters),
                            T.word_orbit_iterator(r, letters)):
                floors.append((l, r))
            floors_by_tower.append(floors)
        part = DynamicalPartition(k, bases, heights, floors_by_tower, T.tau)
        chain._partitions[k] = part
        return part


def locate(partition, x):
    return partition.locate(x)


def locate_halfopen(partition, x):
    return partition.locate_halfopen(x)


def mesh(partition):
    return partition.mesh()


@dataclass(frozen=True)
class ScaleResult:
    k0: int
    covering: str              # "one-floor" | "two-adjacent-floors"
    shared_endpoint: object    # f when covering is two-adjacent, else None


def _has_full_floor(partition, x, y):
    """Whether [x, y] contains a full floor of the partition."""
    lefts = partition._lefts
    i = bisect.bisect_left(lefts, x)
    while i < len(partition._entries):
        l, r, _, _ = partition._entries[i]
        if l > y:
            break
        if l >= x and r <= y:
            return True
        i += 1
    return False


def _endpoints_strictly_inside(partition, x, y):
    pts = []
    lefts = partition._lefts
    i = bisect.bisect_right(lefts, x)
    while i < len(lefts) and lefts[i] < y:
        pts.append(lefts[i])
        i += 1
    return pts


def scale_of_pair(chain, x, y, max_level=30, floor_cap=DEFAULT_FLOOR_CAP):
    """Minimal level k0 whose partition has a full floor inside [x, y], plus the
    covering dichotomy at level k0 - 1: [x, y] lies in one floor, or in two
    adjacent floors sharing an endpoint f (returned)."""
    chain = as_chain(chain)
    with workprec(chain.T.precision):
        x, y = (x, y) if x <= y else (y, x)
        if x == y:
            raise ValueError("scale of a pair needs two distinct points")
        for k in range(0, max_level + 1):
            try:
                part = build_partition(chain, k, floor_cap=floor_cap)
            except FloorBudgetExceeded:
                raise ScaleNotFound(
                    f"mesh did not drop below the pair separation within the floor budget"
                )
            if _has_full_floor(part, x, y):
                k0 = k
                if k0 == 0:
                    return ScaleResult(0, "one-floor", None)
                prev = build_partition(chain, k0 - 1, floor_cap=floor_cap)
                inside = _endpoints_strictly_inside(prev, x, y)
                if len(inside) == 0:
                    return ScaleResult(k0, "one-floor", None)
                if len(inside) == 1:
                    return ScaleResult(k0, "two-adjacent-floors", inside[0])
                raise AssertionError(
                    "more than one previous-level endpoint inside a minimal-scale pair"
                )
        raise ScaleNotFound(
            f"no full floor inside the pair within {max_level} levels"
        )
