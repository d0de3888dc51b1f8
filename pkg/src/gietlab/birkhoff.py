"""Birkhoff sums of piecewise-C^1 observables over a GIET.

Covers signed Birkhoff sums (additive-cocycle convention for negative times),
special Birkhoff sums along Rohlin towers (with the level recursion and sampled
sup norms), the two-sided geometric decomposition of an arbitrary Birkhoff sum
into special sums, and broken Birkhoff sums along a tower with their sampled
supremum estimate.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import mpmath
import numpy as np
from mpmath import mpf

from .errors import AtSingularity, OrbitHitsSingularity, RangeError, RunLimitExceeded
from .induction import as_chain
from .maps import Chain as ChainMap, InverseOf, identity_map
from .precision import workprec

__all__ = [
    "Observable",
    "LogSlopeObservable",
    "log_slope_observable",
    "SpecialSumTable",
    "birkhoff_sum",
    "special_sums",
    "GeometricDecomposition",
    "geometric_decomposition",
    "BrokenSumSpec",
    "broken_sum",
    "broken_sum_variant_def",
    "broken_sum_variant_sup",
    "broken_sup_estimate",
]


class Observable:
    """Piecewise-C^1 observable, continuous on each top continuity interval.

    `on_branch` evaluates with the branch made explicit (used along return
    words, where the branch is known without a position lookup); `value` looks
    the branch up from the point.
    """

    def __init__(self, fn):
        self.fn = fn

    def value(self, T, x):
        return self.fn(x)

    def on_branch(self, T, label, x):
        return self.fn(x)


class LogSlopeObservable(Observable):
    """f = sign * log DT, the canonical observable of the regularity theory."""

    def __init__(self, sign=1):
        self.sign = sign

    def value(self, T, x):
        return self.sign * T.log_slope_at(x)

    def on_branch(self, T, label, x):
        _, d1 = T.branches[label - 1].eval1(x)
        return self.sign * mpmath.log(d1)


def log_slope_observable(sign=1):
    return LogSlopeObservable(sign)


def _as_observable(f):
    return f if isinstance(f, Observable) else Observable(f)


def birkhoff_sum(T, f, x, n, strict=True):
    """S_n f(x) for n in Z.

    n > 0 sums f over x, Tx, ..., T^{n-1}x; n = 0 gives 0; n < 0 sums f over
    T^-1 x, ..., T^n x with a minus sign, the convention making (S_n f) an
    additive Z-cocycle. With strict=True an orbit point within tau of a branch
    endpoint raises OrbitHitsSingularity(step); strict=False extends branches
    by closure (the half-open convention used for orbits through 0).
    """
    f = _as_observable(f)
    with workprec(T.precision):
        total = mpf(0)
        if n == 0:
            return total
        if n > 0:
            if isinstance(f, LogSlopeObservable):
                walk = T.orbit_log_slopes(x, strict=strict)
                for j in range(n):
                    try:
                        _, ls = next(walk)
                    except AtSingularity as exc:
                        raise OrbitHitsSingularity(j + 1) from exc
                    total += f.sign * ls
                return total
            for j in range(n):
                total += f.value(T, x)
                try:
                    x = T.forward(x) if strict else T.orbit_step(x)
                except AtSingularity as exc:
                    raise OrbitHitsSingularity(j + 1) from exc
            return total
        for j in range(-n):
            try:
                x = T.backward(x) if strict else T.orbit_step_back(x)
            except AtSingularity as exc:
                raise OrbitHitsSingularity(-(j + 1)) from exc
            total -= f.value(T, x)
        return total


# ------------------------------------------------------------- special sums

def _word_walk_values(T, f, x, letters):
    """Yield (f at the current point, next point) along branch letters, using
    the conjugation fast path for the canonical log-slope observable."""
    if isinstance(f, LogSlopeObservable):
        for nx, ls in T.word_orbit_log_slopes(x, letters):
            yield f.sign * ls, nx
        return
    for letter in letters:
        v = f.on_branch(T, letter, x)
        x = T.branch_value(letter, x)
        yield v, x


def _cheap_branch(bm):
    """Whether a composed branch map evaluates in O(1) (collapsed chain)."""
    if isinstance(bm, ChainMap):
        return len(bm.maps) <= 16
    return True


def _level_branch(chain, k, j):
    """Level-k induced branch map for label j, or None when unavailable."""
    if k == 0:
        return chain.T.branches[j - 1]
    chain.ensure(k)
    bms = chain.record(k).branch_maps
    return bms[j - 1] if bms else None


def _tower_sum(chain, f, k, j, x):
    """f_k(x) = S_{q_k^j} f(x) for x in the level-k base I_k^j.

    For the log-slope observable the whole tower sum is log D of the level-k
    induced branch, one O(1) evaluation when the branch chain collapsed;
    otherwise direct iteration along the recorded return word
    (closure-extended)."""
    T = chain.T
    if isinstance(f, LogSlopeObservable):
        bm = _level_branch(chain, k, j)
        if bm is not None and _cheap_branch(bm):
            v, d1 = bm.eval1(x)
            return f.sign * mpmath.log(d1), v
    total = mpf(0)
    for v, x in _word_walk_values(T, f, x, chain.base_words(k)[j - 1]):
        total += v
    return total, x


class _NoFastPath(Exception):
    pass


def _mpf_log_sup(chain, k, j, grid=1025):
    """Sampled sup of |log D| of the level-k induced branch in working
    precision. Walks the conjugation's inner coordinate when available so
    each sample is forward evaluations only; None when the branch is not an
    O(1) collapsed chain."""
    bm = _level_branch(chain, k, j)
    if bm is None or not _cheap_branch(bm):
        return None
    l, r = chain.top_intervals(k)[j - 1]
    struct = chain.T._conjugation_structure()
    best = mpf(0)
    if (struct is not None and isinstance(bm, ChainMap) and len(bm.maps) >= 2
            and isinstance(bm.maps[0], InverseOf)
            and bm.maps[0].inner is struct[1] and bm.maps[-1] is struct[1]):
        h = struct[1]
        inner = bm.maps[1:-1]
        mid = ChainMap(inner) if inner else identity_map()
        wl, wr = h.inverse_value(l), h.inverse_value(r)
        for i in range(grid):
            w = wl + (wr - wl) * i / (grid - 1)
            v, d1 = mid.eval1(w)
            cur = abs(mpmath.log(d1 * h.eval1(v)[1] / h.eval1(w)[1]))
            if cur > best:
                best = cur
        return float(best)
    for i in range(grid):
        x = l + (r - l) * i / (grid - 1)
        _, d1 = bm.eval1(x)
        cur = abs(mpmath.log(d1))
        if cur > best:
            best = cur
    return float(best)


class _LogBlockWalker:
    """Block-hierarchy evaluation of log DT^q over full lower-level towers.

    A level-k tower is the concatenation of level-(k-1) towers given by the
    level word, so any prefix sum S_m(log DT) splits into full-block terms
    log D(induced branch) plus one descent. When the map carries a shared
    outer conjugation h, blocks are walked in the inner coordinate w (with
    x = h(w)), so each block costs forward evaluations only and the single
    Newton inversion happens at the start."""

    def __init__(self, chain, k_top):
        self.chain = chain
        struct = chain.T._conjugation_structure()
        self.h = None if struct is None else struct[1]
        self.mids = []
        for k in range(k_top):
            level = []
            for j in range(1, chain.T.d + 1):
                bm = _level_branch(chain, k, j)
                if bm is None:
                    raise _NoFastPath
                level.append(self._mid_of(bm))
            self.mids.append(level)

    def _mid_of(self, bm):
        if self.h is None:
            if not _cheap_branch(bm):
                raise _NoFastPath
            return bm
        if not (isinstance(bm, ChainMap) and len(bm.maps) >= 2
                and isinstance(bm.maps[0], InverseOf)
                and bm.maps[0].inner is self.h and bm.maps[-1] is self.h):
            raise _NoFastPath
        inner = bm.maps[1:-1]
        mid = ChainMap(inner) if inner else identity_map()
        if not _cheap_branch(mid):
            raise _NoFastPath
        return mid

    def start(self, x):
        if self.h is None:
            return x, mpf(1)
        w = self.h.inverse_value(x)
        return w, self.h.eval1(w)[1]

    def block(self, k, j, w, dh_w):
        """(w_next, log D branch at h(w), Dh(w_next)) for one full block."""
        v, d1 = self.mids[k][j - 1].eval1(w)
        if self.h is None:
            return v, mpmath.log(d1), dh_w
        dh_v = self.h.eval1(v)[1]
        return v, mpmath.log(d1 * dh_v / dh_w), dh_v


def _log_mark_sums(chain, walker, k, j, w, dh, off, acc, marks, out):
    """Record acc + S_{m-off} for every mark in this tower (off < m <= end)."""
    if not marks:
        return
    if k == 0:
        _, ld, _ = walker.block(0, j, w, dh)
        for m in marks:  # block height 1: every mark is the block end
            out[m] = acc + ld
        return
    hts = chain.heights(k - 1)
    pos = off
    i = 0
    for letter in chain.level_words(k)[j - 1]:
        hi = pos + hts[letter - 1]
        lo_i = i
        while i < len(marks) and marks[i] <= hi:
            i += 1
        if lo_i < i:
            _log_mark_sums(chain, walker, k - 1, letter, w, dh,
                           pos, acc, marks[lo_i:i], out)
        if i == len(marks):
            return
        w, ld, dh = walker.block(k - 1, letter, w, dh)
        acc += ld
        pos = hi


def _log_prefix_sums_fast(chain, f, k, j, x, marks):
    """Prefix sums of f = sign*log DT at the marks, via the block hierarchy;
    None when the induced branches did not collapse to O(1) chains."""
    try:
        walker = _LogBlockWalker(chain, k)
    except _NoFastPath:
        return None
    q = chain.heights(k)[j - 1]
    w0, dh0 = walker.start(x)
    raw = {0: mpf(0)}
    ms = sorted(set(marks) | {q})
    _log_mark_sums(chain, walker, k, j, w0, dh0, 0, mpf(0),
                   [m for m in ms if m > 0], raw)
    out = {m: f.sign * raw[m] for m in marks}
    return out, f.sign * raw[q]


class SpecialSumTable:
    """Evaluation closures for the level-k special Birkhoff sums f_k.

    Values are built by the level recursion: f_k on tower j is the sum of
    level-(k-1) special sums along the level-k word over level-(k-1) letters
    (entry counts given by the incidence-matrix columns), bottoming out in
    single branch evaluations. Sup norms are sampled per tower.
    """

    def __init__(self, chain, f, k, prev=None):
        self.chain = chain
        self.f = _as_observable(f)
        self.level = k
        self.heights = chain.heights(k)
        self._prev = prev
        self._sup = [None] * chain.T.d

    def value(self, j, x):
        if self.level == 0:
            return self.f.on_branch(self.chain.T, j, x)
        prev = self._prev
        total = mpf(0)
        for letter in self.chain.level_words(self.level)[j - 1]:
            total += prev.value(letter, x)
            x = self.chain.induced_value(self.level - 1, letter, x)
        return total

    def sup_norm(self, j, grid=2049):
        if self._sup[j - 1] is None:
            self._sup[j - 1] = self._estimate_sup(j, grid)
        return self._sup[j - 1]

    def max_sup_norm(self, grid=2049):
        return max(self.sup_norm(j, grid) for j in range(1, self.chain.T.d + 1))

    def _estimate_sup(self, j, grid):
        chain = self.chain
        if isinstance(self.f, LogSlopeObservable):
            # f_k = log D(level-k induced branch); the renormalized branch has
            # the same log-derivative up to the scaling conjugation, and its
            # intermediates stay O(1), so the float vector path is accurate
            if self.level == 0:
                l, r = chain.T.top_interval(j)
                xs = np.linspace(float(l), float(r), grid)
                branch = chain.T.branches[j - 1]
            else:
                xs = np.linspace(0.0, 1.0, grid)
                branch = chain.renorm_branch(self.level, j)
            _, d1 = branch._raw1(xs)
            d1 = np.broadcast_to(np.asarray(d1, dtype=float), xs.shape)
            est = float(np.max(np.abs(np.log(d1))))
            if est > 1e-10 or self.level == 0:
                return est
            # below ~1e-10 the float64 samples are dominated by rounding of
            # d1 near 1; resample the log-derivative in working precision
            mp_est = _mpf_log_sup(chain, self.level, j)
            return mp_est if mp_est is not None else est
        # general observable: coarse mpf sampling, O(q) per sample point
        l, r = chain.top_intervals(self.level)[j - 1]
        n = 17
        best = mpf(0)
        for i in range(1, n):
            x = l + (r - l) * i / n
            v, _ = _tower_sum(chain, self.f, self.level, j, x)
            best = max(best, abs(v))
        return float(best)


def special_sums(chain, f, k):
    """Level-k special-sum table, cached on the chain per observable."""
    chain = as_chain(chain)
    f = _as_observable(f)
    key = (id(f), k)
    cached = chain._special_sums.get(key)
    if cached is not None:
        return cached
    with workprec(chain.T.precision):
        prev = special_sums(chain, f, k - 1) if k > 0 else None
        table = SpecialSumTable(chain, f, k, prev)
        chain._special_sums[key] = table
        return table


# ------------------------------------------------- geometric decomposition

@dataclass
class DecompositionTerm:
    level: int
    tower: int
    orbit_index: int
    point: object  # mpf, the base point the special sum is evaluated at
    value: object = None


@dataclass
class GeometricDecomposition:
    terms: list
    counts_backward: dict
    counts_forward: dict
    deepest_level: int
    split_index: int
    value: object       # sum of re-evaluated special-sum terms
    direct: object      # direct Birkhoff sum over the recorded orbit
    bound: object       # 2 * sum_n ||A_n|| ||f_n||_inf

    def counts(self):
        out = {}
        for d in (self.counts_backward, self.counts_forward):
            for k, v in d.items():
                out[k] = out.get(k, 0) + v
        return out


def geometric_decomposition(chain, f, x, r, orbit_cap=10 ** 6):
    """Decompose S_r f(x) into special Birkhoff sums.

    The orbit segment is split at the first visit to the deepest inducing
    interval it reaches; each half is decomposed by the visit recursion
    (full returns at the current level, then one descending recursive call for
    the unmatched prefix/tail), so per-side term counts at level n never exceed
    the column sums of the n-th incidence matrix. The reconstruction
    re-evaluates every special sum by fresh iteration and the reported bound is
    2 * sum_n ||A_n|| * ||f_n||_inf.
    """
    chain = as_chain(chain)
    f = _as_observable(f)
    T = chain.T
    if r < 1:
        raise RangeError("geometric decomposition needs r >= 1")
    if r > orbit_cap:
        raise RunLimitExceeded(f"orbit length {r} exceeds cap {orbit_cap}")
    with workprec(T.precision):
        # record the orbit segment (and f along it, when f is the log slope,
        # in the same fast pass)
        pts = [mpf(x)]
        fvals = None
        try:
            if isinstance(f, LogSlopeObservable):
                fvals = []
                walk = T.orbit_log_slopes(pts[0])
                for i in range(r):
                    nx, ls = next(walk)
                    fvals.append(f.sign * ls)
                    pts.append(nx)
            else:
                walk = T.orbit_iterator(pts[0])
                for i in range(r):
                    pts.append(next(walk))
        except AtSingularity as exc:
            raise OrbitHitsSingularity(len(pts)) from exc

        # depth K: first level whose shortest tower no longer fits in r
        K = 1
        while min(chain.heights(K)) <= r:
            K += 1
        lam = [chain.lam(n) for n in range(K + 1)]
        visits = [[] for _ in range(K + 1)]
        for i in range(r):
            z = pts[i]
            for n in range(K, -1, -1):
                if z < lam[n]:
                    for m in range(n, -1, -1):
                        visits[m].append(i)
                    break
        n_top = max(n for n in range(K + 1) if visits[n])

        ints = [chain.top_intervals(n) for n in range(n_top + 1)]
        hts = [chain.heights(n) for n in range(n_top + 1)]

        def tower_of(n, z):
            for j in range(1, T.d + 1):
                l, rr = ints[n][j - 1]
                if l <= z < rr:
                    return j
            raise AssertionError("visit point outside every level base")

        terms = []
        counts_b = {}
        counts_f = {}

        def emit(n, i, counts):
            j = tower_of(n, pts[i])
            terms.append(DecompositionTerm(n, j, i, pts[i]))
            counts[n] = counts.get(n, 0) + 1
            return hts[n][j - 1]

        def forward(lo, hi, n):
            """Decompose the segment [lo, hi); pts[lo] is a visit to I_n."""
            if lo >= hi:
                return
            if n == 0:
                for i in range(lo, hi):
                    emit(0, i, counts_f)
                return
            i = lo
            while True:
                j = tower_of(n, pts[i])
                q = hts[n][j - 1]
                if i + q > hi:
                    break
                emit(n, i, counts_f)
                i += q
            forward(i, hi, n - 1)

        def backward(lo, hi, n):
            """Decompose [lo, hi) where pts[hi] is a (possibly virtual) visit
            to I_n; full returns are matched right to left."""
            if lo >= hi:
                return
            if n == 0:
                for i in range(lo, hi):
                    emit(0, i, counts_b)
                return
            vis = visits[n]
            a = bisect.bisect_left(vis, lo)
            b = bisect.bisect_left(vis, hi)
            i = hi
            for t in reversed(vis[a:b]):
                j = tower_of(n, pts[t])
                if t + hts[n][j - 1] != i:
                    break
                emit(n, t, counts_b)
                i = t
            backward(lo, i, n - 1)

        i0 = visits[n_top][0]
        backward(0, i0, n_top)
        forward(i0, r, n_top)

        # independent reconstruction: each term re-iterated from its base point
        value = mpf(0)
        for t in terms:
            v, _ = _tower_sum(chain, f, t.level, t.tower, t.point)
            t.value = v
            value += v
        if fvals is not None:
            direct = sum(fvals, mpf(0))
        else:
            direct = mpf(0)
            for i in range(r):
                direct += f.value(T, pts[i])

        chain.ensure(n_top + 1)
        bound = mpf(0)
        for n in range(n_top + 1):
            table = special_sums(chain, f, n)
            bound += 2 * chain.record(n + 1).matrix.norm() * table.max_sup_norm()
        return GeometricDecomposition(
            terms=terms,
            counts_backward=counts_b,
            counts_forward=counts_f,
            deepest_level=n_top,
            split_index=i0,
            value=value,
            direct=direct,
            bound=bound,
        )


# --------------------------------------------------------------- broken sums

@dataclass(frozen=True)
class BrokenSumSpec:
    level: int
    tower: int
    x: object
    y: object
    m: int


def _prefix_sums(chain, f, k, j, x, marks):
    """S_m f(x) for each m in marks (sorted), one pass along the return word
    (block-hierarchy shortcut for the log-slope observable)."""
    if isinstance(f, LogSlopeObservable):
        fast = _log_prefix_sums_fast(chain, f, k, j, x, marks)
        if fast is not None:
            return fast
    T = chain.T
    out = {}
    want = set(marks)
    total = mpf(0)
    m = 0
    if m in want:
        out[m] = total
    for v, x in _word_walk_values(T, f, x, chain.base_words(k)[j - 1]):
        total += v
        m += 1
        if m in want:
            out[m] = total
    return out, total


def broken_sum(chain, f, spec_or_level, tower=None, x=None, y=None, m=None):
    """Broken Birkhoff sum B_k(x, y, m) = S_m f(x) + S_{q_k^j - m} f(T^m y).

    x, y lie in the base I_k^j and 0 <= m < q_k^j. The index convention is the
    concatenation-exact one: B_k(x, x, m) = f_k(x) for every m. The two raw
    off-by-one variants appearing in the source inequalities are exposed
    separately for audit (broken_sum_variant_def, broken_sum_variant_sup).
    """
    chain = as_chain(chain)
    f = _as_observable(f)
    if isinstance(spec_or_level, BrokenSumSpec):
        s = spec_or_level
        k, j, x, y, m = s.level, s.tower, s.x, s.y, s.m
    else:
        k, j = spec_or_level, tower
    q = chain.heights(k)[j - 1]
    if not 0 <= m < q:
        raise RangeError(f"break height {m} not in [0, {q})")
    with workprec(chain.T.precision):
        px, _ = _prefix_sums(chain, f, k, j, x, [m])
        py, fy = _prefix_sums(chain, f, k, j, y, [m])
        return px[m] + (fy - py[m])


def broken_sum_variant_def(chain, f, k, j, x, y, m):
    """Raw variant with the tail S_{q_k^j - m + 1} f(T^m y): one extra term."""
    chain = as_chain(chain)
    f = _as_observable(f)
    T = chain.T
    with workprec(T.precision):
        head = birkhoff_sum(T, f, x, m, strict=False)
        ym = y
        for _ in range(m):
            ym = T.orbit_step(ym)
        q = chain.heights(k)[j - 1]
        return head + birkhoff_sum(T, f, ym, q - m + 1, strict=False)


def broken_sum_variant_sup(chain, f, k, j, u, v, m):
    """Raw variant written at floor height m: S_{-m+1} f(u) + S_{q+1-m} f(v)
    with u, v in the floor T^m(I_k^j)."""
    chain = as_chain(chain)
    f = _as_observable(f)
    T = chain.T
    with workprec(T.precision):
        q = chain.heights(k)[j - 1]
        return (birkhoff_sum(T, f, u, -m + 1, strict=False)
                + birkhoff_sum(T, f, v, q + 1 - m, strict=False))


def broken_sup_estimate(chain, f, k, j, m_cap=512, points_per_floor=3):
    """Sampled estimate of R_k^j = sup over broken sums in the tower P_k^j.

    Base points are the base endpoints nudged inward by 2*tau plus the
    midpoint; break heights are all m < q_k^j when q_k^j <= m_cap, else a
    stratified sample. Each base point costs one pass along the return word
    (prefix sums), so the whole estimate is O(points * q)."""
    chain = as_chain(chain)
    f = _as_observable(f)
    T = chain.T
    with workprec(T.precision):
        q = chain.heights(k)[j - 1]
        l, r = chain.top_intervals(k)[j - 1]
        eps = 2 * T.tau
        base_pts = [l + eps, (l + r) / 2, r - eps][:points_per_floor]
        if q <= m_cap:
            marks = list(range(q))
        else:
            marks = sorted({(i * q) // m_cap for i in range(m_cap)})
        tables = []
        for p in base_pts:
            pref, tot = _prefix_sums(chain, f, k, j, p, marks)
            tables.append((pref, tot))
        best = mpf(0)
        for px, _ in tables:
            for py, ty in tables:
                for m in marks:
                    b = px[m] + (ty - py[m])
                    if abs(b) > best:
                        best = abs(b)
        return best
