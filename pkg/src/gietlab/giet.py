"""Generalized interval exchange transformations in shape-profile coordinates.

A GIET on [0, L] is a combinatorial datum plus, per label j: the top interval
length lambda_j, the log-slope log(|bottom_j| / |top_j|), and the profile (the
branch normalized to a [0,1]-fixing diffeo by the affine maps onto its top and
bottom intervals). Branches are monotone composition chains (maps.py), so induced
and conjugated maps keep exact derivatives to order 3.
"""

from __future__ import annotations

import bisect

import mpmath
import numpy as np
from mpmath import mp, mpf

from . import maps as mapslib
from .combinatorics import CombinatorialDatum, singularity_structure, validate_combinatorics
from .errors import AtSingularity, ConfigError
from .maps import Affine, Chain, InverseOf, MonotoneMap, identity_map
from .precision import DEFAULT_PRECISION, mpf_from_any, tau, workprec

__all__ = [
    "GIET",
    "StandardIET",
    "apply",
    "nonlinearity",
    "total_nonlinearity",
    "boundary",
    "c2_distance",
    "c2_distance_to_iets",
    "conjugate_by_diffeo",
]


def _prefix_endpoints(order, lengths_by_label, origin):
    """Endpoints u_0..u_d from per-label lengths laid out in the given order."""
    pts = [origin]
    acc = origin
    for label in order:
        acc = acc + lengths_by_label[label - 1]
        pts.append(acc)
    return pts


class GIET:
    """Immutable generalized interval exchange transformation."""

    def __init__(self, comb, lambda_top, log_slopes, profiles, branches,
                 bottom_lengths, precision, total_length):
        self.comb = comb
        self.d = comb.d
        self.precision = precision
        self.tau = tau(precision)
        self.total_length = total_length
        self.lambda_top = list(lambda_top)
        self.log_slopes = list(log_slopes)
        self.profiles = list(profiles)
        self.branches = list(branches)
        self.bottom_lengths = list(bottom_lengths)
        self.top_endpoints = _prefix_endpoints(comb.pi_top, self.lambda_top, mpf(0))
        self.bottom_endpoints = _prefix_endpoints(
            comb.pi_bottom, self.bottom_lengths, mpf(0)
        )
        self._validate()

    # ---------------------------------------------------------------- build
    @classmethod
    def from_coordinates(cls, comb, lambda_top, log_slopes=None, profiles=None,
                         precision=DEFAULT_PRECISION, total_length=None):
        if not isinstance(comb, CombinatorialDatum):
            comb = validate_combinatorics(*comb)
        d = comb.d
        with workprec(precision):
            lam = [mpf_from_any(v, precision) for v in lambda_top]
            if len(lam) != d or any(v <= 0 for v in lam):
                raise ConfigError("lambda_top must be d positive lengths")
            if total_length is None:
                total_length = mpf(sum(lam))
            slopes = (
                [mpf(0)] * d
                if log_slopes is None
                else [mpf_from_any(v, precision) for v in log_slopes]
            )
            profs = (
                [identity_map() for _ in range(d)] if profiles is None else list(profiles)
            )
            bottoms = [lam[j] * mpmath.exp(slopes[j]) for j in range(d)]
            t = tau(precision)
            if abs(sum(bottoms) - total_length) > 64 * t * max(1, abs(total_length)):
                raise ConfigError(
                    "bottom lengths exp(log_slopes)*lambda_top do not sum to the domain length"
                )
            # normalize the rounding drift so both endpoint lists end exactly together
            top_pts = _prefix_endpoints(comb.pi_top, lam, mpf(0))
            bot_pts = _prefix_endpoints(comb.pi_bottom, bottoms, mpf(0))
            branches = []
            for j in range(1, d + 1):
                ti = comb.top_position(j)
                bi = comb.bottom_position(j)
                b_in = Affine.mapping(top_pts[ti], top_pts[ti + 1], mpf(0), mpf(1))
                a_out = Affine.mapping(mpf(0), mpf(1), bot_pts[bi], bot_pts[bi + 1])
                branches.append(Chain([b_in, profs[j - 1], a_out]))
            return cls(comb, lam, slopes, profs, branches, bottoms,
                       precision, total_length)

    @classmethod
    def from_branches(cls, comb, lambda_top, branches, precision=DEFAULT_PRECISION,
                      total_length=None):
        """Build from explicit branch maps; slopes and profiles are derived."""
        if not isinstance(comb, CombinatorialDatum):
            comb = validate_combinatorics(*comb)
        d = comb.d
        with workprec(precision):
            lam = [mpf_from_any(v, precision) for v in lambda_top]
            if total_length is None:
                total_length = mpf(sum(lam))
            top_pts = _prefix_endpoints(comb.pi_top, lam, mpf(0))
            bottoms = [None] * d
            for j in range(1, d + 1):
                ti = comb.top_position(j)
                l, r = top_pts[ti], top_pts[ti + 1]
                bottoms[j - 1] = branches[j - 1].value(r) - branches[j - 1].value(l)
            bot_pts = _prefix_endpoints(comb.pi_bottom, bottoms, mpf(0))
            slopes = [mpmath.log(bottoms[j] / lam[j]) for j in range(d)]
            profiles = []
            for j in range(1, d + 1):
                ti = comb.top_position(j)
                bi = comb.bottom_position(j)
                to_top = Affine.mapping(mpf(0), mpf(1), top_pts[ti], top_pts[ti + 1])
                from_bot = Affine.mapping(bot_pts[bi], bot_pts[bi + 1], mpf(0), mpf(1))
                profiles.append(Chain([to_top, branches[j - 1], from_bot]))
            return cls(comb, lam, slopes, profiles, branches, bottoms,
                       precision, total_length)

    def _validate(self):
        with workprec(self.precision):
            t = self.tau
            L = self.total_length
            if abs(self.top_endpoints[-1] - L) > 64 * t * max(1, abs(L)):
                raise ConfigError("top lengths do not sum to the domain length")
            if abs(self.bottom_endpoints[-1] - L) > 64 * t * max(1, abs(L)):
                raise ConfigError("bottom lengths do not sum to the domain length")

    # ------------------------------------------------------------ evaluation
    def _position(self, x, endpoints, strict):
        i = bisect.bisect_right(endpoints, x) - 1
        i = min(max(i, 0), self.d - 1)
        if strict:
            lo, hi = 0, self.d
        else:
            lo, hi = 1, self.d - 1  # interior endpoints only
        for k in (i, i + 1):
            if lo <= k <= hi and abs(x - endpoints[k]) < self.tau:
                if not strict and x == endpoints[k]:
                    continue  # exact floor endpoints take the right-hand branch
                raise AtSingularity(k, x)
        return i

    def top_position_of(self, x, strict=True):
        return self._position(x, self.top_endpoints, strict)

    def bottom_position_of(self, x, strict=True):
        return self._position(x, self.bottom_endpoints, strict)

    def branch_at_top_position(self, i):
        return self.branches[self.comb.pi_top[i] - 1]

    def branch_value(self, label, x):
        """Closure-extended evaluation of one branch, no containment check."""
        return self.branches[label - 1].value(x)

    def branch_inverse(self, label, y):
        return self.branches[label - 1].inverse_value(y)

    def forward(self, x):
        with workprec(self.precision):
            i = self.top_position_of(x, strict=True)
            return self.branch_at_top_position(i).value(x)

    def backward(self, y):
        with workprec(self.precision):
            i = self.bottom_position_of(y, strict=True)
            return self.branches[self.comb.pi_bottom[i] - 1].inverse_value(y)

    def orbit_step(self, x):
        """Forward step with closure extension at exact endpoints.

        Needed for orbits through u_0 = 0 and for floor endpoints (which *are*
        orbit points of 0); near-misses of interior singularities still raise.
        """
        i = self.top_position_of(x, strict=False)
        return self.branch_at_top_position(i).value(x)

    def _conjugation_structure(self):
        """(hinv, h, mids) when every branch is Chain([hinv, ..., h]) for one
        shared conjugating diffeo h, else None. mids[label-1] is the inner part
        of the branch (the branch equals h o mid o h^{-1}). Cached."""
        cached = getattr(self, "_conj_struct", "unset")
        if cached != "unset":
            return cached
        struct = self._find_conjugation_structure()
        self._conj_struct = struct
        return struct

    def _find_conjugation_structure(self):
        mids = []
        h = None
        for b in self.branches:
            if not isinstance(b, mapslib.Chain) or len(b.maps) < 2:
                return None
            head, tail = b.maps[0], b.maps[-1]
            if not isinstance(head, mapslib.InverseOf):
                return None
            if h is None:
                h = head.inner
            if head.inner is not h or tail is not h:
                return None
            inner = b.maps[1:-1]
            mids.append(mapslib.Chain(inner) if inner else mapslib.identity_map())
        return mapslib.InverseOf(h), h, mids

    def orbit_iterator(self, x):
        """Yield successive forward-orbit points after x, closure-extended.

        When all branches share an outer conjugation h (as produced by
        conjugate_by_diffeo), the orbit is tracked in the inner coordinate, so
        each step costs one inner branch evaluation and one h evaluation
        instead of a Newton inversion of h.
        """
        struct = self._conjugation_structure()
        if struct is None:
            while True:
                x = self.orbit_step(x)
                yield x
        hinv, h, mids = struct
        w = hinv.value(x)
        while True:
            i = self.top_position_of(x, strict=False)
            w = mids[self.comb.pi_top[i] - 1].value(w)
            x = h.value(w)
            yield x

    def orbit_log_slopes(self, x, strict=False):
        """Yield (next point, log DT at the current point) along the forward
        orbit, with the same conjugation fast path as orbit_iterator."""
        struct = self._conjugation_structure()
        if struct is None:
            while True:
                i = self.top_position_of(x, strict=strict)
                x, d1 = self.branch_at_top_position(i).eval1(x)
                yield x, mpmath.log(d1)
        hinv, h, mids = struct
        w = hinv.value(x)
        _, dh = h._raw1(w)
        log_dh = mpmath.log(dh)
        while True:
            i = self.top_position_of(x, strict=strict)
            w, dmid = mids[self.comb.pi_top[i] - 1].eval1(w)
            x, dh_next = h._raw1(w)
            log_dh_next = mpmath.log(dh_next)
            if dmid == 1:  # conjugated translations: skip one log per step
                yield x, log_dh_next - log_dh
            else:
                yield x, mpmath.log(dmid) + log_dh_next - log_dh
            log_dh = log_dh_next

    def orbit_slopes(self, x, strict=False):
        """Yield (next point, DT at the current point) along the forward
        orbit: like orbit_log_slopes but with the raw derivative, so a step
        costs no logarithm and callers can accumulate products."""
        struct = self._conjugation_structure()
        if struct is None:
            while True:
                i = self.top_position_of(x, strict=strict)
                x, d1 = self.branch_at_top_position(i).eval1(x)
                yield x, d1
        hinv, h, mids = struct
        w = hinv.value(x)
        _, dh = h._raw1(w)
        while True:
            i = self.top_position_of(x, strict=strict)
            w, dmid = mids[self.comb.pi_top[i] - 1].eval1(w)
            x, dh_next = h._raw1(w)
            yield x, dmid * dh_next / dh
            dh = dh_next

    def word_orbit_iterator(self, x, letters):
        """Successive images of x under the given branch letters, closure-
        extended, using the conjugation fast path when available."""
        struct = self._conjugation_structure()
        if struct is None:
            for letter in letters:
                x = self.branches[letter - 1].value(x)
                yield x
            return
        hinv, h, mids = struct
        w = hinv.value(x)
        for letter in letters:
            w = mids[letter - 1].value(w)
            yield h.value(w)

    def word_orbit_log_slopes(self, x, letters):
        """Yield (next point, log D(branch) at the current point) along the
        given branch letters; same fast path as word_orbit_iterator."""
        struct = self._conjugation_structure()
        if struct is None:
            for letter in letters:
                x, d1 = self.branches[letter - 1].eval1(x)
                yield x, mpmath.log(d1)
            return
        hinv, h, mids = struct
        w = hinv.value(x)
        _, dh = h._raw1(w)
        log_dh = mpmath.log(dh)
        for letter in letters:
            w, dmid = mids[letter - 1].eval1(w)
            nx, dh_next = h._raw1(w)
            log_dh_next = mpmath.log(dh_next)
            yield nx, mpmath.log(dmid) + log_dh_next - log_dh
            log_dh = log_dh_next

    def orbit_step_back(self, y):
        """Backward step with closure extension at exact bottom endpoints."""
        i = self.bottom_position_of(y, strict=False)
        return self.branches[self.comb.pi_bottom[i] - 1].inverse_value(y)

    def orbit_step_with_log_slope(self, x):
        """(T x, log DT(x)) in one branch traversal."""
        i = self.top_position_of(x, strict=False)
        y, d1 = self.branch_at_top_position(i).eval1(x)
        return y, mpmath.log(d1)

    def log_slope_at(self, x):
        i = self.top_position_of(x, strict=False)
        _, d1 = self.branch_at_top_position(i).eval1(x)
        return mpmath.log(d1)

    # ------------------------------------------------------------ properties
    def rho(self):
        """Per-label slope ratios |bottom_j| / |top_j|."""
        with workprec(self.precision):
            return [mpmath.exp(s) for s in self.log_slopes]

    def is_standard(self):
        return all(s == 0 for s in self.log_slopes) and all(
            mapslib.is_identity(p) or (isinstance(p, Chain) and len(p.maps) == 1
                                       and mapslib.is_identity(p.maps[0]))
            for p in self.profiles
        )

    def singularity_structure(self):
        return singularity_structure(self.comb)

    def top_interval(self, label):
        i = self.comb.top_position(label)
        return self.top_endpoints[i], self.top_endpoints[i + 1]

    def bottom_interval(self, label):
        i = self.comb.bottom_position(label)
        return self.bottom_endpoints[i], self.bottom_endpoints[i + 1]

    def __repr__(self):
        kind = "StandardIET" if self.is_standard() else "GIET"
        return (f"<{kind} d={self.d} pi_top={self.comb.pi_top} "
                f"pi_bottom={self.comb.pi_bottom} precision={self.precision}>")


class StandardIET(GIET):
    """GIET whose branches are translations."""

    def __init__(self, comb, lam, precision=DEFAULT_PRECISION):
        if not isinstance(comb, CombinatorialDatum):
            comb = validate_combinatorics(*comb)
        with workprec(precision):
            lam = [mpf_from_any(v, precision) for v in lam]
            total = mpf(sum(lam))
            top_pts = _prefix_endpoints(comb.pi_top, lam, mpf(0))
            bot_pts = _prefix_endpoints(comb.pi_bottom, lam, mpf(0))
            branches = []
            for j in range(1, comb.d + 1):
                ti = comb.top_position(j)
                bi = comb.bottom_position(j)
                branches.append(Affine(mpf(1), bot_pts[bi] - top_pts[ti]))
            profiles = [identity_map() for _ in range(comb.d)]
            super().__init__(comb, lam, [mpf(0)] * comb.d, profiles, branches,
                             list(lam), precision, total)


# -------------------------------------------------------------- module ops

def apply(T, x, direction="forward"):
    """Evaluate T or its inverse at x; raises AtSingularity within tau of a
    branch endpoint on the relevant side."""
    x = mpf_from_any(x, T.precision)
    if direction == "forward":
        return T.forward(x)
    if direction == "inverse":
        return T.backward(x)
    raise ConfigError(f"unknown direction {direction!r}")


def nonlinearity(T, x):
    """eta_T(x) = D^2 T(x) / DT(x) for x interior to a continuity interval."""
    with workprec(T.precision):
        x = mpf_from_any(x, T.precision)
        i = T.top_position_of(x, strict=True)
        _, d1, d2, _ = T.branch_at_top_position(i).eval3(x)
        return d2 / d1


def _branch_abs_nonlinearity_integral(branch, lo, hi, quad_bits):
    """Integral of |D^2 b / D b| over [lo, hi], splitting at sign changes."""
    with workprec(quad_bits):
        lo, hi = mpf(lo), mpf(hi)

        def eta(x):
            _, d1, d2, _ = branch.eval3(x)
            return d2 / d1

        n = 65
        xs = [lo + (hi - lo) * k / (n - 1) for k in range(n)]
        vals = [eta(x) for x in xs]
        cuts = [lo]
        for k in range(n - 1):
            a, b = vals[k], vals[k + 1]
            if (a < 0 < b) or (b < 0 < a):
                u, v = xs[k], xs[k + 1]
                fu = a
                for _ in range(60):
                    m = (u + v) / 2
                    fm = eta(m)
                    if (fu < 0) == (fm < 0):
                        u, fu = m, fm
                    else:
                        v = m
                cuts.append((u + v) / 2)
        cuts.append(hi)
        total = mpf(0)
        for a, b in zip(cuts, cuts[1:]):
            if b > a:
                total += abs(mpmath.quad(eta, [a, b]))
        return total


def total_nonlinearity(T, quad_bits=96):
    """Total nonlinearity: integral of |eta_T| over the domain, per branch.

    Quadrature runs at a reduced precision (default 96 bits ~ 29 digits), ample
    for the 1e-8..1e-10 tolerances it serves.
    """
    quad_bits = min(quad_bits, T.precision)
    total = mpf(0)
    for i in range(T.d):
        lo, hi = T.top_endpoints[i], T.top_endpoints[i + 1]
        total += _branch_abs_nonlinearity_integral(
            T.branch_at_top_position(i), lo, hi, quad_bits
        )
    return total


def boundary(T):
    """Signed sums of jumps of log DT grouped by singularity class.

    B_s(T) = sum over top endpoints u_i with class s of f^r(u_i) - f^l(u_i),
    f = log DT via one-sided closure limits, with f^l(u_0) = 0 and f^r(u_d) = 0.
    Vanishes on standard maps and on smooth conjugates of them.
    """
    with workprec(T.precision):
        struct = T.singularity_structure()
        d = T.d
        f_right = [mpf(0)] * (d + 1)
        f_left = [mpf(0)] * (d + 1)
        for i in range(d):
            branch = T.branch_at_top_position(i)
            u_l, u_r = T.top_endpoints[i], T.top_endpoints[i + 1]
            _, dl = branch.eval1(u_l)
            _, dr = branch.eval1(u_r)
            f_right[i] = mpmath.log(dl)   # right limit at u_i
            f_left[i + 1] = mpmath.log(dr)  # left limit at u_{i+1}
        f_left[0] = mpf(0)
        f_right[d] = mpf(0)
        out = [mpf(0)] * struct.kappa
        for i in range(d + 1):
            out[struct.assignment[i] - 1] += f_right[i] - f_left[i]
        return out


# ----------------------------------------------------------------- C2 norms

def _c2_grid_sup(pair_eval, n):
    xs = np.linspace(0.0, 1.0, n)
    d0, d1, d2 = pair_eval(xs)
    return max(float(np.max(np.abs(d0))), float(np.max(np.abs(d1))),
               float(np.max(np.abs(d2))))


def _c2_norm_doubling(pair_eval, start=1025, rel_tol=1e-6, cap=2 ** 14 + 1):
    """sup-based C2 norm on a doubling grid until two estimates agree."""
    n = start
    est = _c2_grid_sup(pair_eval, n)
    while n < cap:
        n = 2 * (n - 1) + 1
        new = _c2_grid_sup(pair_eval, n)
        if abs(new - est) <= rel_tol * max(abs(new), 1e-30):
            return new
        est = new
    return est


def profile_c2_difference(p1, p2, **kw):
    """|| p1 - p2 ||_{C^2} on [0,1] via the doubling grid (float path)."""

    def pair(xs):
        a0, a1, a2, _ = p1._raw3(xs)
        b0, b1, b2, _ = p2._raw3(xs)
        z = np.zeros_like(xs)
        return (np.asarray(a0 - b0, dtype=float) + z,
                np.asarray(a1 - b1, dtype=float) + z,
                np.asarray(a2 - b2, dtype=float) + z)

    return _c2_norm_doubling(pair, **kw)


def profile_c2_distance_to_identity(p, **kw):
    def pair(xs):
        a0, a1, a2, _ = p._raw3(xs)
        z = np.zeros_like(xs)
        return (np.asarray(a0, dtype=float) - xs,
                np.asarray(a1, dtype=float) + z - 1.0,
                np.asarray(a2, dtype=float) + z)

    return _c2_norm_doubling(pair, **kw)


def c2_distance(T1, T2, **kw):
    """Shape-profile C^2 distance; +inf on mismatched combinatorics."""
    if T1.comb != T2.comb:
        return float("inf")
    lam = max(abs(float(a) - float(b)) for a, b in zip(T1.lambda_top, T2.lambda_top))
    rho = max(abs(float(a) - float(b)) for a, b in zip(T1.rho(), T2.rho()))
    prof = max(
        profile_c2_difference(p1, p2, **kw)
        for p1, p2 in zip(T1.profiles, T2.profiles)
    )
    return lam + rho + prof


def c2_distance_to_iets(T, **kw):
    """Distance to the standard subspace, infimum attained at lambda' = lambda_T:
    max_j |rho_j - 1| + max_j ||profile_j - Id||_{C^2}."""
    rho = max(abs(float(r) - 1.0) for r in T.rho())
    prof = max(profile_c2_distance_to_identity(p, **kw) for p in T.profiles)
    return rho + prof


def conjugate_by_diffeo(T0, h):
    """T = h o T0 o h^-1 in shape-profile coordinates.

    h must be a C^3 diffeo of [0,1] fixing the endpoints with Dh > 0 (checked on
    a verification grid plus the family certificate).
    """
    mapslib.check_unit_diffeo(h, T0.precision)
    with workprec(T0.precision):
        d = T0.d
        hinv = InverseOf(h)
        lam = []
        branches = []
        for i in range(d):
            u_l, u_r = T0.top_endpoints[i], T0.top_endpoints[i + 1]
            lam_i = h.value(u_r) - h.value(u_l)
            lam.append(lam_i)
        lam_by_label = [None] * d
        for i in range(d):
            lam_by_label[T0.comb.pi_top[i] - 1] = lam[i]
        for j in range(1, d + 1):
            branches.append(Chain([hinv, T0.branches[j - 1], h]))
        return GIET.from_branches(T0.comb, lam_by_label, branches,
                                  precision=T0.precision, total_length=mpf(1))
