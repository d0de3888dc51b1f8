"""Numeric conjugacy, single-orbit approximation certificates, orbit-variation
bounds, and the Hölder-exponent fit.

The pipeline follows the renormalization regularity theory: a piecewise-linear
conjugacy h_k is read off by matching level-k partition endpoints; pairs of
points are approximated by points of the orbit of 0 with certified visit
counts; variations of phi = log Dh reduce to exact Birkhoff sums of -log DT
along that orbit; and the Hölder exponent is the ratio of fitted decay rates
for floor lengths and phi-variations against the pair scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
from mpmath import mpf
from scipy import stats

from .errors import (
    DepthBudget,
    FloorBudgetExceeded,
    NotSameFloor,
    PartitionMismatch,
    RangeError,
    WindowExhausted,
)
from .birkhoff import (
    LogSlopeObservable,
    _as_observable,
    birkhoff_sum,
    broken_sup_estimate,
    special_sums,
)
from .giet import c2_distance_to_iets
from .induction import as_chain, chain_for, renormalized_map
from .maps import PiecewiseLinear
from .precision import workprec
from .towers import build_partition, scale_of_pair

__all__ = [
    "OrbitPoint",
    "ApproximationCertificate",
    "RegularityReport",
    "orbit_of_zero",
    "numeric_conjugacy",
    "one_floor_subpairs",
    "phi_estimates",
    "single_orbit_approximation",
    "verify_certificate",
    "orbit_variation_bound",
    "holder_fit",
]


# ------------------------------------------------------------- orbit of zero

def orbit_of_zero(chain, n):
    """Points z_0 = 0, z_1 = T(0), ..., z_n, cached on the chain.

    The orbit of 0 passes through branch endpoints, so iteration is
    closure-extended (each z is a floor left endpoint of every partition).
    Alongside the points, the prefix products of DT are cached (products stay
    O(1) by the cohomological boundedness of log DT), so any Birkhoff sum of
    log DT between two orbit indices is one division and one logarithm."""
    chain = as_chain(chain)
    if chain._orbit is None:
        chain._orbit = [mpf(0)]
        chain._orbit_floats = [0.0]
        chain._orbit_dprods = [mpf(1)]
        chain._orbit_gen = chain.T.orbit_slopes(mpf(0), strict=False)
    orbit = chain._orbit
    floats = chain._orbit_floats
    prods = chain._orbit_dprods
    with workprec(chain.T.precision):
        while len(orbit) <= n:
            x, d1 = next(chain._orbit_gen)
            prods.append(prods[-1] * d1)
            orbit.append(x)
            floats.append(float(x))
    return orbit


def _orbit_log_sum(chain, p, q):
    """S_{q-p}(log DT)(z_p) along the cached orbit of zero (p <= q)."""
    orbit_of_zero(chain, max(p, q))
    return mpmath.log(chain._orbit_dprods[q] / chain._orbit_dprods[p])


# ---------------------------------------------------------- numeric conjugacy

def numeric_conjugacy(T, T0, k):
    """Piecewise-linear h_k matching the sorted level-k floor endpoints of T
    to those of T0 (h_k(0) = 0, h_k(1) = 1, strictly increasing)."""
    chain = chain_for(T)
    chain0 = chain_for(T0)
    with workprec(T.precision):
        part = build_partition(chain, k)
        part0 = build_partition(chain0, k)
        xs = sorted(part.floor_endpoints)
        ys = sorted(part0.floor_endpoints)
        if len(xs) != len(ys):
            raise PartitionMismatch(
                f"level-{k} floor counts differ: {len(xs) - 1} vs {len(ys) - 1}"
            )
        return PiecewiseLinear(xs, ys)


# ------------------------------------------------------ certificates

@dataclass
class OrbitPoint:
    index: int
    coordinate: object      # mpf, equals T^index(0)
    level: int
    floor: object           # FloorAddress at its level


@dataclass
class CertificateStep:
    level: int              # intersections counted with I_level
    lo_index: int
    hi_index: int
    count: int
    bound: int
    side: str               # "bridge" | "x" | "y"


@dataclass
class ApproximationCertificate:
    k0: int
    depth: int
    x_points: list          # OrbitPoint per level k0..depth
    y_points: list
    steps: list             # CertificateStep audit trail

    def deepest_pair(self):
        return self.x_points[-1], self.y_points[-1]


def _count_visits(orbit, lo, hi, lam):
    """Card{ l in [lo, hi) : z_l in I = [0, lam) }."""
    return sum(1 for l in range(lo, hi) if orbit[l] < lam)


def _count_visits_cached(chain, lo, hi, lam):
    """_count_visits against the cached orbit, with a float prefilter so only
    borderline points pay an exact comparison."""
    orbit = orbit_of_zero(chain, max(lo, hi))
    floats = chain._orbit_floats
    lam_lo, lam_hi = float(lam) - 1e-13, float(lam) + 1e-13
    count = 0
    for l in range(lo, hi):
        zf = floats[l]
        if zf < lam_lo:
            count += 1
        elif zf <= lam_hi and orbit[l] < lam:
            count += 1
    return count


def _paper_matrix_norm(chain, k):
    """Norm of the k-th incidence matrix A_k (mapping level k to k+1)."""
    chain.ensure(k + 1)
    return chain.record(k + 1).matrix.norm()


def single_orbit_approximation(chain, x, y, depth=None, extra_levels=2):
    """Approximate x and y by orbit-of-0 points with certified visit counts.

    Requires [x, y] inside a single floor of P_{k0-1} (k0 = pair scale); the
    two-adjacent-floor case must be split at the shared endpoint by the caller.
    At each level the next point is found by forward search within the proven
    window 2 * max_l q_{k+2}^l; visit counts to I_k between consecutive points
    are recorded together with their bounds 2*||A_k||*||A_{k+1}|| (and
    2*||A_{k0-1}||*||A_{k0}|| for the initial bridge).
    """
    chain = as_chain(chain)
    T = chain.T
    with workprec(T.precision):
        x, y = (x, y) if x <= y else (y, x)
        sr = scale_of_pair(chain, x, y)
        k0 = sr.k0
        if sr.covering != "one-floor":
            raise NotSameFloor(
                "pair spans two adjacent floors; split at the shared endpoint"
            )
        if k0 < 1:
            raise RangeError("pair scale 0: points are not inside a level-0 floor pair")
        if depth is None:
            depth = k0 + extra_levels
        if depth < k0:
            raise DepthBudget(f"requested depth {depth} is above scale {k0}")
        chain.ensure(depth + 2)

        def floor_of(level, pt):
            return build_partition(chain, level).locate_halfopen(pt)

        def search_forward(start, level_kp1, target, window):
            # extend the orbit lazily in chunks (the expected hit time is far
            # below the proven window) and prefilter candidates with the
            # cached float orbit before the exact membership check
            part = build_partition(chain, level_kp1)
            l, r = part.floor_interval(target)
            lf, rf = float(l) - 1e-13, float(r) + 1e-13
            orbit = orbit_of_zero(chain, start)
            floats = chain._orbit_floats
            for t in range(start, start + window + 1):
                if t >= len(orbit):
                    orbit_of_zero(chain, min(start + window, t + 4095))
                zf = floats[t]
                if lf <= zf <= rf and l <= orbit[t] < r:
                    return t
            raise WindowExhausted(
                f"no orbit entry into the target level-{level_kp1} floor within "
                f"{window} steps from index {start}"
            )

        # initial point: first orbit point in the level-k0 floor of x, found by
        # forward search from 0 (minimality makes the orbit dense)
        budget0 = 2 * sum(chain.heights(min(k0 + 2, depth + 2)))
        fx0 = floor_of(k0, x)
        p0 = search_forward(0, k0, fx0, budget0)
        orbit = orbit_of_zero(chain, p0)
        x_pts = [OrbitPoint(p0, orbit[p0], k0, fx0)]

        window0 = 2 * max(chain.heights(min(k0 + 1, depth + 2)))
        fy0 = floor_of(k0, y)
        q0 = search_forward(p0, k0, fy0, window0)
        orbit = orbit_of_zero(chain, q0)
        y_pts = [OrbitPoint(q0, orbit[q0], k0, fy0)]

        steps = []
        lo, hi = min(p0, q0), max(p0, q0)
        bound0 = 2 * _paper_matrix_norm(chain, k0 - 1) * _paper_matrix_norm(chain, k0)
        steps.append(
            CertificateStep(k0 - 1, lo, hi,
                            _count_visits_cached(chain, lo, hi, chain.lam(k0 - 1)),
                            bound0, "bridge")
        )

        for k in range(k0, depth):
            window = 2 * max(chain.heights(k + 2))
            bound = 2 * _paper_matrix_norm(chain, k) * _paper_matrix_norm(chain, k + 1)
            for side, pts, pt in (("x", x_pts, x), ("y", y_pts, y)):
                target = floor_of(k + 1, pt)
                p = pts[-1].index
                q = search_forward(p, k + 1, target, window)
                orbit = orbit_of_zero(chain, q)
                pts.append(OrbitPoint(q, orbit[q], k + 1, target))
                steps.append(
                    CertificateStep(k, p, q,
                                    _count_visits_cached(chain, p, q, chain.lam(k)),
                                    bound, side)
                )
        return ApproximationCertificate(k0, depth, x_pts, y_pts, steps)


def phi_estimates(T, T0, k, stability_tol=None):
    """phi = log Dh at the interior level-k partition endpoints.

    Dh is estimated by symmetric finite differences of the numeric conjugacy
    on the endpoint grid and kept only where the level-(k-1) estimate agrees
    within the stability tolerance. The default tolerance is ten times the
    grid mesh: symmetric differences of a C^2 conjugacy converge at O(mesh),
    so points failing that rate are flagged as unstable. Returns
    (points, phi_values, mask) as parallel lists.
    """
    if k < 1:
        raise RangeError("phi estimates need level k >= 1")
    with workprec(T.precision):
        hk = numeric_conjugacy(T, T0, k)
        hprev = numeric_conjugacy(T, T0, k - 1)
        pts, vals, mask = [], [], []
        xs, ys = hk.xs, hk.ys
        if stability_tol is None:
            mesh = max(xs[i + 1] - xs[i] for i in range(len(xs) - 1))
            tol = 10 * mesh
        else:
            tol = stability_tol
        for i in range(1, len(xs) - 1):
            dh = (ys[i + 1] - ys[i - 1]) / (xs[i + 1] - xs[i - 1])
            _, dprev = hprev._raw1(xs[i])
            pts.append(xs[i])
            vals.append(mpmath.log(dh))
            mask.append(abs(dh - dprev) <= tol)
        return pts, vals, mask


def one_floor_subpairs(chain, x, y, max_splits=6):
    """Split [x, y] at shared floor endpoints until every subpair is a
    one-floor pair at its own scale. Split points are nudged inward by an
    eighth of the smaller side so each subpair stays strictly inside its floor.
    """
    chain = as_chain(chain)
    with workprec(chain.T.precision):
        pending = [(mpf(x), mpf(y), 0)]
        out = []
        while pending:
            a, b, splits = pending.pop()
            sr = scale_of_pair(chain, a, b)
            if sr.covering == "one-floor":
                out.append((a, b))
                continue
            if splits >= max_splits:
                raise NotSameFloor(
                    f"pair still spans adjacent floors after {max_splits} splits"
                )
            s = sr.shared_endpoint
            eps = min(s - a, b - s) / 8
            pending.append((a, s - eps, splits + 1))
            pending.append((s + eps, b, splits + 1))
        out.sort(key=lambda p: p[0])
        return out


def verify_certificate(chain, cert, x, y, orbit=None):
    """Independent audit of a certificate: re-iterates the orbit of 0 from
    scratch (by plain branch stepping, not the cached fast iterator), rechecks
    coordinates, floor memberships (of the orbit points and of x, y), and
    recounts every visit count against its bound. A precomputed independent
    orbit may be passed in to amortize batch verification."""
    chain = as_chain(chain)
    T = chain.T
    problems = []
    with workprec(T.precision):
        top = max(p.index for p in cert.x_points + cert.y_points)
        if orbit is None:
            z = mpf(0)
            fresh = [z]
            for _ in range(top):
                z = T.orbit_step(z)
                fresh.append(z)
        else:
            if len(orbit) <= top:
                raise RangeError("supplied verification orbit is too short")
            fresh = orbit
        for side, pts, pt in (("x", cert.x_points, x), ("y", cert.y_points, y)):
            for op in pts:
                if abs(fresh[op.index] - op.coordinate) > T.tau * max(1, op.index):
                    problems.append(f"{side}: coordinate mismatch at index {op.index}")
                part = build_partition(chain, op.level)
                if part.locate_halfopen(fresh[op.index]) != op.floor:
                    problems.append(f"{side}: floor mismatch at level {op.level}")
                if part.locate_halfopen(pt) != op.floor:
                    problems.append(
                        f"{side}: approximant not in the target point's floor "
                        f"at level {op.level}"
                    )
        # float shadow of the verification orbit: exact comparisons only for
        # borderline points (the shadow is derived from `fresh`, so the audit
        # stays independent of the construction-side caches)
        shadow = [float(z) for z in fresh]
        for st in cert.steps:
            lam = chain.lam(st.level)
            lam_lo, lam_hi = float(lam) - 1e-13, float(lam) + 1e-13
            n = sum(
                1 for l in range(st.lo_index, st.hi_index)
                if shadow[l] < lam_lo or (shadow[l] <= lam_hi and fresh[l] < lam)
            )
            if n != st.count:
                problems.append(f"recount mismatch at level {st.level}: {n} vs {st.count}")
            if n > st.bound:
                problems.append(
                    f"visit count {n} exceeds bound {st.bound} at level {st.level}"
                )
    return (len(problems) == 0), problems


# ------------------------------------------------------ orbit variation bound

def orbit_variation_bound(chain, f, p, q, k):
    """|S_{q-p} f(z_p)| for orbit-of-0 indices p < q in the same level-k floor,
    with the level-k decomposition bound N_k(p,q)*||f_k|| + R_k^j."""
    chain = as_chain(chain)
    f = _as_observable(f)
    T = chain.T
    if p > q:
        p, q = q, p
    with workprec(T.precision):
        orbit = orbit_of_zero(chain, q)
        part = build_partition(chain, k)
        fp = part.locate_halfopen(orbit[p])
        fq = part.locate_halfopen(orbit[q])
        if fp != fq:
            raise NotSameFloor(
                f"orbit points {p} and {q} lie in different level-{k} floors"
            )
        estimate = abs(birkhoff_sum(T, f, orbit[p], q - p, strict=False))
        n_visits = _count_visits(orbit, p, q, chain.lam(k))
        sup_fk = special_sums(chain, f, k).max_sup_norm()
        rhat = broken_sup_estimate(chain, f, k, fp.tower)
        parts = {
            "N_k": n_visits,
            "sup_f_k": sup_fk,
            "R_hat": rhat,
            "bound": n_visits * mpf(sup_fk) + rhat,
            "tower": fp.tower,
            "floor_height": fp.height,
        }
        return estimate, parts


# ----------------------------------------------------------------- Hölder fit

@dataclass
class RegularityReport:
    lambda1: float | None
    lambda2: float | None
    alpha: float | None
    holder_constant: float | None
    quantitative_distance: float | None
    flags: list
    per_pair: list          # dicts: {k0, dx, dphi, split}
    fit_details: dict


def _theil_sen_envelope(points, pick):
    """Theil-Sen line through per-k0 extremes; points = [(k0, value)]."""
    by_k0 = {}
    for k0, v in points:
        by_k0.setdefault(k0, []).append(v)
    ks = sorted(by_k0)
    ys = [pick(by_k0[k]) for k in ks]
    if len(ks) < 2:
        return None, None, ks, ys
    res = stats.theilslopes(ys, ks)
    return float(res[0]), float(res[1]), ks, ys


def _phi_variation(chain, cert):
    """|phi(x) - phi(y)| through the certificate: the cohomological equation
    phi(Tz) - phi(z) = -log DT(z) telescopes to one exact Birkhoff sum of
    -log DT between the deepest matched orbit indices."""
    xp, yp = cert.deepest_pair()
    p, q = xp.index, yp.index
    if p > q:
        p, q = q, p
    return abs(_orbit_log_sum(chain, p, q))


def _c2_decay_fit(T, kmax):
    """Fitted C, rho with d(R^m T, standard family) <= C * rho^m."""
    series = []
    for m in range(1, kmax + 1):
        series.append(c2_distance_to_iets(renormalized_map(T, m)))
    logs = [math.log(max(v, 1e-300)) for v in series]
    ks = list(range(1, kmax + 1))
    if len(ks) >= 2:
        res = stats.theilslopes(logs, ks)
        return math.exp(float(res[1])), math.exp(float(res[0])), series
    return series[0], 1.0, series


def holder_fit(T, T0, sample_pairs, depth, extra_levels=2, stability_tol=None):
    """Fit the Hölder data (lambda1, lambda2, alpha) over a batch of pairs.

    For each pair: the scale k0, the separation |x-y|, and |phi(x)-phi(y)|
    via a single-orbit approximation certificate (two-adjacent-floor pairs are
    split at the shared endpoint into two one-floor pairs). The decay rates are
    Theil-Sen fits over per-k0 extremes: the lower envelope of log|x-y| gives
    lambda1 and the upper envelope of log|dphi| gives lambda2; alpha is their
    log-ratio. The quantitative distance estimate is
    sup|h - Id| + sup|Dh - 1| + fitted Hölder constant, with the fitted C(T),
    rho of the renormalization C^2-decay recorded as the theorem's input.
    """
    chain = chain_for(T)
    f_obs = LogSlopeObservable(sign=-1)
    flags = []
    per_pair = []
    with workprec(T.precision):
        for (x, y) in sample_pairs:
            x, y = mpf(x), mpf(y)
            if x > y:
                x, y = y, x
            try:
                sr = scale_of_pair(chain, x, y)
            except Exception as exc:  # noqa: BLE001 - per-pair failures recorded
                per_pair.append({"k0": None, "dx": float(abs(y - x)),
                                 "dphi": None, "split": False,
                                 "error": type(exc).__name__})
                continue
            split = sr.covering == "two-adjacent-floors"
            try:
                subpairs = one_floor_subpairs(chain, x, y)
            except Exception as exc:  # noqa: BLE001
                per_pair.append({"k0": sr.k0, "dx": float(abs(y - x)),
                                 "dphi": None, "split": split,
                                 "error": type(exc).__name__})
                continue
            dphi = mpf(0)
            failed = None
            for (a, b) in subpairs:
                try:
                    cert = single_orbit_approximation(
                        chain, a, b, depth=min(sr.k0 + extra_levels, depth)
                    )
                    dphi += _phi_variation(chain, cert)
                except Exception as exc:  # noqa: BLE001
                    failed = type(exc).__name__
                    break
            entry = {"k0": sr.k0, "dx": float(abs(y - x)), "split": split}
            if failed is None:
                entry["dphi"] = float(dphi)
            else:
                entry["dphi"] = None
                entry["error"] = failed
            per_pair.append(entry)

        good = [e for e in per_pair if e.get("dphi") is not None]
        dphi_floor = 1e-60
        nonzero = [e for e in good if e["dphi"] > dphi_floor]
        affine_degenerate = len(good) > 0 and len(nonzero) == 0
        if affine_degenerate:
            flags.append("affine-degenerate")

        s1, b1, ks1, _ = _theil_sen_envelope(
            [(e["k0"], math.log(e["dx"])) for e in good], min
        )
        lam1 = math.exp(s1) if s1 is not None else None
        s2 = b2 = None
        lam2 = None
        if nonzero:
            s2, b2, ks2, _ = _theil_sen_envelope(
                [(e["k0"], math.log(e["dphi"])) for e in nonzero], max
            )
            lam2 = math.exp(s2) if s2 is not None else None

        alpha = None
        holder_c = None
        if lam1 is not None and lam2 is not None and 0 < lam1 < 1:
            if lam2 >= 1:
                flags.append("insufficient-decay")
            else:
                ratio = math.log(lam2) / math.log(lam1)
                # ratio > 1 means phi values shrink faster than the pair
                # separations: phi is Lipschitz (or better), so the usable
                # Hölder exponent saturates at 1
                alpha = min(ratio, 1.0)
                holder_c = math.exp(b2)
                if ratio > 1:
                    flags.append("lipschitz-saturated")

        # Hölder-quotient audit with the fitted (capped) exponent
        quotient = None
        quotient_exponent = None
        if nonzero and lam1 is not None and lam2 is not None and lam2 < 1:
            quotient_exponent = alpha if alpha is not None and 0 < alpha <= 1 else 1.0
            quotient = max(
                (e["dphi"] / e["dx"] ** quotient_exponent for e in nonzero),
                default=None,
            )

        # quantitative conjugacy distance through the deepest numeric conjugacy
        qd = None
        c_fit = rho_fit = None
        c2_series = None
        try:
            level = depth
            hk = None
            while level >= 1:
                try:
                    hk = numeric_conjugacy(T, T0, level)
                    break
                except FloorBudgetExceeded:
                    level -= 1
            if hk is None:
                raise PartitionMismatch("no affordable conjugacy level")
            sup_h = max(abs(yv - xv) for xv, yv in zip(hk.xs, hk.ys))
            _, phis, mask = phi_estimates(T, T0, level, stability_tol)
            kept = [p for p, ok in zip(phis, mask) if ok]
            if not kept:
                flags.append("phi-mask-empty")
                kept = phis
            sup_phi = max((abs(p) for p in kept), default=mpf(0))
            seminorm = holder_c if holder_c is not None else 0.0
            qd = float(sup_h) + float(sup_phi) + float(seminorm)
            c_fit, rho_fit, c2_series = _c2_decay_fit(T, depth)
        except PartitionMismatch:
            flags.append("partition-mismatch")

        return RegularityReport(
            lambda1=lam1,
            lambda2=lam2,
            alpha=alpha,
            holder_constant=holder_c,
            quantitative_distance=qd,
            flags=flags,
            per_pair=per_pair,
            fit_details={
                "log_lambda1_slope": s1,
                "log_lambda1_intercept": b1,
                "log_lambda2_slope": s2,
                "log_lambda2_intercept": b2,
                "holder_quotient_max": float(quotient) if quotient is not None else None,
                "holder_quotient_exponent": quotient_exponent,
                "c2_decay_C": c_fit,
                "c2_decay_rho": rho_fit,
                "c2_series": c2_series,
                "pairs_used": len(good),
                "pairs_nonzero": len(nonzero),
            },
        )
