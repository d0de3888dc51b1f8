"""Monotone C^3 maps with chain-rule derivatives and numeric inverses.

Branches of generalized interval exchanges, conjugacies, and induced/renormalized
branches are all composition chains over a small closed-form family (affine maps,
trigonometric and polynomial perturbations of the identity, and their inverses).
Chains keep derivatives up to order 3 exact under composition, avoiding spline
drift over hundreds of compositions.

Every map evaluates along two paths:
  * mpf scalars (exact at the caller's working precision) for dynamics;
  * numpy float64 arrays (vectorized) for norm/sup sampling, where renormalized
    chains keep all intermediate values O(1) so double precision suffices.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np
from mpmath import mpf

from .errors import NotADiffeo

_TWO_PI = 2 * math.pi


def _is_array(x):
    return isinstance(x, np.ndarray)


def _sin(x):
    return np.sin(x) if _is_array(x) else mpmath.sin(x)


def _cos(x):
    return np.cos(x) if _is_array(x) else mpmath.cos(x)


class MonotoneMap:
    """Orientation-preserving C^3 map given in closed form or as a composition."""

    def value(self, x):
        return self._raw1(x)[0]

    def eval1(self, x):
        """(value, first derivative)."""
        return self._raw1(x)

    def eval3(self, x):
        """(value, d1, d2, d3)."""
        return self._raw3(x)

    def inverse_value(self, y):
        raise NotImplementedError

    def descriptor(self):
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)


class Affine(MonotoneMap):
    """x -> a*x + b with a > 0."""

    __slots__ = ("a", "b", "af", "bf")

    def __init__(self, a, b):
        self.a = a
        self.b = b
        self.af = float(a)
        self.bf = float(b)

    def _raw1(self, x):
        if _is_array(x):
            return self.af * x + self.bf, self.af
        return self.a * x + self.b, self.a

    def _raw3(self, x):
        if _is_array(x):
            return self.af * x + self.bf, self.af, 0.0, 0.0
        return self.a * x + self.b, self.a, 0, 0

    def inverse_value(self, y):
        if _is_array(y):
            return (y - self.bf) / self.af
        return (y - self.b) / self.a

    def descriptor(self):
        from .precision import decimal_str, DEFAULT_PRECISION

        return {
            "family": "affine",
            "a": decimal_str(self.a, DEFAULT_PRECISION),
            "b": decimal_str(self.b, DEFAULT_PRECISION),
        }

    @staticmethod
    def mapping(x0, x1, y0, y1):
        """The affine map sending [x0,x1] onto [y0,y1] preserving orientation."""
        a = (y1 - y0) / (x1 - x0)
        return Affine(a, y0 - a * x0)


def identity_map():
    return Affine(mpf(1), mpf(0))


def is_identity(m):
    return isinstance(m, Affine) and m.a == 1 and m.b == 0


class _FamilyDiffeo(MonotoneMap):
    """Common Newton-inverse machinery for [0,1]-fixing perturbation diffeos."""

    def inverse_value(self, y):
        if _is_array(y):
            x = y.astype(float).copy()
            for _ in range(60):
                v, d = self._raw1(x)
                step = (v - y) / d
                x -= step
                if np.max(np.abs(step)) < 1e-15:
                    break
            return x
        # float warm start, then mpf Newton (quadratic convergence)
        yf = float(y)
        xf = min(max(yf, 0.0), 1.0)
        for _ in range(40):
            v, d = self._float_raw1(xf)
            step = (v - yf) / d
            xf -= step
            if abs(step) < 1e-14:
                break
        x = mpf(xf)
        digits = mpmath.mp.dps
        its = max(2, math.ceil(math.log2(max(digits, 16) / 12.0)) + 1)
        for _ in range(its):
            v, d = self._raw1(x)
            x = x - (v - y) / d
        return x

    def _float_raw1(self, x):
        v, d = self._raw1(np.asarray([x]))
        d = d[0] if _is_array(d) else d
        return float(v[0]), float(d)


class SinePerturbation(_FamilyDiffeo):
    """x -> x - (a / 2*pi*k) * sin(2*pi*k*x); diffeo of [0,1] iff |a| < 1."""

    __slots__ = ("amplitude", "frequency", "ampf")

    def __init__(self, amplitude, frequency=1):
        self.amplitude = amplitude
        self.frequency = int(frequency)
        self.ampf = float(amplitude)
        if not abs(self.ampf) < 1:
            raise NotADiffeo("sine perturbation requires |amplitude| < 1")

    def _raw3(self, x):
        if _is_array(x):
            a, w = self.ampf, _TWO_PI * self.frequency
            wx = w * x
            s, c = np.sin(wx), np.cos(wx)
        else:
            a = self.amplitude
            w = 2 * mpmath.pi * self.frequency
            wx = w * x
            s, c = mpmath.sin(wx), mpmath.cos(wx)
        return x - (a / w) * s, 1 - a * c, a * w * s, a * w * w * c

    def _raw1(self, x):
        if _is_array(x):
            a, w = self.ampf, _TWO_PI * self.frequency
            wx = w * x
            return x - (a / w) * np.sin(wx), 1 - a * np.cos(wx)
        a = self.amplitude
        w = 2 * mpmath.pi * self.frequency
        wx = w * x
        return x - (a / w) * mpmath.sin(wx), 1 - a * mpmath.cos(wx)

    def derivative_lower_bound(self):
        return 1 - abs(self.ampf)

    def descriptor(self):
        from .precision import decimal_str, DEFAULT_PRECISION

        return {
            "family": "sine",
            "amplitude": decimal_str(self.amplitude, DEFAULT_PRECISION),
            "frequency": self.frequency,
        }


class CubicPerturbation(_FamilyDiffeo):
    """x -> x + a * x(1-x)(x-c): polynomial perturbation fixing 0 and 1.

    P(x) = -x^3 + (1+c)x^2 - cx; monotone iff 1 + a*P'(x) > 0 on [0,1], which is
    certified from the exact extrema of the quadratic P'.
    """

    __slots__ = ("a", "c", "af", "cf")

    def __init__(self, a, c):
        self.a = a
        self.c = c
        self.af = float(a)
        self.cf = float(c)
        if not self.derivative_lower_bound() > 0:
            raise NotADiffeo("cubic perturbation derivative certificate failed")

    def derivative_lower_bound(self):
        a, c = self.af, self.cf
        # P'(x) = -3x^2 + 2(1+c)x - c; candidates: endpoints and vertex
        cands = [-c, c - 1.0]
        v = (1.0 + c) / 3.0
        if 0.0 <= v <= 1.0:
            cands.append((1.0 + c) ** 2 / 3.0 - c)
        return 1.0 + min(a * p for p in cands)

    def _raw3(self, x):
        if _is_array(x):
            a, c = self.af, self.cf
        else:
            a, c = self.a, self.c
        p = -(x * x * x) + (1 + c) * x * x - c * x
        dp = -3 * x * x + 2 * (1 + c) * x - c
        d2p = -6 * x + 2 * (1 + c)
        return x + a * p, 1 + a * dp, a * d2p, -6 * a

    def _raw1(self, x):
        if _is_array(x):
            a, c = self.af, self.cf
        else:
            a, c = self.a, self.c
        p = -(x * x * x) + (1 + c) * x * x - c * x
        dp = -3 * x * x + 2 * (1 + c) * x - c
        return x + a * p, 1 + a * dp

    def descriptor(self):
        from .precision import decimal_str, DEFAULT_PRECISION

        return {
            "family": "cubic",
            "a": decimal_str(self.a, DEFAULT_PRECISION),
            "c": decimal_str(self.c, DEFAULT_PRECISION),
        }


class InverseOf(MonotoneMap):
    """The inverse of a monotone map, with derivatives by the inverse rule."""

    __slots__ = ("inner",)

    def __init__(self, inner):
        self.inner = inner

    def value(self, x):
        return self.inner.inverse_value(x)

    def _raw1(self, x):
        t = self.inner.inverse_value(x)
        _, p = self.inner._raw1(t)
        return t, 1 / p

    def _raw3(self, x):
        t = self.inner.inverse_value(x)
        _, p, q, r = self.inner._raw3(t)
        p3 = p * p * p
        return t, 1 / p, -q / p3, (3 * q * q - p * r) / (p3 * p * p)

    def inverse_value(self, y):
        return self.inner.value(y)

    def descriptor(self):
        return {"family": "inverse", "inner": self.inner.descriptor()}


def _cancels(a, b):
    """Whether a followed by b is exactly the identity (shared-object inverse pair)."""
    return ((isinstance(b, InverseOf) and b.inner is a)
            or (isinstance(a, InverseOf) and a.inner is b))


class Chain(MonotoneMap):
    """Composition chain; maps applied left to right (first element first)."""

    __slots__ = ("maps",)

    def __init__(self, maps):
        flat = []
        for m in maps:
            if isinstance(m, Chain):
                flat.extend(m.maps)
            elif is_identity(m):
                continue
            else:
                flat.append(m)
        # peepholes: cancel exact inverse pairs (h then h^-1, or vice versa)
        # and merge adjacent affine maps, so iterated induction on standard
        # and conjugated-standard maps stays O(1) per branch
        merged = []
        for m in flat:
            if merged and _cancels(merged[-1], m):
                merged.pop()
                continue
            if merged and isinstance(m, Affine) and isinstance(merged[-1], Affine):
                f = merged.pop()
                g = Affine(m.a * f.a, m.a * f.b + m.b)
                # normalization wrappers merge to the identity up to the last
                # few bits (e.g. 1/(r-l) times r-l); snap those, or the
                # conjugation-structure peepholes never fire on rebuilt maps
                eps = mpf(2) ** -(3 * mpmath.mp.prec // 4)
                if abs(g.a - 1) <= eps and abs(g.b) <= eps:
                    continue
                merged.append(g)
            else:
                merged.append(m)
        if not merged:
            merged = [identity_map()]
        self.maps = tuple(merged)

    def value(self, x):
        for m in self.maps:
            x = m.value(x)
        return x

    def _raw1(self, x):
        y, y1 = x, 1
        for m in self.maps:
            g0, g1 = m._raw1(y)
            y, y1 = g0, g1 * y1
        return y, y1

    def _raw3(self, x):
        y, y1, y2, y3 = x, 1, 0, 0
        for m in self.maps:
            g0, g1, g2, g3 = m._raw3(y)
            ny1 = g1 * y1
            ny2 = g2 * y1 * y1 + g1 * y2
            ny3 = g3 * y1 * y1 * y1 + 3 * g2 * y1 * y2 + g1 * y3
            y, y1, y2, y3 = g0, ny1, ny2, ny3
        return y, y1, y2, y3

    def inverse_value(self, y):
        for m in reversed(self.maps):
            y = m.inverse_value(y)
        return y

    def descriptor(self):
        return {"family": "chain", "maps": [m.descriptor() for m in self.maps]}


def compose(after, before):
    """after o before, with affine peephole."""
    if is_identity(after):
        return before
    if is_identity(before):
        return after
    return Chain([before, after])


class ScaledConjugation(MonotoneMap):
    """s^-1 o (g_n o ... o g_1) o s with s(x) = ratio * x.

    The representation used for renormalized induced branches: each level's word is
    written over the previous level's renormalized branches, conjugated by one
    moderate scaling, so every intermediate value stays O(1) on the float path.
    """

    __slots__ = ("children", "ratio", "ratiof")

    def __init__(self, children, ratio):
        self.children = tuple(children)
        self.ratio = ratio
        self.ratiof = float(ratio)

    def value(self, x):
        r = self.ratiof if _is_array(x) else self.ratio
        y = r * x
        for c in self.children:
            y = c.value(y)
        return y / r

    def _raw1(self, x):
        r = self.ratiof if _is_array(x) else self.ratio
        y, y1 = r * x, r
        for c in self.children:
            g0, g1 = c._raw1(y)
            y, y1 = g0, g1 * y1
        return y / r, y1 / r

    def _raw3(self, x):
        r = self.ratiof if _is_array(x) else self.ratio
        y, y1, y2, y3 = r * x, r, 0, 0
        for c in self.children:
            g0, g1, g2, g3 = c._raw3(y)
            ny1 = g1 * y1
            ny2 = g2 * y1 * y1 + g1 * y2
            ny3 = g3 * y1 * y1 * y1 + 3 * g2 * y1 * y2 + g1 * y3
            y, y1, y2, y3 = g0, ny1, ny2, ny3
        return y / r, y1 / r, y2 / r, y3 / r

    def inverse_value(self, y):
        r = self.ratiof if _is_array(y) else self.ratio
        y = r * y
        for c in reversed(self.children):
            y = c.inverse_value(y)
        return y / r

    def descriptor(self):
        from .precision import decimal_str, DEFAULT_PRECISION

        return {
            "family": "scaled_word",
            "ratio": decimal_str(self.ratio, DEFAULT_PRECISION),
            "children": [c.descriptor() for c in self.children],
        }


class PiecewiseLinear(MonotoneMap):
    """Increasing piecewise-linear map through the nodes (xs[i], ys[i]).

    Used for numeric conjugacies built by matching partition endpoints. The
    derivative is the segment slope (taken from the right at nodes); second and
    third derivatives are reported as zero away from nodes.
    """

    __slots__ = ("xs", "ys", "xf", "yf", "slopes", "slopesf")

    def __init__(self, xs, ys):
        if len(xs) != len(ys) or len(xs) < 2:
            raise ValueError("need matching node lists with at least two nodes")
        self.xs = list(xs)
        self.ys = list(ys)
        self.slopes = [
            (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]) for i in range(len(xs) - 1)
        ]
        if any(s <= 0 for s in self.slopes):
            raise NotADiffeo("piecewise-linear nodes are not strictly increasing")
        self.xf = np.array([float(v) for v in xs])
        self.yf = np.array([float(v) for v in ys])
        self.slopesf = np.array([float(s) for s in self.slopes])

    def _segment(self, x):
        import bisect as _bisect

        i = _bisect.bisect_right(self.xs, x) - 1
        return min(max(i, 0), len(self.slopes) - 1)

    def _segment_array(self, x):
        i = np.searchsorted(self.xf, x, side="right") - 1
        return np.clip(i, 0, len(self.slopesf) - 1)

    def value(self, x):
        if _is_array(x):
            return np.interp(x, self.xf, self.yf)
        i = self._segment(x)
        return self.ys[i] + self.slopes[i] * (x - self.xs[i])

    def _raw1(self, x):
        if _is_array(x):
            return np.interp(x, self.xf, self.yf), self.slopesf[self._segment_array(x)]
        i = self._segment(x)
        return self.ys[i] + self.slopes[i] * (x - self.xs[i]), self.slopes[i]

    def _raw3(self, x):
        v, d = self._raw1(x)
        if _is_array(x):
            z = np.zeros_like(v)
            return v, d, z, z
        return v, d, 0, 0

    def inverse_value(self, y):
        if _is_array(y):
            return np.interp(y, self.yf, self.xf)
        import bisect as _bisect

        i = _bisect.bisect_right(self.ys, y) - 1
        i = min(max(i, 0), len(self.slopes) - 1)
        return self.xs[i] + (y - self.ys[i]) / self.slopes[i]

    def descriptor(self):
        from .precision import decimal_str, DEFAULT_PRECISION

        return {
            "family": "pwlinear",
            "xs": [decimal_str(v, DEFAULT_PRECISION) for v in self.xs],
            "ys": [decimal_str(v, DEFAULT_PRECISION) for v in self.ys],
        }


def map_from_descriptor(desc, bits, memo=None):
    """Rebuild a map from its JSON descriptor at the given precision.

    Identical sub-descriptors within one memo scope rebuild to one shared
    object, preserving the object-identity structure (shared conjugating
    diffeos) that the composition peepholes and orbit fast paths rely on.
    """
    import json as _json

    from .precision import mpf_from_any

    if memo is None:
        memo = {}
    key = _json.dumps(desc, sort_keys=True)
    hit = memo.get(key)
    if hit is not None:
        return hit
    built = _build_from_descriptor(desc, bits, memo)
    memo[key] = built
    return built


def _build_from_descriptor(desc, bits, memo):
    from .precision import mpf_from_any

    fam = desc["family"]
    if fam == "affine":
        return Affine(mpf_from_any(desc["a"], bits), mpf_from_any(desc["b"], bits))
    if fam == "sine":
        return SinePerturbation(
            mpf_from_any(desc["amplitude"], bits), int(desc.get("frequency", 1))
        )
    if fam == "cubic":
        return CubicPerturbation(
            mpf_from_any(desc["a"], bits), mpf_from_any(desc["c"], bits)
        )
    if fam == "inverse":
        return InverseOf(map_from_descriptor(desc["inner"], bits, memo))
    if fam == "chain":
        return Chain([map_from_descriptor(d, bits, memo) for d in desc["maps"]])
    if fam == "pwlinear":
        return PiecewiseLinear(
            [mpf_from_any(v, bits) for v in desc["xs"]],
            [mpf_from_any(v, bits) for v in desc["ys"]],
        )
    if fam == "identity":
        return identity_map()
    raise ValueError(f"unknown map family {fam!r}")


def check_unit_diffeo(m, bits, grid=257):
    """Certify a candidate [0,1] diffeo: endpoint fixing and Dm > 0.

    Uses the family's analytic lower bound when available, always backed by a
    verification grid.
    """
    from .precision import tau as _tau, workprec

    with workprec(bits):
        t = _tau(bits)
        if abs(m.value(mpf(0))) > t or abs(m.value(mpf(1)) - 1) > t:
            raise NotADiffeo("map does not fix the endpoints of [0,1]")
        lb = getattr(m, "derivative_lower_bound", None)
        if lb is not None and lb() <= 0:
            raise NotADiffeo("family derivative certificate failed")
        xs = np.linspace(0.0, 1.0, grid)
        _, d = m._raw1(xs)
        d = np.broadcast_to(np.asarray(d, dtype=float), xs.shape)
        if not np.all(d > 0):
            raise NotADiffeo("derivative not positive on verification grid")
    return True
