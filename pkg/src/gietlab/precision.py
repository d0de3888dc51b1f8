"""Working-precision helpers.

All dynamical quantities are mpmath binary floats at a configurable precision
(default 256 bits). The global comparison tolerance is tau = 2^-(p/2): Rauzy-Veech
subtraction is catastrophically cancellative, so precision is a first-class parameter
threaded through every object rather than an ambient global.
"""

from __future__ import annotations

import mpmath
from mpmath import mp, mpf

DEFAULT_PRECISION = 256


def workprec(bits):
    """Context manager setting mpmath binary precision (with guard digits)."""
    return mp.workprec(bits + 10)


def tau(bits):
    """Global tolerance 2^-(bits/2) at the given working precision."""
    with workprec(bits):
        return mpf(2) ** (-(bits // 2))


def mpf_from_any(value, bits):
    """Coerce ints/floats/decimal strings/mpf to an mpf at the given precision."""
    with workprec(bits):
        if isinstance(value, str):
            return mpf(value)
        return mpf(value)


def decimal_str(x, bits):
    """Decimal string preserving the full working precision on round-trip."""
    dps = int(bits * 0.30103) + 5
    return mpmath.nstr(mpf(x), dps, strip_zeros=True)


def random_mpf(rng, bits):
    """Uniform mpf in (0,1) from a seeded random.Random, platform independent."""
    with workprec(bits):
        n = rng.getrandbits(bits) | 1  # avoid exact 0
        return mpf(n) / (mpf(2) ** bits)
