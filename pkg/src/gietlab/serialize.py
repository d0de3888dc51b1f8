"""JSON serialization for interval exchange maps and induction logs.

Numeric fields are decimal strings so a document written at one precision
reconstructs bit-compatibly at the same precision; integers (matrix entries,
heights) are exact decimal strings as well.
"""

from __future__ import annotations

import json

from .combinatorics import validate_combinatorics
from .errors import ConfigError
from .giet import GIET, StandardIET
from .maps import map_from_descriptor
from .precision import DEFAULT_PRECISION, decimal_str, mpf_from_any, workprec

__all__ = [
    "giet_to_dict",
    "giet_from_dict",
    "giet_to_json",
    "giet_from_json",
    "induction_log_lines",
]

SCHEMA_VERSION = 1


def giet_to_dict(T):
    """JSON-ready document: combinatorics, decimal-string coordinates, and
    profile family descriptors."""
    with workprec(T.precision):
        return {
            "schema": SCHEMA_VERSION,
            "combinatorics": {
                "top": list(T.comb.pi_top),
                "bottom": list(T.comb.pi_bottom),
            },
            "lambda_top": [decimal_str(v, T.precision) for v in T.lambda_top],
            "log_slopes": [decimal_str(v, T.precision) for v in T.log_slopes],
            "profile": [p.descriptor() for p in T.profiles],
            "precision_bits": T.precision,
            "total_length": decimal_str(T.total_length, T.precision),
        }


def giet_from_dict(doc, precision=None):
    """Rebuild a map from giet_to_dict output (or a hand-written document).

    log_slopes and profile are optional; omitting both yields a standard map.
    """
    try:
        comb = doc["combinatorics"]
        top, bottom = list(comb["top"]), list(comb["bottom"])
        lam = doc["lambda_top"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed interval-exchange document: {exc}") from exc
    bits = int(precision or doc.get("precision_bits", DEFAULT_PRECISION))
    datum = validate_combinatorics(tuple(top), tuple(bottom))
    with workprec(bits):
        lengths = [mpf_from_any(v, bits) for v in lam]
        slopes = doc.get("log_slopes")
        profiles = doc.get("profile")
        total = doc.get("total_length")
        total = mpf_from_any(total, bits) if total is not None else None
        if not slopes and not profiles:
            if total is not None:
                s = sum(lengths)
                lengths = [v * total / s for v in lengths]
            return StandardIET(datum, lengths, precision=bits)
        slopes = [mpf_from_any(v, bits) for v in slopes] if slopes else None
        memo = {}
        prof_maps = (
            [map_from_descriptor(d, bits, memo) for d in profiles]
            if profiles else None
        )
        return GIET.from_coordinates(
            datum, lengths, log_slopes=slopes, profiles=prof_maps,
            precision=bits, total_length=total,
        )


def giet_to_json(T, indent=2):
    return json.dumps(giet_to_dict(T), indent=indent, sort_keys=True)


def giet_from_json(text, precision=None):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return giet_from_dict(doc, precision=precision)


def induction_log_lines(chain, k_max):
    """JSON-lines export of the acceleration log, one record per level."""
    chain.ensure(k_max)
    lines = []
    for k in range(1, k_max + 1):
        rec = chain.record(k)
        lines.append(json.dumps({
            "k": k,
            "n_k": rec.rv_steps_consumed,
            "A_k": [[str(v) for v in row] for row in rec.matrix.entries],
            "lambda_norm": decimal_str(
                rec.inducing_interval_length, chain.T.precision
            ),
            "winner_history": rec.winners,
            "heights": [str(h) for h in rec.heights_by_label],
        }, sort_keys=True))
    return lines
