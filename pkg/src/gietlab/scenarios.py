"""Configuration-driven experiment scenarios.

Each scenario consumes a ScenarioConfig (typically parsed from a TOML file),
runs one study end to end, and writes three artifacts into the output
directory: summary.json, series.csv, and manifest.json (config hash, package
versions, and the list of emitted files). Outputs contain no timestamps and
all numbers are rendered deterministically, so a rerun with the same config
is byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import random
from dataclasses import dataclass, field

import mpmath
import numpy
import scipy
import tomli
from mpmath import mpf

from . import __version__
from .birkhoff import LogSlopeObservable, broken_sup_estimate, special_sums
from .diophantine import growth_fit, tpg_probe
from .errors import ConfigError, RangeError
from .giet import StandardIET, c2_distance_to_iets, conjugate_by_diffeo
from .induction import chain_for, renormalized_map, zorich_step
from .maps import CubicPerturbation, SinePerturbation
from .precision import DEFAULT_PRECISION, decimal_str, mpf_from_any, workprec
from .regularity import holder_fit
from .serialize import giet_from_dict, giet_from_json

__all__ = [
    "ScenarioConfig",
    "SCENARIOS",
    "load_config",
    "config_from_dict",
    "build_input",
    "run_scenario",
    "continued_fraction_quotients",
]

SCENARIOS = ("rotation-sanity", "sbs-decay", "broken-decay", "holder", "tpg")

_DEFAULT_STEPS = {
    "rotation-sanity": 15,
    "sbs-decay": 10,
    "broken-decay": 8,
    "holder": 8,
    "tpg": 12,
}


@dataclass
class ScenarioConfig:
    scenario: str
    giet: dict
    acceleration_steps: int
    floor_cap: int = 2 * 10 ** 5
    orbit_cap: int = 10 ** 6
    precision_bits: int = DEFAULT_PRECISION
    samples: int = 40
    seed: int = 0
    out_dir: str = "."
    raw: dict = field(default_factory=dict)

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(
                f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}"
            )
        for name in ("acceleration_steps", "floor_cap", "orbit_cap",
                     "precision_bits", "samples"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"budget {name} must be positive")
        if not isinstance(self.giet, dict) or not self.giet:
            raise ConfigError("config needs a [giet] table (inline or file=...)")
        return self


def config_from_dict(doc, base_dir="."):
    """Build a validated ScenarioConfig from a parsed config document."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a table of key = value pairs")
    try:
        scenario = doc["scenario"]
    except KeyError as exc:
        raise ConfigError("config is missing the 'scenario' key") from exc
    budgets = doc.get("budgets", {})
    steps = budgets.get(
        "acceleration_steps", _DEFAULT_STEPS.get(scenario, 10)
    )
    cfg = ScenarioConfig(
        scenario=scenario,
        giet=dict(doc.get("giet", {})),
        acceleration_steps=int(steps),
        floor_cap=int(budgets.get("floor_cap", 2 * 10 ** 5)),
        orbit_cap=int(budgets.get("orbit_cap", 10 ** 6)),
        precision_bits=int(doc.get("precision_bits", DEFAULT_PRECISION)),
        samples=int(doc.get("samples", 40)),
        seed=int(doc.get("seed", 0)),
        out_dir=os.path.join(base_dir, doc.get("out", ".")),
        raw=doc,
    )
    return cfg.validate()


def load_config(path):
    """Parse a TOML config file into a ScenarioConfig."""
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config syntax: {exc}") from exc
    return config_from_dict(doc, base_dir=os.path.dirname(path) or ".")


# ------------------------------------------------------------- input builder

def _conjugacy_from_spec(spec, bits):
    family = spec.get("family", "sine")
    with workprec(bits):
        if family == "sine":
            return SinePerturbation(
                mpf_from_any(spec.get("amplitude", "0.1"), bits),
                int(spec.get("frequency", 1)),
            )
        if family == "cubic":
            return CubicPerturbation(
                mpf_from_any(spec.get("a", "0.1"), bits),
                mpf_from_any(spec.get("c", "0.5"), bits),
            )
    raise ConfigError(f"unknown conjugacy family {family!r}")


def _rotation_lengths(rotation, bits):
    with workprec(bits + 10):
        if rotation == "golden":
            a = (mpmath.sqrt(5) - 1) / 2
        else:
            a = mpf_from_any(rotation, bits)
        if not 0 < a < 1:
            raise ConfigError("rotation number must lie in (0, 1)")
        return [a, 1 - a]


def build_input(cfg):
    """(T, T0): the map under study and its unperturbed model.

    The [giet] table gives either file = path to a serialized map, rotation =
    "golden" | decimal string (two-interval standard map), or an inline
    serialized document. An optional [giet.conjugacy] table conjugates the
    base map by a model diffeomorphism h, so T = h o T0 o h^-1 with T0 known.
    """
    spec = cfg.giet
    bits = cfg.precision_bits
    if "file" in spec:
        with open(spec["file"], encoding="utf-8") as fh:
            T0 = giet_from_json(fh.read(), precision=bits)
    elif "rotation" in spec:
        T0 = StandardIET(
            ((1, 2), (2, 1)), _rotation_lengths(spec["rotation"], bits),
            precision=bits,
        )
    elif "combinatorics" in spec:
        T0 = giet_from_dict(spec, precision=bits)
    else:
        raise ConfigError(
            "[giet] needs file = ..., rotation = ..., or an inline document"
        )
    conj = spec.get("conjugacy")
    if conj:
        h = _conjugacy_from_spec(conj, bits)
        return conjugate_by_diffeo(T0, h), T0
    return T0, T0


# ---------------------------------------------------------------- scenarios

def continued_fraction_quotients(alpha, n):
    """First n partial quotients of alpha >= 0 (a0 included when alpha >= 1)."""
    out = []
    x = mpf(alpha)
    for _ in range(n):
        q = int(mpmath.floor(x))
        out.append(q)
        frac = x - q
        if frac == 0:
            break
        x = 1 / frac
    return out


def _scenario_rotation_sanity(cfg, T, T0):
    if T.d != 2:
        raise ConfigError("rotation-sanity needs a two-interval map")
    n = cfg.acceleration_steps
    with workprec(T.precision):
        lam = sorted(T.lambda_top, reverse=True)
        quotients = continued_fraction_quotients(lam[0] / lam[1], n)
        runs = []
        cur = T
        for _ in range(min(n, len(quotients))):
            rec = zorich_step(cur, run_cap=cfg.orbit_cap)
            runs.append(rec.rv_steps_consumed)
            cur = rec.induced
    matches = sum(1 for q, r in zip(quotients, runs) if q == r)
    summary = {
        "cf_quotients": quotients,
        "zorich_run_lengths": runs,
        "matches": matches,
        "compared": min(len(quotients), len(runs)),
        "all_match": matches == len(runs) == len(quotients),
    }
    rows = [(k + 1, q, r)
            for k, (q, r) in enumerate(zip(quotients, runs))]
    return summary, ["k", "cf_quotient", "zorich_run_length"], rows


def _scenario_sbs_decay(cfg, T, T0):
    kmax = cfg.acceleration_steps
    chain = chain_for(T)
    f = LogSlopeObservable()
    flags = []
    sups = []
    c2s = []
    with workprec(T.precision):
        chain.ensure(kmax)
        for k in range(1, kmax + 1):
            sups.append(float(special_sums(chain, f, k).max_sup_norm()))
            c2s.append(float(c2_distance_to_iets(renormalized_map(T, k))))
    fit = None
    tail = sups[1:]
    positive = [v for v in tail if v > 0]
    if max(tail, default=0.0) < 1e-60:
        flags.append("identically zero")
    elif len(positive) < len(tail):
        flags.append("underflow")
    if "identically zero" not in flags and len(positive) >= 3:
        fit = growth_fit([math.log(v) for v in positive])
    c2_tail = c2s[1:]
    summary = {
        "k_range": [2, kmax],
        "sup_norm_fk": sups,
        "c2_distance": c2s,
        "log_sup_fit": None if fit is None else {
            "slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
        },
        "negative_slope": None if fit is None else fit.slope < 0,
        "c2_decreasing": all(b < a for a, b in zip(c2_tail, c2_tail[1:])),
        "flags": flags,
    }
    rows = [(k, sups[k - 1], c2s[k - 1]) for k in range(1, kmax + 1)]
    return summary, ["k", "sup_norm_fk", "c2_distance"], rows


def _scenario_broken_decay(cfg, T, T0):
    kmax = cfg.acceleration_steps
    kmin = min(3, kmax)
    chain = chain_for(T)
    f = LogSlopeObservable()
    rows = []
    deltas = {}
    with workprec(T.precision):
        chain.ensure(kmax)
        for k in range(kmin, kmax + 1):
            table = special_sums(chain, f, k)
            worst = 0.0
            for j in range(1, T.d + 1):
                rhat = float(broken_sup_estimate(chain, f, k, j))
                supj = float(table.sup_norm(j))
                delta = abs(rhat - supj)
                worst = max(worst, delta)
                rows.append((k, j, rhat, supj, delta))
            deltas[k] = worst
    series = [deltas[k] for k in sorted(deltas)]
    decreasing = all(b < a for a, b in zip(series, series[1:]))
    fit = None
    if len(series) >= 3 and min(series) > 0:
        fit = growth_fit([math.log(v) for v in series])
    summary = {
        "k_range": [kmin, kmax],
        "max_delta_by_k": {str(k): deltas[k] for k in sorted(deltas)},
        "strictly_decreasing": decreasing,
        "log_delta_fit": None if fit is None else {
            "slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
        },
    }
    return summary, ["k", "j", "broken_sup", "sup_norm_fk_j", "delta"], rows


def _sample_pairs(cfg, T):
    """Seeded pairs (x, y) with log-uniform separations in [1e-3, 10^-1.3]."""
    rng = random.Random(cfg.seed)
    pairs = []
    with workprec(T.precision):
        L = float(T.total_length)
        for _ in range(cfg.samples):
            c = mpf(str(rng.uniform(0.05, 0.90))) * L
            eps = mpf(10) ** mpf(str(-rng.uniform(1.3, 3.0))) * L
            pairs.append((c, c + eps))
    return pairs


def _scenario_holder(cfg, T, T0):
    pairs = _sample_pairs(cfg, T)
    rep = holder_fit(T, T0, pairs, depth=cfg.acceleration_steps)
    summary = {
        "lambda1": rep.lambda1,
        "lambda2": rep.lambda2,
        "lambda2_below_one": rep.lambda2 is not None and rep.lambda2 < 1,
        "alpha": rep.alpha,
        "holder_constant": rep.holder_constant,
        "quantitative_distance": rep.quantitative_distance,
        "flags": rep.flags,
        "fit_details": rep.fit_details,
        "pairs": len(pairs),
    }
    rows = []
    for i, e in enumerate(rep.per_pair):
        rows.append((
            i,
            e.get("k0") if e.get("k0") is not None else "",
            e.get("dx"),
            e.get("dphi") if e.get("dphi") is not None else "",
            1 if e.get("split") else 0,
            e.get("error", ""),
        ))
    return summary, ["pair", "k0", "dx", "dphi", "split", "error"], rows


def _scenario_tpg(cfg, T, T0):
    rep = tpg_probe(T, max(cfg.acceleration_steps, 3))
    summary = {
        "steps_probed": rep.steps_probed,
        "truncated": rep.truncated,
        "truncation_step": rep.truncation_step,
        "positive": rep.positive,
        "first_positivity_failure": rep.first_positivity_failure,
        "rho_hat": rep.rho_hat,
        "k_hat": rep.k_hat,
        "subexponential": rep.subexponential,
        "exponential": rep.exponential,
        "step_fit": None if rep.step_fit is None else {
            "slope": rep.step_fit.slope,
            "intercept": rep.step_fit.intercept,
            "r2": rep.step_fit.r2,
        },
        "product_fit": None if rep.product_fit is None else {
            "slope": rep.product_fit.slope,
            "intercept": rep.product_fit.intercept,
            "r2": rep.product_fit.r2,
        },
        "flags": rep.flags,
    }
    rows = [(k, a, q) for k, a, q in rep.series()]
    return summary, ["k", "step_norm", "product_norm"], rows


_RUNNERS = {
    "rotation-sanity": _scenario_rotation_sanity,
    "sbs-decay": _scenario_sbs_decay,
    "broken-decay": _scenario_broken_decay,
    "holder": _scenario_holder,
    "tpg": _scenario_tpg,
}


# ------------------------------------------------------------------- output

def _canonical_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def _config_hash(cfg):
    doc = dict(cfg.raw) if cfg.raw else {
        "scenario": cfg.scenario, "giet": cfg.giet, "seed": cfg.seed,
        "precision_bits": cfg.precision_bits, "samples": cfg.samples,
        "budgets": {
            "acceleration_steps": cfg.acceleration_steps,
            "floor_cap": cfg.floor_cap,
            "orbit_cap": cfg.orbit_cap,
        },
    }
    blob = json.dumps(doc, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def run_scenario(cfg):
    """Run one scenario and write summary.json, series.csv, manifest.json.

    Returns the summary dict. Raises ConfigError / NumericalConnection /
    BudgetExceeded subclasses for the CLI to map onto exit codes.
    """
    cfg.validate()
    T, T0 = build_input(cfg)
    runner = _RUNNERS[cfg.scenario]
    summary, header, rows = runner(cfg, T, T0)
    summary = {
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "precision_bits": cfg.precision_bits,
        **summary,
    }

    os.makedirs(cfg.out_dir, exist_ok=True)
    summary_text = _canonical_json(summary)
    series_text = _csv_text(header, rows)
    manifest = {
        "scenario": cfg.scenario,
        "config_sha256": _config_hash(cfg),
        "versions": {
            "artifact": __version__,
            "mpmath": mpmath.__version__,
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
        },
        "files": ["manifest.json", "series.csv", "summary.json"],
    }
    for name, text in (
        ("summary.json", summary_text),
        ("series.csv", series_text),
        ("manifest.json", _canonical_json(manifest)),
    ):
        with open(os.path.join(cfg.out_dir, name), "w", encoding="utf-8") as fh:
            fh.write(text)
    return summary
