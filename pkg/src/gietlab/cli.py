"""Command-line surface: map inspection verbs plus the scenario runner.

Verbs: validate, induce, towers, birkhoff, regularity, tpg, run.
Global flags: --precision-bits, --seed, --out, --format {json,csv}.
Exit codes: 0 success, 2 config error, 3 numerical-connection abort,
4 budget exceeded (1 for other laboratory errors). On failure a
machine-readable error document is printed to stdout.
"""

import argparse
import json
import random
import sys

import mpmath
from mpmath import mpf

from .birkhoff import geometric_decomposition, log_slope_observable, special_sums
from .combinatorics import singularity_structure, validate_combinatorics
from .diophantine import tpg_probe
from .errors import BudgetExceeded, ConfigError, GietLabError, NumericalConnection
from .induction import chain_for, heights
from .precision import DEFAULT_PRECISION, workprec
from .regularity import holder_fit
from .scenarios import (
    ScenarioConfig,
    _canonical_json,
    _csv_text,
    _sample_pairs,
    build_input,
    load_config,
    run_scenario,
)
from .towers import build_partition

_EXIT_CODES = (
    (ConfigError, 2),
    (NumericalConnection, 3),
    (BudgetExceeded, 4),
    (GietLabError, 1),
)


def _map_args(sub):
    sub.add_argument("--giet", help="path to a serialized map (JSON)")
    sub.add_argument("--rotation",
                     help="rotation number in (0,1) as a decimal string, or 'golden'")
    sub.add_argument("--conjugacy", choices=("sine", "cubic"),
                     help="conjugate the base map by a diffeomorphism family")
    sub.add_argument("--amplitude", default="0.1",
                     help="conjugacy amplitude (decimal string)")
    sub.add_argument("--frequency", type=int, default=1,
                     help="sine-family frequency")


def _load_map(args):
    """Build (T, T0) from --giet / --rotation flags via the scenario builder."""
    spec = {}
    if args.giet:
        spec["file"] = args.giet
    elif args.rotation:
        spec["rotation"] = args.rotation
    else:
        raise ConfigError("give --giet FILE or --rotation VALUE")
    if getattr(args, "conjugacy", None):
        conj = {"family": args.conjugacy, "amplitude": args.amplitude}
        if args.conjugacy == "sine":
            conj["frequency"] = args.frequency
        spec["conjugacy"] = conj
    cfg = ScenarioConfig(scenario="tpg", giet=spec,
                         acceleration_steps=1, precision_bits=args.precision_bits)
    return build_input(cfg)


def _verb_validate(args):
    T, _ = _load_map(args)
    comb = validate_combinatorics(T.comb.pi_top, T.comb.pi_bottom)
    sing = singularity_structure(comb)
    summary = {
        "d": T.d,
        "pi_top": list(comb.pi_top),
        "pi_bottom": list(comb.pi_bottom),
        "is_standard": bool(T.is_standard()),
        "precision_bits": T.precision,
        "total_length": str(T.total_length),
        "lengths": [str(l) for l in T.lambda_top],
        "log_slopes": [str(r) for r in T.log_slopes],
        "genus": sing.genus,
        "kappa": sing.kappa,
        "assignment": list(sing.assignment),
        "valid": True,
    }
    rows = [(j, str(T.lambda_top[j - 1]), str(T.log_slopes[j - 1]))
            for j in range(1, T.d + 1)]
    return summary, ("branch", "length", "log_slope"), rows


def _verb_induce(args):
    T, _ = _load_map(args)
    chain = chain_for(T)
    with workprec(T.precision):
        chain.ensure(args.steps)
        rows = []
        for k in range(1, args.steps + 1):
            rec = chain.record(k)
            rows.append((k, rec.rv_steps_consumed, rec.matrix.norm(),
                         rec.matrix.min_entry(), rec.matrix.is_positive(),
                         float(rec.inducing_interval_length)))
        q = heights([chain.record(i) for i in range(1, args.steps + 1)],
                    args.steps)
        summary = {
            "steps": args.steps,
            "heights": list(q),
            "matrix_norms": [r[2] for r in rows],
            "rv_steps": [r[1] for r in rows],
            "all_positive": all(r[4] for r in rows),
            "final_interval_length": rows[-1][5] if rows else None,
        }
    header = ("k", "rv_steps_consumed", "matrix_norm", "min_entry",
              "positive", "inducing_interval_length")
    return summary, header, rows


def _verb_towers(args):
    T, _ = _load_map(args)
    chain = chain_for(T)
    with workprec(T.precision):
        part = build_partition(chain, args.level, floor_cap=args.floor_cap)
        rows = [(addr.tower, addr.height, float(l), float(r - l))
                for addr, (l, r) in part.iter_floors()]
        summary = {
            "level": args.level,
            "floor_count": part.floor_count,
            "mesh": float(part.mesh()),
            "heights": list(part.heights),
            "bases": [[str(l), str(r)] for l, r in part.bases],
        }
    return summary, ("tower", "height", "left", "length"), rows


def _verb_birkhoff(args):
    T, _ = _load_map(args)
    chain = chain_for(T)
    f = log_slope_observable()
    with workprec(T.precision):
        if args.x is not None:
            x = mpf(args.x)
        else:
            x = T.total_length / mpf(3)
        dec = geometric_decomposition(chain, f, x, args.iterates)
        rows = [(t.level, t.tower, t.orbit_index, float(t.point), float(t.value))
                for t in dec.terms]
        summary = {
            "x": str(x),
            "iterates": args.iterates,
            "value": str(dec.value),
            "direct": str(dec.direct),
            "residual": float(abs(dec.value - dec.direct)),
            "bound": float(dec.bound),
            "bound_ok": float(abs(dec.value)) <= float(dec.bound),
            "deepest_level": dec.deepest_level,
            "counts_backward": list(dec.counts_backward),
            "counts_forward": list(dec.counts_forward),
        }
        if args.level:
            table = special_sums(chain, f, args.level)
            summary["sup_norm_fk"] = float(table.max_sup_norm())
    header = ("level", "tower", "orbit_index", "point", "value")
    return summary, header, rows


def _verb_regularity(args):
    T, T0 = _load_map(args)
    cfg = ScenarioConfig(scenario="holder", giet={}, acceleration_steps=args.depth,
                         samples=args.pairs, seed=args.seed,
                         precision_bits=args.precision_bits)
    pairs = _sample_pairs(cfg, T)
    report = holder_fit(T, T0, pairs, depth=args.depth)
    summary = {
        "pairs": args.pairs,
        "depth": args.depth,
        "lambda1": report.lambda1,
        "lambda2": report.lambda2,
        "lambda2_below_one": (report.lambda2 is not None
                              and report.lambda2 < 1),
        "alpha": report.alpha,
        "holder_constant": report.holder_constant,
        "quantitative_distance": report.quantitative_distance,
        "flags": report.flags,
        "fit_details": report.fit_details,
    }
    rows = []
    for i, e in enumerate(report.per_pair):
        rows.append((i, e.get("k0"), e.get("dx"), e.get("dphi"),
                     e.get("split"), e.get("error", "")))
    return summary, ("pair", "k0", "dx", "dphi", "split", "error"), rows


def _verb_tpg(args):
    T, _ = _load_map(args)
    report = tpg_probe(T, args.steps)
    summary = {
        "steps_probed": report.steps_probed,
        "truncated": report.truncated,
        "truncation_step": report.truncation_step,
        "positive": report.positive,
        "rho_hat": report.rho_hat,
        "k_hat": report.k_hat,
        "subexponential": report.subexponential,
        "exponential": report.exponential,
        "flags": report.flags,
        "step_norms": report.step_norms,
        "product_norms": report.product_norms,
    }
    rows = list(report.series())
    return summary, ("k", "step_norm", "product_norm"), rows


def _emit(args, summary, header, rows):
    if args.format == "csv":
        text = _csv_text(header, rows)
    else:
        text = _canonical_json(summary)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run(args):
    cfg = load_config(args.config)
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    run_scenario(cfg)
    sys.stdout.write(_canonical_json(
        {"scenario": cfg.scenario, "out_dir": cfg.out_dir, "status": "ok"}
    ))


def build_parser():
    p = argparse.ArgumentParser(
        prog="gietlab",
        description="Numerical laboratory for generalized interval exchanges.",
    )
    p.add_argument("--precision-bits", type=int, default=DEFAULT_PRECISION)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="write output to this path (run: output directory)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("validate", help="check a map's combinatorics and data")
    _map_args(s)

    s = sub.add_parser("induce", help="run the positive acceleration chain")
    _map_args(s)
    s.add_argument("--steps", type=int, default=5)

    s = sub.add_parser("towers", help="build a level-k dynamical partition")
    _map_args(s)
    s.add_argument("--level", type=int, default=3)
    s.add_argument("--floor-cap", type=int, default=2 * 10 ** 5)

    s = sub.add_parser("birkhoff", help="decompose a Birkhoff sum of log DT")
    _map_args(s)
    s.add_argument("--x", help="base point (decimal string; default L/3)")
    s.add_argument("--iterates", type=int, default=100)
    s.add_argument("--level", type=int, default=0,
                   help="also report the level-k special-sum sup norm")

    s = sub.add_parser("regularity", help="fit Hölder data for a conjugacy")
    _map_args(s)
    s.add_argument("--pairs", type=int, default=20)
    s.add_argument("--depth", type=int, default=8)

    s = sub.add_parser("tpg", help="probe Diophantine-type growth of the cocycle")
    _map_args(s)
    s.add_argument("--steps", type=int, default=12)

    s = sub.add_parser("run", help="run a scenario from a config file")
    s.add_argument("config")
    return p


_VERBS = {
    "validate": _verb_validate,
    "induce": _verb_induce,
    "towers": _verb_towers,
    "birkhoff": _verb_birkhoff,
    "regularity": _verb_regularity,
    "tpg": _verb_tpg,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.precision_bits < 16:
        args.precision_bits = DEFAULT_PRECISION
    mpmath.mp.prec = args.precision_bits + 10
    if args.seed is None:
        args.seed = 0
    try:
        if args.verb == "run":
            _run(args)
        else:
            summary, header, rows = _VERBS[args.verb](args)
            _emit(args, summary, header, rows)
        return 0
    except GietLabError as exc:
        code = 1
        for cls, c in _EXIT_CODES:
            if isinstance(exc, cls):
                code = c
                break
        sys.stdout.write(_canonical_json({
            "error": {
                "type": type(exc).__name__,
                "message": str(exc),
                "exit_code": code,
            }
        }))
        return code


if __name__ == "__main__":
    sys.exit(main())
