"""Empirical typical-positive-growth probe: positivity bookkeeping and
growth-rate estimation for the renormalization matrices A_k and their
products Q(0,k).

The probe checks three empirical flags on an accelerated induction run:
(P) every A_k is entrywise positive; (S) log||A_k|| grows subexponentially
(fitted slope below a threshold); (E) log||Q(0,k)|| grows linearly with a
rate rho_hat > 1. The product bound ||Q(0,k)|| <= K * rho^k is used by the
regularity estimates, so both the per-step and product envelopes are
reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DegenerateSeries, NumericalConnection, RangeError
from .induction import IncidenceMatrix, as_chain
from .precision import workprec

__all__ = [
    "GrowthFit",
    "TpgReport",
    "growth_fit",
    "tpg_probe",
    "submultiplicativity_check",
]


@dataclass(frozen=True)
class GrowthFit:
    slope: float
    intercept: float
    r2: float


def growth_fit(series):
    """Ordinary least squares of value against index; returns (slope,
    intercept, r2). A constant series fits slope 0 with r2 = 1 by convention.
    """
    n = len(series)
    if n < 3:
        raise RangeError("growth fit needs at least 3 points")
    ys = [float(v) for v in series]
    xs = list(range(n))
    if max(ys) == min(ys):
        return GrowthFit(0.0, ys[0], 1.0)
    xbar = sum(xs) / n
    ybar = sum(ys) / n
    sxx = sum((x - xbar) ** 2 for x in xs)
    if sxx == 0:
        raise DegenerateSeries("zero variance in the index variable")
    sxy = sum((x - xbar) * (y - ybar) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = ybar - slope * xbar
    ss_res = sum((y - (intercept + slope * x)) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - ybar) ** 2 for y in ys)
    r2 = 1.0 - ss_res / ss_tot
    return GrowthFit(slope, intercept, r2)


@dataclass
class TpgReport:
    steps_probed: int
    truncated: bool                  # a connection stopped the run early
    truncation_step: int | None
    positive: bool                   # (P): every A_k entrywise positive
    first_positivity_failure: int | None
    step_norms: list                 # ||A_k||, k = 1..K (exact ints)
    product_norms: list              # ||Q(0,k)||, k = 1..K (exact ints)
    step_fit: GrowthFit | None       # log||A_k|| vs k  — condition (S)
    product_fit: GrowthFit | None    # log||Q(0,k)|| vs k — condition (E)
    rho_hat: float | None            # exp(product slope)
    k_hat: float | None              # exp(product intercept)
    subexponential: bool | None      # (S) heuristic flag
    exponential: bool | None         # (E) heuristic flag: rho_hat > 1
    flags: list = field(default_factory=list)

    def series(self):
        """Rows (k, ||A_k||, ||Q(0,k)||) for export."""
        return [
            (k + 1, self.step_norms[k], self.product_norms[k])
            for k in range(len(self.step_norms))
        ]


def tpg_probe(T0, K, slope_threshold_ratio=0.1):
    """Probe conditions (P), (S), (E) over K positive acceleration steps.

    (S) is reported as a fitted-slope heuristic: the least-squares slope of
    log||A_k|| must not exceed slope_threshold_ratio * log(rho_hat). A
    numerical connection truncates the probe and marks the report rather than
    raising, provided at least 3 steps completed.
    """
    if K < 3:
        raise RangeError("TPG probe needs K >= 3")
    chain = as_chain(T0)
    truncated = False
    truncation_step = None
    with workprec(chain.T.precision):
        try:
            chain.ensure(K)
        except NumericalConnection:
            truncated = True
            truncation_step = chain.depth + 1
    steps = min(K, chain.depth)

    step_norms = []
    product_norms = []
    product = IncidenceMatrix.identity(chain.T.d)
    positive = True
    first_fail = None
    for k in range(1, steps + 1):
        a = chain.record(k).matrix
        step_norms.append(a.norm())
        product = product @ a
        product_norms.append(product.norm())
        if positive and not a.is_positive():
            positive = False
            first_fail = k

    step_fit = product_fit = None
    rho_hat = k_hat = None
    exponential = subexp = None
    if steps >= 3:
        step_fit = growth_fit([math.log(v) for v in step_norms])
        product_fit = growth_fit([math.log(v) for v in product_norms])
        rho_hat = math.exp(product_fit.slope)
        k_hat = math.exp(product_fit.intercept)
        exponential = rho_hat > 1.0
        subexp = (
            step_fit.slope <= slope_threshold_ratio * math.log(rho_hat)
            if exponential
            else None
        )

    flags = []
    if truncated:
        flags.append("truncated")
    if not positive:
        flags.append("positivity-failure")
    if exponential and not subexp:
        flags.append("step-growth-above-threshold")

    return TpgReport(
        steps_probed=steps,
        truncated=truncated,
        truncation_step=truncation_step,
        positive=positive,
        first_positivity_failure=first_fail,
        step_norms=step_norms,
        product_norms=product_norms,
        step_fit=step_fit,
        product_fit=product_fit,
        rho_hat=rho_hat,
        k_hat=k_hat,
        subexponential=subexp,
        exponential=exponential,
        flags=flags,
    )


def submultiplicativity_check(chain, k_max):
    """Exact integer check of ||Q(0,k)|| <= prod_i ||A_i|| for k <= k_max.

    Returns the list of (k, product_norm, norm_product) triples; raises
    AssertionError on a violation (which would indicate a cocycle bug).
    """
    chain = as_chain(chain)
    chain.ensure(k_max)
    rows = []
    product = IncidenceMatrix.identity(chain.T.d)
    norm_prod = 1
    for k in range(1, k_max + 1):
        a = chain.record(k).matrix
        product = product @ a
        norm_prod *= a.norm()
        lhs = product.norm()
        if lhs > norm_prod:
            raise AssertionError(
                f"submultiplicativity violated at k={k}: {lhs} > {norm_prod}"
            )
        rows.append((k, lhs, norm_prod))
    return rows
