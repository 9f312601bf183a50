"""Additive FAR estimates from model coefficients.

The model predicts the median genuine score in log10-FAR space, so the
intercept plus the coefficients of the chosen levels is ``S`` and the
estimated false accept rate at a 50% true accept rate is ``10**S``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import fixtures
from .covariates import DEFAULT_SPEC, CovariateSpec, Scenario, ScenarioError
from .errors import ValidationError
from .lmm import CoefficientStat, FittedModel, wald_from_ci, wald_stats

TAR_CAVEAT = (
    "Estimate holds at a fixed 50% TAR: the model predicts the median genuine "
    "score, so half of genuine comparisons score above the predicted threshold."
)


@dataclass(frozen=True)
class FarEstimate:
    s: float
    far: float
    one_in_n: int
    terms: list[tuple[str, str, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "far": self.far,
            "one_in_n": self.one_in_n,
            "terms": [{"covariate": c, "level": l, "coef": b} for c, l, b in self.terms],
        }

    def describe(self) -> str:
        parts = " + ".join(f"({b:+.3f})" for _, _, b in self.terms)
        return f"S = {parts} = {self.s:.3f}\nFAR_est = 10^({self.s:.3f}) = 1 in {self.one_in_n:,}"


def _round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def predict_far(coeffs: list[CoefficientStat], scenario: Scenario, spec: CovariateSpec = DEFAULT_SPEC) -> FarEstimate:
    """Sum the intercept and the scenario's level coefficients.

    Covariates absent from the scenario are at their reference level and
    contribute nothing. Terms are summed left to right in spec order.
    """
    table = {(c.name, c.level): c for c in coeffs}
    if ("Intercept", "-") not in table:
        raise ValidationError("coefficient list has no intercept")
    resolved = scenario.resolve(spec)
    terms = [("Intercept", "-", float(table[("Intercept", "-")].coef))]
    for cov in spec.covariates:
        level = resolved[cov.name]
        if level == cov.reference:
            continue
        if (cov.name, level) not in table:
            raise ScenarioError(f"no coefficient for {cov.name} = {level}")
        terms.append((cov.name, level, float(table[(cov.name, level)].coef)))
    s = 0.0
    for _, _, b in terms:
        s += b
    return FarEstimate(s=s, far=10.0**s, one_in_n=_round_half_away(10.0 ** (-s)), terms=terms)


def load_paper_coefficients() -> list[CoefficientStat]:
    """The published coefficient table (values, intervals, p, probe counts)."""
    out = []
    for cov, level, coef, lo, hi, p, count in fixtures.COEFFICIENT_ROWS:
        num = None if count == "-" else int(count)
        if p == "-":
            out.append(CoefficientStat(cov, level, float(coef), num_probes=num, reference=True))
            continue
        se, _ = wald_from_ci(float(coef), float(lo), float(hi))
        out.append(CoefficientStat(cov, level, float(coef), float(lo), float(hi), float(p), se, num))
    return out


def reference_model() -> FittedModel:
    """Fitted-model stand-in carrying the published summary numbers."""
    stats = load_paper_coefficients()
    fitted = [s for s in stats if not s.reference]
    names = [s.column for s in fitted]
    se = np.array([s.se for s in fitted])
    summ = fixtures.MODEL_SUMMARY
    levels = []
    for s in stats:
        if s.reference:
            levels.append((s.name, [s.level]))
        elif s.name != "Intercept":
            levels[-1][1].append(s.level)
    return FittedModel(
        column_names=names,
        coefficients=np.array([s.coef for s in fitted]),
        standard_errors=se,
        cov_params=np.diag(se**2),
        group_variance=float(fixtures.GROUP_VARIANCE),
        scale=summ["scale"],
        reml_loglik=summ["reml_loglik"],
        converged=summ["converged"],
        n_observations=summ["n_observations"],
        n_groups=summ["n_groups"],
        group_sizes=(summ["min_group_size"], summ["max_group_size"], summ["mean_group_size"]),
        terms=[(s.name, s.level) for s in fitted],
        covariate_levels=[(name, tuple(lv)) for name, lv in levels],
        level_counts=fixtures.level_counts(),
    )


def model_coefficients(model: FittedModel) -> list[CoefficientStat]:
    return wald_stats(model, require_converged=False)


def estimate_to_json(est: FarEstimate) -> str:
    return json.dumps(est.to_dict(), indent=2)
