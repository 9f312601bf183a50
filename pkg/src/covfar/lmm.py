"""Random-intercept linear mixed model fitted by REML.

Model: ``y = X beta + Z u + e`` with one intercept ``u_g ~ N(0, s_u^2)`` per
group and ``e ~ N(0, s^2)``. Writing ``theta = s_u^2 / s^2``, the marginal
covariance of group ``i`` is ``s^2 (I + theta J)`` and

    (I + theta J)^-1 = I - theta / (1 + n_i theta) J
    log|I + theta J| = log(1 + n_i theta)

so ``beta`` and ``s^2`` profile out in closed form (GLS) and the restricted
log-likelihood becomes a function of ``theta`` alone. Every evaluation
only needs per-group column sums, X'X and one residual pass.

The maximiser is located on a log-spaced grid, then refined by a bracketed
root search on the analytic derivative.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, optimize
from scipy.stats import norm

from .covariates import DesignMatrix, column_name
from .errors import NumericalError, ValidationError

log = logging.getLogger(__name__)

MAX_ITER = 200
_GRID = np.logspace(-6, 6, 49)


class RankDeficiencyError(NumericalError):
    def __init__(self, columns: list[str]):
        self.columns = list(columns)
        super().__init__(f"design matrix is rank deficient; dependent column(s): {', '.join(self.columns)}")


class NotConvergedError(NumericalError):
    pass


@dataclass
class FittedModel:
    column_names: list[str]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    cov_params: np.ndarray
    group_variance: float
    scale: float
    reml_loglik: float
    converged: bool
    n_observations: int
    n_groups: int
    group_sizes: tuple[int, int, float]  # min, max, mean
    theta: float = 0.0
    terms: list[tuple[str, str]] = field(default_factory=list)
    covariate_levels: list[tuple[str, tuple[str, ...]]] = field(default_factory=list)
    dropped_columns: list[str] = field(default_factory=list)
    level_counts: dict[tuple[str, str], int] = field(default_factory=dict)
    iterations: int = 0
    method: str = "REML"
    dependent: str = "est far"

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.column_names.index(name)])

    def se(self, name: str) -> float:
        return float(self.standard_errors[self.column_names.index(name)])

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "dependent": self.dependent,
            "column_names": list(self.column_names),
            "coefficients": [float(x) for x in self.coefficients],
            "standard_errors": [float(x) for x in self.standard_errors],
            "cov_params": np.asarray(self.cov_params, dtype=float).tolist(),
            "group_variance": float(self.group_variance),
            "scale": float(self.scale),
            "reml_loglik": float(self.reml_loglik),
            "converged": bool(self.converged),
            "n_observations": int(self.n_observations),
            "n_groups": int(self.n_groups),
            "group_sizes": {"min": self.group_sizes[0], "max": self.group_sizes[1], "mean": self.group_sizes[2]},
            "theta": float(self.theta),
            "terms": [list(t) for t in self.terms],
            "covariate_levels": [[name, list(levels)] for name, levels in self.covariate_levels],
            "dropped_columns": list(self.dropped_columns),
            "level_counts": [[c, l, int(k)] for (c, l), k in self.level_counts.items()],
            "iterations": int(self.iterations),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        gs = d["group_sizes"]
        return cls(
            column_names=list(d["column_names"]),
            coefficients=np.asarray(d["coefficients"], dtype=float),
            standard_errors=np.asarray(d["standard_errors"], dtype=float),
            cov_params=np.asarray(d["cov_params"], dtype=float),
            group_variance=float(d["group_variance"]),
            scale=float(d["scale"]),
            reml_loglik=float(d["reml_loglik"]),
            converged=bool(d["converged"]),
            n_observations=int(d["n_observations"]),
            n_groups=int(d["n_groups"]),
            group_sizes=(gs["min"], gs["max"], float(gs["mean"])),
            theta=float(d.get("theta", 0.0)),
            terms=[tuple(t) for t in d.get("terms", [])],
            covariate_levels=[(name, tuple(levels)) for name, levels in d.get("covariate_levels", [])],
            dropped_columns=list(d.get("dropped_columns", [])),
            level_counts={(c, l): int(k) for c, l, k in d.get("level_counts", [])},
            iterations=int(d.get("iterations", 0)),
            method=d.get("method", "REML"),
            dependent=d.get("dependent", "est far"),
        )


@dataclass(frozen=True)
class CoefficientStat:
    name: str
    level: str
    coef: float
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    p_value: Optional[float] = None
    se: Optional[float] = None
    num_probes: Optional[int] = None
    reference: bool = False
    confidence: float = 0.95

    @property
    def column(self) -> str:
        return column_name(self.name, self.level)


class _Profile:
    """Sufficient statistics and the profiled REML objective for one design."""

    def __init__(self, X: np.ndarray, y: np.ndarray, groups):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        # sorted labels make every group-level reduction independent of row order
        labels, codes = np.unique(np.asarray(groups).astype(str), return_inverse=True)
        self.labels = labels
        self.codes = codes
        self.g = len(labels)
        self.n, self.p = self.X.shape
        self.ni = np.bincount(codes, minlength=self.g).astype(float)
        self.S = np.column_stack([np.bincount(codes, self.X[:, j], self.g) for j in range(self.p)])
        self.XtX = self.X.T @ self.X
        self.Xty = self.X.T @ self.y
        self.ysum = np.bincount(codes, self.y, self.g)

    def solve(self, theta: float):
        c = theta / (1.0 + self.ni * theta)
        A = self.XtX - (self.S.T * c) @ self.S
        rhs = self.Xty - self.S.T @ (c * self.ysum)
        try:
            chol = linalg.cho_factor(A)
        except linalg.LinAlgError:
            raise NumericalError(f"GLS normal equations not positive definite at theta={theta!r}") from None
        beta = linalg.cho_solve(chol, rhs)
        r = self.y - self.X @ beta
        R = np.bincount(self.codes, r, self.g)
        q = float(r @ r - np.sum(c * R * R))
        return chol, beta, R, q

    def loglik(self, theta: float) -> float:
        chol, _, _, q = self.solve(theta)
        dof = self.n - self.p
        if not q > 0:
            raise NumericalError(f"non-positive residual quadratic form at theta={theta!r}")
        logdet = 2.0 * np.sum(np.log(np.diag(chol[0])))
        val = -0.5 * (dof * (1.0 + math.log(2.0 * math.pi * q / dof)) + np.sum(np.log1p(self.ni * theta)) + logdet)
        if not math.isfinite(val):
            raise NumericalError(f"non-finite restricted log-likelihood at theta={theta!r}")
        return float(val)

    def score(self, theta: float) -> float:
        """d loglik / d theta."""
        chol, _, R, q = self.solve(theta)
        d = 1.0 + self.ni * theta
        W = linalg.cho_solve(chol, self.S.T)
        quad = np.sum(self.S.T * W, axis=0)
        dof = self.n - self.p
        return 0.5 * float(dof * np.sum(R * R / d**2) / q - np.sum(self.ni / d) + np.sum(quad / d**2))


def profiled_loglik(theta: float, design: DesignMatrix) -> float:
    """Restricted log-likelihood at variance ratio ``theta`` with beta and s^2 profiled out."""
    theta = float(theta)
    if not math.isfinite(theta) or theta < 0:
        raise ValidationError(f"theta must be finite and >= 0, got {theta!r}")
    return _Profile(design.X, design.y, design.groups).loglik(theta)


def _independent_columns(X: np.ndarray, names: list[str], tol: float = 1e-10) -> tuple[list[int], list[str]]:
    """Greedy left-to-right selection of linearly independent columns."""
    G = X.T @ X
    keep: list[int] = []
    dependent: list[str] = []
    L = np.zeros((0, 0))
    for j in range(G.shape[0]):
        gjj = G[j, j]
        if keep:
            v = linalg.solve_triangular(L, G[keep, j], lower=True)
            resid = gjj - v @ v
        else:
            v = np.zeros(0)
            resid = gjj
        if gjj <= 0 or resid <= tol * gjj:
            dependent.append(names[j])
            continue
        k = len(keep)
        L2 = np.zeros((k + 1, k + 1))
        L2[:k, :k] = L
        L2[k, :k] = v
        L2[k, k] = math.sqrt(resid)
        L = L2
        keep.append(j)
    return keep, dependent


def _maximise(prob: _Profile) -> tuple[float, bool, int]:
    """Return (theta_hat, converged, iterations)."""
    grid = _GRID
    values = [prob.loglik(0.0)] + [prob.loglik(t) for t in grid]
    thetas = np.concatenate(([0.0], grid))
    k = int(np.argmax(values))
    evals = len(values)
    # expand upward while the best point sits on the upper edge
    while k == len(thetas) - 1 and thetas[-1] < 1e12:
        t = thetas[-1] * 10.0
        thetas = np.append(thetas, t)
        values.append(prob.loglik(t))
        evals += 1
        k = int(np.argmax(values))
    if k == len(thetas) - 1:
        log.warning("variance ratio diverges (theta > %g); fit not converged", thetas[-1])
        return float(thetas[-1]), False, evals
    if k == 0 and prob.score(0.0) <= 0.0:
        return 0.0, True, evals

    lo = thetas[max(k - 1, 0)]
    hi = thetas[k + 1]
    f_lo, f_hi = prob.score(lo), prob.score(hi)
    if f_lo > 0 > f_hi:
        root, res = optimize.brentq(
            prob.score, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=MAX_ITER, full_output=True, disp=False
        )
        return float(root), bool(res.converged), evals + res.function_calls
    # derivative does not change sign across the bracket; fall back to a direct search
    res = optimize.minimize_scalar(
        lambda t: -prob.loglik(t), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * max(hi, 1.0), "maxiter": MAX_ITER}
    )
    return float(res.x), bool(res.success), evals + int(res.nfev)


def fit_reml(design: DesignMatrix, *, drop_collinear: bool = False, theta: Optional[float] = None) -> FittedModel:
    """Fit the random-intercept model by REML.

    Columns that are all zero (levels absent from the data) are dropped with
    a warning. Other linear dependence raises ``RankDeficiencyError`` unless
    ``drop_collinear`` is set. Passing ``theta`` skips the optimisation and
    profiles at that fixed variance ratio (``theta=0`` gives OLS).
    """
    X = np.asarray(design.X, dtype=float)
    y = np.asarray(design.y, dtype=float)
    names = list(design.column_names)
    terms = list(design.terms) if design.terms else [(n, "") for n in names]
    if X.shape[0] != y.shape[0] or X.shape[0] != len(design.groups):
        raise ValidationError("design matrix, response and group labels differ in length")
    if not np.all(np.isfinite(y)):
        raise ValidationError("response contains non-finite values")

    dropped = []
    empty = [j for j in range(X.shape[1]) if not np.any(X[:, j])]
    if empty:
        dropped = [names[j] for j in empty]
        log.warning("dropping empty design column(s): %s", ", ".join(dropped))
    cols = [j for j in range(X.shape[1]) if j not in empty]
    keep, dependent = _independent_columns(X[:, cols], [names[j] for j in cols])
    if dependent:
        if not drop_collinear:
            raise RankDeficiencyError(dependent)
        log.warning("dropping collinear design column(s): %s", ", ".join(dependent))
        dropped += dependent
    cols = [cols[j] for j in keep]
    X = X[:, cols]
    names = [names[j] for j in cols]
    terms = [terms[j] for j in cols]

    prob = _Profile(X, y, design.groups)
    if prob.g < 2:
        raise ValidationError(f"need at least 2 groups, have {prob.g}")
    if prob.n <= prob.p:
        raise ValidationError(f"need more observations ({prob.n}) than columns ({prob.p})")

    if theta is None:
        theta_hat, converged, iters = _maximise(prob)
    else:
        if not math.isfinite(theta) or theta < 0:
            raise ValidationError(f"theta must be finite and >= 0, got {theta!r}")
        theta_hat, converged, iters = float(theta), True, 0

    chol, beta, _, q = prob.solve(theta_hat)
    scale = q / (prob.n - prob.p)
    A_inv = linalg.cho_solve(chol, np.eye(prob.p))
    cov = scale * A_inv
    se = np.sqrt(np.diag(cov))
    sizes = prob.ni
    return FittedModel(
        column_names=names,
        coefficients=beta,
        standard_errors=se,
        cov_params=cov,
        group_variance=float(theta_hat * scale),
        scale=float(scale),
        reml_loglik=prob.loglik(theta_hat),
        converged=converged,
        n_observations=prob.n,
        n_groups=prob.g,
        group_sizes=(int(sizes.min()), int(sizes.max()), float(sizes.mean())),
        theta=theta_hat,
        terms=terms,
        covariate_levels=list(design.covariate_levels),
        dropped_columns=dropped,
        level_counts=design.level_counts() if design.covariate_levels else {},
        iterations=iters,
    )


def wald_from_ci(coef: float, ci_low: float, ci_high: float, confidence: float = 0.95) -> tuple[float, float]:
    """Recover (SE, two-sided p) from a symmetric normal confidence interval."""
    z = norm.ppf(0.5 + confidence / 2.0)
    se = (ci_high - ci_low) / (2.0 * z)
    if not se > 0:
        raise ValidationError("confidence interval has zero width")
    return se, float(2.0 * norm.sf(abs(coef) / se))


def wald_stats(model: FittedModel, confidence: float = 0.95, *, require_converged: bool = True) -> list[CoefficientStat]:
    """z-test statistics per coefficient, with reference rows in covariate order.

    Reference levels come out with coefficient 0 and no interval or p-value.
    """
    if require_converged and not model.converged:
        raise NotConvergedError("model did not converge; Wald statistics are not reliable")
    if not 0 < confidence < 1:
        raise ValidationError("confidence must lie in (0, 1)")
    z_crit = norm.ppf(0.5 + confidence / 2.0)
    by_col = {name: i for i, name in enumerate(model.column_names)}
    counts = model.level_counts

    def stat(cov: str, level: str, i: Optional[int] = None) -> CoefficientStat:
        if i is None:
            i = by_col[column_name(cov, level)]
        b = float(model.coefficients[i])
        se = float(model.standard_errors[i])
        if not se > 0:
            raise NumericalError(f"zero standard error for {model.column_names[i]}")
        p = float(2.0 * norm.sf(abs(b / se)))
        return CoefficientStat(
            cov, level, b, b - z_crit * se, b + z_crit * se, p, se,
            num_probes=counts.get((cov, level)), confidence=confidence,
        )

    out = []
    if "Intercept" in by_col:
        out.append(stat("Intercept", "-"))
    if model.covariate_levels:
        for cov, levels in model.covariate_levels:
            out.append(CoefficientStat(cov, levels[0], 0.0, num_probes=counts.get((cov, levels[0])), reference=True, confidence=confidence))
            for lvl in levels[1:]:
                if column_name(cov, lvl) in by_col:
                    out.append(stat(cov, lvl))
    else:
        terms = model.terms or [(n, "") for n in model.column_names]
        for i, (cov, lvl) in enumerate(terms):
            if cov != "Intercept":
                out.append(stat(cov, lvl, i))
    return out
