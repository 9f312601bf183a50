"""Map raw match scores to log10 of the estimated false accept rate.

For each algorithm, thresholds are read off the impostor distribution at a
handful of tail FARs (the anchors). A least-squares line through the
``(anchor score, log10 anchor FAR)`` pairs then converts any raw score to
``est_log_far = m * score + b``. Only the tail below FAR 1e-2 is used since
that is where log10 FAR is close to linear in the score.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .data_model import ScoreTable
from .errors import NumericalError, ValidationError
from .metrics import InsufficientSupportError, quantile_sorted

log = logging.getLogger(__name__)

DEFAULT_ANCHORS = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2)
MIN_ANCHORS = 3


class NormalizationError(ValidationError):
    pass


class OrientationError(NormalizationError):
    """Fitted slope is not negative: higher scores do not mean stronger matches."""


class DegenerateFitError(NumericalError):
    """All anchor scores coincide, so no line can be fitted."""


@dataclass(frozen=True)
class NormalizationMap:
    algorithm: str
    m: float
    b: float
    anchors: tuple[tuple[float, float], ...]  # (far, score)
    fit_rmse: float

    def __call__(self, raw_score):
        if np.ndim(raw_score):
            return self.m * np.asarray(raw_score, dtype=float) + self.b
        return self.m * float(raw_score) + self.b

    @property
    def log_far_range(self) -> tuple[float, float]:
        fars = [f for f, _ in self.anchors]
        return math.log10(min(fars)), math.log10(max(fars))

    def is_extrapolated(self, raw_score):
        """True where the mapped value falls outside the anchored FAR range."""
        lo, hi = self.log_far_range
        est = self(raw_score)
        return (est < lo) | (est > hi) if np.ndim(est) else bool(est < lo or est > hi)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "m": self.m,
            "b": self.b,
            "anchors": [{"far": f, "score": s} for f, s in self.anchors],
            "fit_rmse": self.fit_rmse,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationMap":
        return cls(
            algorithm=d["algorithm"],
            m=float(d["m"]),
            b=float(d["b"]),
            anchors=tuple((float(a["far"]), float(a["score"])) for a in d["anchors"]),
            fit_rmse=float(d["fit_rmse"]),
        )


def apply_norm(nmap: NormalizationMap, raw_score: float) -> tuple[float, bool]:
    """Return ``(m * raw_score + b, extrapolated)`` for one score."""
    est = nmap.m * float(raw_score) + nmap.b
    lo, hi = nmap.log_far_range
    return est, bool(est < lo or est > hi)


def _line_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    xbar = x.mean()
    ybar = y.mean()
    dx = x - xbar
    sxx = float(dx @ dx)
    scale = max(float(np.max(np.abs(x))), 1.0)
    if sxx <= (1e-12 * scale) ** 2 * len(x):
        raise DegenerateFitError("anchor scores have zero variance; cannot fit a line")
    m = float(dx @ (y - ybar)) / sxx
    b = float(ybar - m * xbar)
    resid = y - (m * x + b)
    return m, b, float(math.sqrt(float(resid @ resid) / len(x)))


def fit_tail_map(
    impostor_scores,
    algorithm: str,
    anchor_fars: Sequence[float] = DEFAULT_ANCHORS,
    *,
    drop_unresolvable: bool = False,
) -> NormalizationMap:
    """Fit the raw score -> log10 FAR line on impostor tail anchors.

    With ``drop_unresolvable`` anchors finer than 1/N are skipped with a
    warning as long as at least three remain; otherwise they are an error.
    """
    s = np.sort(np.asarray(impostor_scores, dtype=float).ravel())
    if s.size < 2 or not np.all(np.isfinite(s)):
        raise InsufficientSupportError(f"{algorithm}: need at least 2 finite impostor scores")
    fars = sorted(float(f) for f in anchor_fars)
    if any(not 0.0 < f < 1.0 for f in fars):
        raise ValidationError(f"{algorithm}: anchor FARs must lie in (0, 1)")
    unresolved = [f for f in fars if f * s.size < 1.0 - 1e-9]
    if unresolved:
        if not drop_unresolvable or len(fars) - len(unresolved) < MIN_ANCHORS:
            raise InsufficientSupportError(
                f"{algorithm}: insufficient impostor support: {s.size} impostor scores cannot "
                f"resolve anchor FAR(s) {', '.join(f'{f:g}' for f in unresolved)}"
            )
        log.warning(
            "%s: dropping unresolvable anchor FAR(s) %s (%d impostor scores)",
            algorithm,
            ", ".join(f"{f:g}" for f in unresolved),
            s.size,
        )
        fars = [f for f in fars if f not in unresolved]

    scores = np.array([quantile_sorted(s, f) for f in fars])
    logf = np.log10(np.array(fars))
    m, b, rmse = _line_fit(scores, logf)
    if not m < 0:
        raise OrientationError(
            f"{algorithm}: fitted slope {m:g} is not negative; scores must increase with similarity"
        )
    return NormalizationMap(algorithm, m, b, tuple(zip(fars, scores.tolist())), rmse)


@dataclass(eq=False)
class NormalizedTable:
    """A score table with its per-row ``est_log_far`` and the fitted maps."""

    table: ScoreTable
    est_log_far: np.ndarray
    extrapolated: np.ndarray
    maps: dict[str, NormalizationMap] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.table)

    @property
    def frame(self) -> pd.DataFrame:
        return self.table.frame

    def take(self, mask) -> "NormalizedTable":
        mask = np.asarray(mask, dtype=bool)
        return NormalizedTable(self.table.take(mask), self.est_log_far[mask], self.extrapolated[mask], self.maps)

    def to_frame(self) -> pd.DataFrame:
        out = self.table.frame.copy()
        out["est_log_far"] = self.est_log_far
        out["extrapolated"] = self.extrapolated
        return out


def transform_table(table: ScoreTable, maps: dict[str, NormalizationMap]) -> NormalizedTable:
    """Apply already-fitted maps to every row."""
    algo = table.frame["algorithm"].to_numpy()
    raw = table.frame["raw_score"].to_numpy(dtype=float)
    est = np.empty(len(raw))
    extra = np.zeros(len(raw), dtype=bool)
    for name in pd.unique(algo):
        if name not in maps:
            raise NormalizationError(f"no normalization map for algorithm {name!r}")
        idx = algo == name
        nmap = maps[name]
        est[idx] = nmap.m * raw[idx] + nmap.b
        extra[idx] = nmap.is_extrapolated(raw[idx])
    return NormalizedTable(table, est, extra, dict(maps))


def normalize_table(
    table: ScoreTable,
    anchor_fars: Sequence[float] = DEFAULT_ANCHORS,
    *,
    drop_unresolvable: bool = False,
) -> NormalizedTable:
    """Fit one map per algorithm on its own impostor rows and transform every row.

    Tail quantiles alone always give a non-positive slope, so orientation is
    also checked against the genuine rows: if the median genuine score is
    below the median impostor score the scores look like distances and the
    fit is refused.
    """
    frame = table.frame
    impostor = ~table.is_genuine
    raw = frame["raw_score"].to_numpy(dtype=float)
    maps = {}
    for name in sorted(frame["algorithm"].unique()):
        mine = (frame["algorithm"] == name).to_numpy()
        scores = raw[impostor & mine]
        genuine = raw[~impostor & mine]
        if genuine.size and scores.size and np.median(genuine) < np.median(scores):
            raise OrientationError(
                f"normalization failed for algorithm {name}: genuine scores sit below impostor scores; "
                "higher scores must mean stronger matches"
            )
        try:
            maps[name] = fit_tail_map(scores, name, anchor_fars, drop_unresolvable=drop_unresolvable)
        except (ValidationError, NumericalError) as exc:
            msg = str(exc)
            if not msg.startswith(f"{name}:"):
                msg = f"{name}: {msg}"
            raise type(exc)(f"normalization failed for algorithm {msg}") from exc
    return transform_table(table, maps)


def maps_to_json(maps: dict[str, NormalizationMap]) -> str:
    return json.dumps([maps[k].to_dict() for k in sorted(maps)], indent=2)


def maps_from_json(text: str) -> dict[str, NormalizationMap]:
    return {d["algorithm"]: NormalizationMap.from_dict(d) for d in json.loads(text)}


def read_normalized(path, maps: Optional[dict[str, NormalizationMap]] = None) -> NormalizedTable:
    """Load a normalized CSV (schema columns plus ``est_log_far``/``extrapolated``)."""
    from .data_model import ingest_scores

    table = ingest_scores(path, "csv")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, usecols=["est_log_far", "extrapolated"])
    try:
        est = raw["est_log_far"].astype(float).to_numpy()
    except ValueError as exc:
        raise NormalizationError(f"{path}: unparseable est_log_far ({exc})") from None
    if not np.all(np.isfinite(est)):
        raise NormalizationError(f"{path}: non-finite est_log_far")
    extra = raw["extrapolated"].str.strip().str.lower().eq("true").to_numpy()
    return NormalizedTable(table, est, extra, dict(maps or {}))
