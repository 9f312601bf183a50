"""Empirical FAR/TAR, tail thresholds and ROC points.

Conventions: a comparison is accepted when ``score >= threshold``; tied
scores count individually. Thresholds at a target FAR come from the linear
interpolation quantile of the impostor scores, evaluated at position
``(1 - far) * (N - 1)`` of the ascending sort (numpy's default ``linear``
quantile). The empirical FAR at such a threshold is within one rank step
(1/N) of the target.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


class InsufficientSupportError(ValidationError):
    """The impostor set is too small to resolve the requested FAR."""


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    far: float
    tar: float


def _scores(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValidationError(f"{what} scores are empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} scores contain non-finite values")
    return arr


def _accept_rate(scores: np.ndarray, threshold: float) -> float:
    return float(np.count_nonzero(scores >= threshold)) / scores.size


def empirical_far(impostor_scores, threshold: float) -> float:
    """Fraction of impostor scores at or above ``threshold``."""
    return _accept_rate(_scores(impostor_scores, "impostor"), float(threshold))


def empirical_tar(genuine_scores, threshold: float) -> float:
    """Fraction of genuine scores at or above ``threshold``."""
    return _accept_rate(_scores(genuine_scores, "genuine"), float(threshold))


def _check_far(target: float, n: int) -> None:
    if not 0.0 < target < 1.0:
        raise ValidationError(f"target FAR must lie in (0, 1), got {target!r}")
    # small slack so that e.g. far=1e-6 with exactly 10**6 scores is accepted
    if target * n < 1.0 - 1e-9:
        raise InsufficientSupportError(
            f"insufficient impostor support: FAR {target:g} needs at least "
            f"{1.0 / target:.6g} impostor scores, have {n}"
        )


def quantile_sorted(sorted_scores: np.ndarray, target_far: float) -> float:
    """Threshold at ``target_far`` for an already ascending-sorted array."""
    n = sorted_scores.size
    pos = (1.0 - target_far) * (n - 1)
    k = int(math.floor(pos))
    if k >= n - 1:
        return float(sorted_scores[-1])
    frac = pos - k
    lo = float(sorted_scores[k])
    hi = float(sorted_scores[k + 1])
    return lo + frac * (hi - lo)


def thresholds_at_fars(impostor_scores, target_fars) -> np.ndarray:
    """Vector form of :func:`threshold_at_far`; sorts the scores once."""
    s = np.sort(_scores(impostor_scores, "impostor"))
    if s.size < 2:
        raise InsufficientSupportError("insufficient impostor support: need at least 2 scores")
    out = np.empty(len(target_fars))
    for i, f in enumerate(target_fars):
        _check_far(float(f), s.size)
        out[i] = quantile_sorted(s, float(f))
    return out


def threshold_at_far(impostor_scores, target_far: float) -> float:
    """Score threshold whose impostor acceptance rate is ``target_far``.

    Raises ``InsufficientSupportError`` when ``target_far < 1/N``.
    """
    return float(thresholds_at_fars(impostor_scores, [target_far])[0])


def roc_curve(genuine, impostor, far_grid) -> list[RocPoint]:
    """One ROC point per FAR in ``far_grid`` (ascending, inside (0, 1)).

    Each point's ``far`` is the grid value; its threshold comes from
    :func:`threshold_at_far` and its TAR from :func:`empirical_tar`.
    """
    g = np.sort(_scores(genuine, "genuine"))
    grid = np.asarray(far_grid, dtype=float)
    if grid.size and np.any(np.diff(grid) < 0):
        raise ValidationError("far_grid must be ascending")
    thresholds = thresholds_at_fars(impostor, grid)
    # count of genuine >= t, identical to a direct count on the sorted array
    accepted = g.size - np.searchsorted(g, thresholds, side="left")
    return [
        RocPoint(threshold=float(t), far=float(f), tar=float(a) / g.size)
        for t, f, a in zip(thresholds, grid, accepted)
    ]
