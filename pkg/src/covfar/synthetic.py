"""Synthetic score tables with known ground truth.

Genuine comparisons are generated directly in log10-FAR space,

    est_log_far = x' beta + u_group + e,

and mapped back to raw scores through a per-algorithm tail line
``raw = (est - b) / m``. Impostor scores come from the same line applied to
a uniform FAR variable, so their tail is exactly log-linear and the
normalization step has a known answer.

Randomness comes from a single ``numpy.random.Generator`` (PCG64) seeded
with ``SynthConfig.seed``. Draw order is fixed, so a seed reproduces the
same table on any platform with the same numpy major version.

Impostor sampling defaults to a shuffled lattice ``u_j = (j + 0.005) / N``
rather than iid uniforms. With iid draws the handful of scores behind the
finest anchor (one or ten comparisons) bias the fitted slope by several
percent, which is larger than the coefficient standard errors the
generator is meant to check. ``impostor_sampling="iid"`` is available.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from . import fixtures
from .covariates import DEFAULT_SPEC, CovariateSpec, DesignMatrix, encode_levels
from .data_model import COLUMNS, ScoreTable, validate_frame
from .errors import ValidationError

_LATTICE_OFFSET = 0.005

DEFAULT_TAIL_MAPS = {
    "System A": (-20.0, 4.0),
    "System B": (-0.5, 1.0),
    "System C": (-2.0, 0.0),
    "System D": (-0.1, 3.0),
    "System E": (-0.02, -1.0),
}

# covariate sources that are not drawn per probe
_PER_ROW = ("algorithm",)


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5))


def _reference_frequencies(spec: CovariateSpec) -> dict[str, dict[str, float]]:
    counts = fixtures.level_counts()
    total = fixtures.MODEL_SUMMARY["n_observations"]
    out = {}
    for cov in spec.covariates:
        if cov.source in _PER_ROW:
            continue
        c = {lvl: counts.get((cov.name, lvl), 0) for lvl in cov.levels}
        if len(cov.levels) == 2 and c[cov.levels[1]] == 0:
            # the published table lists 0 probes for boolean "True" levels
            c[cov.levels[1]] = total - c[cov.levels[0]]
        s = sum(c.values())
        out[cov.name] = {lvl: v / s for lvl, v in c.items()}
    return out


def _reference_beta() -> dict[str, float]:
    beta = {"Intercept": -7.003}
    beta.update(fixtures.coefficient_values())
    return beta


@dataclass
class SynthConfig:
    seed: int = 0
    n_probes: int = fixtures.PROBES_TOTAL
    n_subjects: int = 371
    algorithms: tuple[str, ...] = ("System A", "System B", "System C", "System D", "System E")
    true_beta: dict[str, float] = field(default_factory=_reference_beta)
    group_sd: float = math.sqrt(float(fixtures.GROUP_VARIANCE))
    residual_sd: float = math.sqrt(fixtures.MODEL_SUMMARY["scale"])
    level_frequencies: Optional[dict[str, dict[str, float]]] = None
    groups: tuple[tuple[str, str, float], ...] = fixtures.GROUP_COUNTS
    tail_maps: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_TAIL_MAPS))
    impostors_per_probe: int = 11
    impostor_sampling: str = "lattice"
    missing_weather_fraction: float = fixtures.PROBES_MISSING_WEATHER / fixtures.PROBES_TOTAL
    unspecified_sex_fraction: float = fixtures.PROBES_UNSPECIFIED_SEX / fixtures.PROBES_TOTAL
    spec: CovariateSpec = DEFAULT_SPEC

    def frequencies(self) -> dict[str, dict[str, float]]:
        return self.level_frequencies if self.level_frequencies is not None else _reference_frequencies(self.spec)

    def validate(self) -> None:
        cols = set(self.spec.column_names)
        unknown = set(self.true_beta) - cols
        if unknown:
            raise ValidationError(f"true_beta names unknown column(s): {sorted(unknown)}")
        for name, freqs in self.frequencies().items():
            cov = self.spec.covariate(name)
            bad = set(freqs) - set(cov.levels)
            if bad:
                raise ValidationError(f"frequencies for {name} name unknown level(s) {sorted(bad)}")
            if any(v < 0 for v in freqs.values()) or abs(sum(freqs.values()) - 1.0) > 1e-9:
                raise ValidationError(f"frequencies for {name} must be non-negative and sum to 1")
        for a in self.algorithms:
            if a not in self.tail_maps:
                raise ValidationError(f"no tail map for algorithm {a!r}")
            if not self.tail_maps[a][0] < 0:
                raise ValidationError(f"tail slope for {a!r} must be negative")
        if self.group_sd < 0 or not self.residual_sd > 0:
            raise ValidationError("group_sd must be >= 0 and residual_sd > 0")
        if not 0 <= self.missing_weather_fraction <= 1 or not 0 <= self.unspecified_sex_fraction <= 1:
            raise ValidationError("drop fractions must lie in [0, 1]")
        if self.impostors_per_probe >= self.n_subjects:
            raise ValidationError("impostors_per_probe must be smaller than n_subjects")
        if self.impostor_sampling not in ("lattice", "iid"):
            raise ValidationError(f"unknown impostor_sampling {self.impostor_sampling!r}")
        if self.n_probes < 1 or not self.groups:
            raise ValidationError("need at least one probe and one group")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_probes": self.n_probes,
            "n_subjects": self.n_subjects,
            "algorithms": list(self.algorithms),
            "true_beta": dict(self.true_beta),
            "group_sd": self.group_sd,
            "residual_sd": self.residual_sd,
            "level_frequencies": self.frequencies(),
            "tail_maps": {k: list(v) for k, v in self.tail_maps.items()},
            "impostors_per_probe": self.impostors_per_probe,
            "impostor_sampling": self.impostor_sampling,
            "missing_weather_fraction": self.missing_weather_fraction,
            "unspecified_sex_fraction": self.unspecified_sex_fraction,
        }


@dataclass
class GroundTruth:
    config: SynthConfig
    beta: dict[str, float]
    group_effects: dict[str, float]
    linear_predictor: np.ndarray  # x' beta + u_group for each genuine row, table order
    noise: np.ndarray

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "beta": dict(self.beta),
            "group_effects": dict(self.group_effects),
            "group_variance": self.config.group_sd**2,
            "residual_variance": self.config.residual_sd**2,
            "tail_maps": {k: {"m": v[0], "b": v[1]} for k, v in self.config.tail_maps.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _beta_vector(spec: CovariateSpec, beta: dict[str, float]) -> np.ndarray:
    return np.array([beta.get(c, 0.0) for c in spec.column_names])


def sample_levels(rng: np.random.Generator, spec: CovariateSpec, freqs: dict[str, dict[str, float]], n: int) -> np.ndarray:
    """(n, k) level positions; covariates without frequencies stay at reference."""
    out = np.zeros((n, len(spec.covariates)), dtype=int)
    for j, cov in enumerate(spec.covariates):
        if cov.name not in freqs:
            continue
        p = np.array([freqs[cov.name].get(lvl, 0.0) for lvl in cov.levels])
        out[:, j] = rng.choice(len(cov.levels), size=n, p=p / p.sum())
    return out


def _uniform_in(rng, lo: float, hi: float, n: int, span: float) -> np.ndarray:
    if math.isinf(lo):
        lo = hi - span
    if math.isinf(hi):
        hi = lo + span
    return rng.uniform(lo, hi, n)


def _raw_values(rng, cov, idx: np.ndarray, span: float) -> np.ndarray:
    """Raw metadata values that bin back to the sampled interval levels."""
    out = np.empty(len(idx))
    bounds = {lvl: (lo, hi) for lo, hi, lvl in cov.intervals}
    for i, lvl in enumerate(cov.levels):
        sel = idx == i
        if sel.any() and lvl in bounds:
            lo, hi = bounds[lvl]
            out[sel] = _uniform_in(rng, lo, hi, int(sel.sum()), span)
    return out


def generate(config: Optional[SynthConfig] = None) -> tuple[ScoreTable, GroundTruth]:
    """Draw a score table from ``config``; same seed, same table."""
    cfg = config or SynthConfig()
    cfg.validate()
    spec = cfg.spec
    rng = np.random.default_rng(cfg.seed)
    P = cfg.n_probes
    freqs = cfg.frequencies()

    subjects = np.array([f"S{i:04d}" for i in range(cfg.n_subjects)], dtype=object)
    subj = rng.integers(0, cfg.n_subjects, P)
    weights = np.array([g[2] for g in cfg.groups], dtype=float)
    gidx = rng.choice(len(cfg.groups), size=P, p=weights / weights.sum())
    group_labels = [f"{s} - {c}" for s, c, _ in cfg.groups]
    u_group = rng.normal(0.0, cfg.group_sd, len(cfg.groups)) if cfg.group_sd > 0 else np.zeros(len(cfg.groups))
    levels = sample_levels(rng, spec, freqs, P)

    probe = {
        "probe_id": np.array([f"P{i:06d}" for i in range(P)], dtype=object),
        "subject_id": subjects[subj],
        "sensor_model": np.array([cfg.groups[i][0] for i in gidx], dtype=object),
        "collection_id": np.array([cfg.groups[i][1] for i in gidx], dtype=object),
    }
    for j, cov in enumerate(spec.covariates):
        idx = levels[:, j]
        if cov.kind == "category" and cov.source not in _PER_ROW:
            inverse = {lvl: raw for raw, lvl in cov.mapping.items()}
            raw = np.array([inverse[lvl] for lvl in cov.levels], dtype=object)[idx]
            if cov.source in ("has_gait", "has_turbulence"):
                raw = raw == "true"
            probe[cov.source] = raw
        elif cov.kind == "head_height":
            restricted = idx == cov.levels.index(cov.restricted_level)
            px = _raw_values(rng, cov, idx, span=110.0)
            blank = restricted & (rng.random(P) < 0.5)
            px[restricted] = rng.uniform(5.0, 120.0, int(restricted.sum()))
            px[blank] = np.nan
            probe[cov.source] = px
            probe["face_restricted"] = restricted
        elif cov.kind == "intervals":
            probe[cov.source] = _raw_values(rng, cov, idx, span=200.0 if cov.source == "solar_wm2" else 15.0)
    for col, default in (("has_gait", False), ("has_turbulence", False), ("face_restricted", False)):
        probe.setdefault(col, np.full(P, default))
    for col in ("camera_location", "modality"):
        probe.setdefault(col, np.full(P, "ctrl" if col == "camera_location" else "face", dtype=object))
    for col in ("head_height_px", "solar_wm2", "wind_ms", "temperature_c"):
        probe.setdefault(col, np.full(P, np.nan))

    # drop-rule material: exact, disjoint probe counts so the drop log is predictable
    n_weather = _round_half_away(cfg.missing_weather_fraction * P)
    n_sex = min(_round_half_away(cfg.unspecified_sex_fraction * P), P - n_weather)
    order = rng.permutation(P)
    no_weather = np.zeros(P, dtype=bool)
    no_weather[order[:n_weather]] = True
    unspecified = np.zeros(P, dtype=bool)
    unspecified[order[n_weather : n_weather + n_sex]] = True
    masks = rng.integers(1, 8, P)  # non-empty subset of the three weather fields
    for bit, col in enumerate(("solar_wm2", "wind_ms", "temperature_c")):
        blank = no_weather & ((masks >> bit) & 1).astype(bool)
        probe[col] = np.where(blank, np.nan, probe[col])
    sex = np.where(rng.random(P) < 0.5, "female", "male").astype(object)
    probe["subject_sex"] = np.where(unspecified, "unspecified", sex).astype(object)

    beta = _beta_vector(spec, cfg.true_beta)
    alg_pos = None
    for j, cov in enumerate(spec.covariates):
        if cov.source == "algorithm":
            alg_pos = j
    K = cfg.impostors_per_probe
    # impostor galleries: K distinct subjects other than the probe's own
    offsets = np.argsort(rng.random((P, cfg.n_subjects - 1)), axis=1)[:, :K] + 1 if K else np.zeros((P, 0), int)
    gallery_imp = subjects[(subj[:, None] + offsets) % cfg.n_subjects]

    blocks = []
    lin_parts = []
    noise_parts = []
    for a in cfg.algorithms:
        m, b = cfg.tail_maps[a]
        lv = levels.copy()
        if alg_pos is not None:
            lv[:, alg_pos] = spec.covariates[alg_pos].levels.index(
                spec.covariates[alg_pos].mapping.get(a, a) if spec.covariates[alg_pos].mapping else a
            )
        lin = encode_levels(lv, spec) @ beta + u_group[gidx]
        eps = rng.normal(0.0, cfg.residual_sd, P)
        lin_parts.append(lin)
        noise_parts.append(eps)
        genuine = pd.DataFrame(probe)
        genuine["gallery_subject_id"] = probe["subject_id"]
        genuine["algorithm"] = a
        genuine["raw_score"] = (lin + eps - b) / m
        blocks.append(genuine)
        if K:
            N = P * K
            if cfg.impostor_sampling == "lattice":
                u = (rng.permutation(N) + _LATTICE_OFFSET) / N
            else:
                u = 1.0 - rng.random(N)
            imp = pd.DataFrame({k: np.repeat(v, K) for k, v in probe.items()})
            imp["gallery_subject_id"] = gallery_imp.ravel()
            imp["algorithm"] = a
            imp["raw_score"] = (np.log10(u) - b) / m
            blocks.append(imp)

    frame = pd.concat(blocks, ignore_index=True).loc[:, list(COLUMNS)]
    table = ScoreTable(validate_frame(frame), source=f"synthetic(seed={cfg.seed})")
    truth = GroundTruth(
        config=cfg,
        beta=dict(cfg.true_beta),
        group_effects={lbl: float(u) for lbl, u in zip(group_labels, u_group)},
        linear_predictor=np.concatenate(lin_parts),
        noise=np.concatenate(noise_parts),
    )
    return table, truth


def simulate_design(
    n_rows: int,
    n_groups: int,
    *,
    seed: int = 0,
    beta: Optional[dict[str, float]] = None,
    group_sd: float = 1.0,
    residual_sd: float = 2.0,
    spec: CovariateSpec = DEFAULT_SPEC,
    level_frequencies: Optional[dict[str, dict[str, float]]] = None,
) -> tuple[DesignMatrix, np.ndarray]:
    """Design matrix drawn straight from the model, bypassing raw scores.

    Every covariate (the algorithm included) is sampled per row. Returns the
    design and the true coefficient vector in column order.
    """
    rng = np.random.default_rng(seed)
    freqs = dict(level_frequencies) if level_frequencies is not None else _reference_frequencies(spec)
    for cov in spec.covariates:
        freqs.setdefault(cov.name, {lvl: 1.0 / len(cov.levels) for lvl in cov.levels})
    b = _beta_vector(spec, beta if beta is not None else _reference_beta())
    level_index = sample_levels(rng, spec, freqs, n_rows)
    X = encode_levels(level_index, spec)
    g = rng.integers(0, n_groups, n_rows)
    u = rng.normal(0.0, group_sd, n_groups)
    y = X @ b + u[g] + rng.normal(0.0, residual_sd, n_rows)
    design = DesignMatrix(
        y=y,
        X=X,
        groups=np.array([f"G{i:03d}" for i in g], dtype=object),
        column_names=spec.column_names,
        terms=spec.terms,
        covariate_levels=[(c.name, c.levels) for c in spec.covariates],
        level_index=level_index,
    )
    return design, b
