"""Categorical covariates, treatment coding and group labels.

Every covariate is reduced to a small set of named levels. The first level
of each covariate is its reference: it gets no column in the design matrix,
so each coefficient is an offset against the easiest condition. Bins are
half-open ``[lo, hi)`` intervals, so a value on an edge falls in the bin
whose lower edge it equals (90 px is ">90 Pix", 3.0 m/s is "3-6 M/S").
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ValidationError

INF = math.inf


class BinningError(ValidationError):
    pass


class ScenarioError(ValidationError):
    pass


def _key(text: str) -> str:
    return " ".join(str(text).strip().lower().split())


@dataclass(frozen=True)
class Covariate:
    """One categorical covariate.

    ``kind`` selects how raw metadata becomes a level:

    * ``"category"``: ``mapping`` from raw value (case-insensitive) to level
    * ``"intervals"``: ``intervals`` of ``(lo, hi, level)``, half-open
    * ``"head_height"``: like intervals, except that a restricted face or a
      missing pixel count gives ``restricted_level``
    """

    name: str
    levels: tuple[str, ...]
    source: str
    kind: str
    mapping: Mapping[str, str] = field(default_factory=dict)
    intervals: tuple[tuple[float, float, str], ...] = ()
    restricted_level: Optional[str] = None
    level_aliases: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.levels)) != len(self.levels):
            raise ValidationError(f"covariate {self.name!r}: duplicate levels")
        if not self.levels:
            raise ValidationError(f"covariate {self.name!r}: no levels")
        if self.kind not in ("category", "intervals", "head_height"):
            raise ValidationError(f"covariate {self.name!r}: unknown kind {self.kind!r}")
        targets = set(self.mapping.values()) | {lvl for _, _, lvl in self.intervals}
        if self.restricted_level is not None:
            targets.add(self.restricted_level)
        unknown = targets - set(self.levels)
        if unknown:
            raise ValidationError(f"covariate {self.name!r}: level(s) {sorted(unknown)} not declared")
        for lo, hi, lvl in self.intervals:
            if not lo < hi:
                raise ValidationError(f"covariate {self.name!r}: empty interval for {lvl!r}")

    @property
    def reference(self) -> str:
        return self.levels[0]

    def resolve_level(self, level: str) -> str:
        k = _key(level)
        for lvl in self.levels:
            if _key(lvl) == k:
                return lvl
        for alias, lvl in self.level_aliases.items():
            if _key(alias) == k:
                return lvl
        raise ScenarioError(f"unknown level {level!r} for covariate {self.name!r}; expected one of {list(self.levels)}")

    def _interval_level(self, value: float) -> str:
        for lo, hi, lvl in self.intervals:
            if lo <= value < hi:
                return lvl
        raise BinningError(f"{self.name}: value {value!r} falls outside every bin")

    def bin_value(self, value, face_restricted: bool = False) -> str:
        """Level for a single raw value."""
        if self.kind == "category":
            k = _key(value if not isinstance(value, bool) else str(value))
            for raw, lvl in self.mapping.items():
                if _key(raw) == k:
                    return lvl
            raise BinningError(f"{self.name}: no level for value {value!r}")
        missing = value is None or math.isnan(value)
        if self.kind == "head_height":
            if not missing and value < 0:
                raise BinningError(f"{self.name}: negative value {value!r}")
            if face_restricted or missing:
                return self.restricted_level
        if missing or not math.isfinite(value):
            raise BinningError(f"{self.name}: value {value!r} is missing or not finite")
        return self._interval_level(float(value))

    def assign(self, frame) -> np.ndarray:
        """Level index for every row of a score frame.

        Raises ``BinningError`` naming the first offending probe.
        """
        n = len(frame)
        out = np.full(n, -1, dtype=int)
        index = {lvl: i for i, lvl in enumerate(self.levels)}
        if self.kind == "category":
            raw = frame[self.source].astype(str).str.strip().str.lower().str.split().str.join(" ").to_numpy()
            for value, lvl in self.mapping.items():
                out[raw == _key(value)] = index[lvl]
        else:
            v = frame[self.source].to_numpy(dtype=float)
            todo = np.ones(n, dtype=bool)
            if self.kind == "head_height":
                neg = v < 0
                if neg.any():
                    pid = frame["probe_id"].iloc[int(np.flatnonzero(neg)[0])]
                    raise BinningError(f"{self.name}: negative value for probe {pid}")
                restricted = frame["face_restricted"].to_numpy(dtype=bool) | np.isnan(v)
                out[restricted] = index[self.restricted_level]
                todo = ~restricted
            for lo, hi, lvl in self.intervals:
                out[todo & (v >= lo) & (v < hi)] = index[lvl]
        bad = out < 0
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise BinningError(
                f"{self.name}: cannot bin value {frame[self.source].iloc[i]!r} of probe {frame['probe_id'].iloc[i]}"
            )
        return out

    def to_dict(self) -> dict:
        d = {"name": self.name, "levels": list(self.levels), "source": self.source, "kind": self.kind}
        if self.mapping:
            d["mapping"] = dict(self.mapping)
        if self.intervals:
            d["intervals"] = [[_edge_out(lo), _edge_out(hi), lvl] for lo, hi, lvl in self.intervals]
        if self.restricted_level is not None:
            d["restricted_level"] = self.restricted_level
        if self.level_aliases:
            d["level_aliases"] = dict(self.level_aliases)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Covariate":
        return cls(
            name=d["name"],
            levels=tuple(d["levels"]),
            source=d["source"],
            kind=d["kind"],
            mapping=dict(d.get("mapping", {})),
            intervals=tuple((_edge_in(lo, -INF), _edge_in(hi, INF), lvl) for lo, hi, lvl in d.get("intervals", [])),
            restricted_level=d.get("restricted_level"),
            level_aliases=dict(d.get("level_aliases", {})),
        )


# JSON has no infinity; null stands for an open edge
def _edge_out(x: float):
    return None if math.isinf(x) else x


def _edge_in(x, default: float) -> float:
    return default if x is None else float(x)


def make_group_key(sensor_model: str, collection_id: str) -> str:
    """Group label ``"<sensor> - <collection>"``."""
    sensor_model = str(sensor_model).strip()
    collection_id = str(collection_id).strip()
    if not sensor_model or not collection_id:
        raise ValidationError(f"group key needs a sensor model and a collection id, got {sensor_model!r}, {collection_id!r}")
    return f"{sensor_model} - {collection_id}"


@dataclass(frozen=True)
class CovariateSpec:
    covariates: tuple[Covariate, ...]
    group_by: tuple[str, str] = ("sensor_model", "collection_id")
    aliases: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate covariate names in spec")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.covariates]

    @property
    def terms(self) -> list[tuple[str, str]]:
        """(covariate, level) per design column; the intercept is ``("Intercept", "-")``."""
        out = [("Intercept", "-")]
        for c in self.covariates:
            out.extend((c.name, lvl) for lvl in c.levels[1:])
        return out

    @property
    def column_names(self) -> list[str]:
        return [column_name(c, l) for c, l in self.terms]

    def covariate(self, name: str) -> Covariate:
        k = _key(name)
        for c in self.covariates:
            if _key(c.name) == k:
                return c
        for alias, target in self.aliases.items():
            if _key(alias) == k:
                return self.covariate(target)
        raise ScenarioError(f"unknown covariate {name!r}; expected one of {self.names}")

    def to_dict(self) -> dict:
        return {
            "covariates": [c.to_dict() for c in self.covariates],
            "group_by": list(self.group_by),
            "aliases": dict(self.aliases),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CovariateSpec":
        return cls(
            covariates=tuple(Covariate.from_dict(c) for c in d["covariates"]),
            group_by=tuple(d.get("group_by", ("sensor_model", "collection_id"))),
            aliases=dict(d.get("aliases", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CovariateSpec":
        return cls.from_dict(json.loads(text))


def column_name(covariate: str, level: str) -> str:
    return "Intercept" if covariate == "Intercept" else f"{covariate}[{level}]"


def _default_spec() -> CovariateSpec:
    boolean = {"false": "False", "true": "True"}
    covs = (
        Covariate(
            "Algorithm",
            ("System A", "System B", "System C", "System D", "System E"),
            source="algorithm",
            kind="category",
            mapping={f"System {x}": f"System {x}" for x in "ABCDE"},
        ),
        Covariate("Has Gait", ("False", "True"), source="has_gait", kind="category", mapping=boolean),
        Covariate("Has Turb.", ("False", "True"), source="has_turbulence", kind="category", mapping=boolean),
        Covariate(
            "Head Height",
            (">90 Pix", "60-90 Pix", "50-60 Pix", "40-50 Pix", "30-40 Pix", "<30 Pix", "Restricted"),
            source="head_height_px",
            kind="head_height",
            intervals=(
                (0.0, 30.0, "<30 Pix"),
                (30.0, 40.0, "30-40 Pix"),
                (40.0, 50.0, "40-50 Pix"),
                (50.0, 60.0, "50-60 Pix"),
                (60.0, 90.0, "60-90 Pix"),
                (90.0, INF, ">90 Pix"),
            ),
            restricted_level="Restricted",
            level_aliases={"$>$90 Pix": ">90 Pix", "$<$30 Pix": "<30 Pix"},
        ),
        Covariate("Modality", ("Face", "Body"), source="modality", kind="category", mapping={"face": "Face", "body": "Body"}),
        Covariate(
            "Camera Location",
            ("Ctrl", "Short Range", "Medium Range", "Long Range", "Elevated", "Uav"),
            source="camera_location",
            kind="category",
            mapping={
                "ctrl": "Ctrl",
                "short_range": "Short Range",
                "medium_range": "Medium Range",
                "long_range": "Long Range",
                "elevated": "Elevated",
                "uav": "Uav",
            },
            level_aliases={
                "Short-Range": "Short Range",
                "Med-Range": "Medium Range",
                "Medium-Range": "Medium Range",
                "Long-Range": "Long Range",
                "UAV": "Uav",
            },
        ),
        Covariate(
            "Solar Loading",
            ("0-300 W/M$^2$", "300-600 W/M$^2$", "600-900 W/M$^2$", "Above 900 W/M$^2$"),
            source="solar_wm2",
            kind="intervals",
            intervals=(
                (0.0, 300.0, "0-300 W/M$^2$"),
                (300.0, 600.0, "300-600 W/M$^2$"),
                (600.0, 900.0, "600-900 W/M$^2$"),
                (900.0, INF, "Above 900 W/M$^2$"),
            ),
            level_aliases={
                "0-300": "0-300 W/M$^2$",
                "300-600": "300-600 W/M$^2$",
                "600-900": "600-900 W/M$^2$",
                "Above 900": "Above 900 W/M$^2$",
            },
        ),
        Covariate(
            "Wind Speed",
            ("0-3 M/S", "3-6 M/S", "6-9 M/S", "9-12 M/S"),
            source="wind_ms",
            kind="intervals",
            intervals=((0.0, 3.0, "0-3 M/S"), (3.0, 6.0, "3-6 M/S"), (6.0, 9.0, "6-9 M/S"), (9.0, 12.0, "9-12 M/S")),
        ),
        Covariate(
            "Temperature",
            ("Below 0 C", "0-10 C", "10-20 C", "20-30 C", "30-40 C"),
            source="temperature_c",
            kind="intervals",
            intervals=(
                (-INF, 0.0, "Below 0 C"),
                (0.0, 10.0, "0-10 C"),
                (10.0, 20.0, "10-20 C"),
                (20.0, 30.0, "20-30 C"),
                (30.0, 40.0, "30-40 C"),
            ),
        ),
    )
    aliases = {
        "Head Hgt": "Head Height",
        "Camera Loc": "Camera Location",
        "Solar Load": "Solar Loading",
        "Has Turb": "Has Turb.",
        "Has Turbulence": "Has Turb.",
    }
    return CovariateSpec(covs, aliases=aliases)


DEFAULT_SPEC = _default_spec()


def bin_head_height(pixels: Optional[float], face_restricted: bool = False) -> str:
    return DEFAULT_SPEC.covariate("Head Height").bin_value(pixels, face_restricted)


def bin_solar(wm2: float) -> str:
    return DEFAULT_SPEC.covariate("Solar Loading").bin_value(wm2)


def bin_wind(ms: float) -> str:
    return DEFAULT_SPEC.covariate("Wind Speed").bin_value(ms)


def bin_temperature(c: float) -> str:
    return DEFAULT_SPEC.covariate("Temperature").bin_value(c)


# --------------------------------------------------------------------------
# design matrix
# --------------------------------------------------------------------------


@dataclass(eq=False)
class DesignMatrix:
    y: np.ndarray
    X: np.ndarray
    groups: np.ndarray
    column_names: list[str]
    terms: list[tuple[str, str]]
    covariate_levels: list[tuple[str, tuple[str, ...]]]
    level_index: Optional[np.ndarray] = None  # (n, n_covariates) level positions
    probe_ids: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def level_counts(self) -> dict[tuple[str, str], int]:
        """Rows per (covariate, level), reference levels included."""
        counts = {}
        for j, (name, levels) in enumerate(self.covariate_levels):
            if self.level_index is not None:
                col = self.level_index[:, j]
                for i, lvl in enumerate(levels):
                    counts[(name, lvl)] = int(np.count_nonzero(col == i))
            else:
                total = 0
                for lvl in levels[1:]:
                    k = self.column_names.index(column_name(name, lvl))
                    counts[(name, lvl)] = int(self.X[:, k].sum())
                    total += counts[(name, lvl)]
                counts[(name, levels[0])] = self.n - total
        return counts


def encode_levels(level_index: np.ndarray, spec: CovariateSpec) -> np.ndarray:
    """Treatment-coded X (intercept first) from an (n, k) array of level positions."""
    n = level_index.shape[0]
    cols = [np.ones(n)]
    for j, cov in enumerate(spec.covariates):
        for i in range(1, len(cov.levels)):
            cols.append((level_index[:, j] == i).astype(float))
    return np.column_stack(cols)


def group_labels(frame, spec: CovariateSpec = DEFAULT_SPEC) -> np.ndarray:
    a, b = spec.group_by
    left = frame[a].astype(str).str.strip()
    right = frame[b].astype(str).str.strip()
    bad = ((left == "") | (right == "")).to_numpy()
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValidationError(f"empty group component for probe {frame['probe_id'].iloc[i]}")
    return (left + " - " + right).to_numpy(dtype=object)


def build_design(table, spec: CovariateSpec = DEFAULT_SPEC, *, genuine_only: bool = True) -> DesignMatrix:
    """Design matrix for a normalized table.

    The response is ``est_log_far``; by default only genuine comparisons are
    modelled. Row order follows the table.
    """
    frame = table.frame
    y = np.asarray(table.est_log_far, dtype=float)
    if genuine_only:
        mask = table.table.is_genuine if hasattr(table, "table") else frame["is_genuine"].to_numpy(dtype=bool)
        frame = frame.loc[mask].reset_index(drop=True)
        y = y[mask]
    level_index = np.column_stack([c.assign(frame) for c in spec.covariates]) if spec.covariates else np.zeros((len(frame), 0), dtype=int)
    X = encode_levels(level_index, spec)
    return DesignMatrix(
        y=y.copy(),
        X=X,
        groups=group_labels(frame, spec),
        column_names=spec.column_names,
        terms=spec.terms,
        covariate_levels=[(c.name, c.levels) for c in spec.covariates],
        level_index=level_index,
        probe_ids=frame["probe_id"].to_numpy(dtype=object),
    )


# --------------------------------------------------------------------------
# scenarios
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """Chosen level per covariate; covariates not named sit at their reference."""

    choices: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def parse(cls, assignments: Sequence[str]) -> "Scenario":
        """Build from ``"Covariate=Level"`` strings."""
        choices = {}
        for a in assignments:
            if "=" not in a:
                raise ScenarioError(f"expected 'Covariate=Level', got {a!r}")
            name, level = a.split("=", 1)
            name, level = name.strip(), level.strip()
            if not name or not level:
                raise ScenarioError(f"expected 'Covariate=Level', got {a!r}")
            if name in choices:
                raise ScenarioError(f"covariate {name!r} set twice")
            choices[name] = level
        return cls(choices)

    def resolve(self, spec: CovariateSpec = DEFAULT_SPEC) -> dict[str, str]:
        """Canonical ``{covariate: level}`` for every covariate in ``spec`` order."""
        chosen = {}
        for name, level in self.choices.items():
            cov = spec.covariate(name)
            if cov.name in chosen:
                raise ScenarioError(f"covariate {cov.name!r} set twice")
            chosen[cov.name] = cov.resolve_level(level)
        return {c.name: chosen.get(c.name, c.reference) for c in spec.covariates}


def scenario_vector(spec: CovariateSpec, scenario: Scenario) -> np.ndarray:
    resolved = scenario.resolve(spec)
    idx = np.array([[c.levels.index(resolved[c.name]) for c in spec.covariates]], dtype=int)
    return encode_levels(idx.reshape(1, len(spec.covariates)), spec)[0]
