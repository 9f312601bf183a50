"""Score table schema, file ingest and the probe drop rules.

A score table holds one row per (probe, gallery subject, algorithm)
comparison. Probe metadata is repeated on every row of that probe and must
agree across those rows.

The table is stored column-wise in a pandas DataFrame; ``ScoreRow`` and
``ProbeMetadata`` are the row-level views.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np
import pandas as pd

from .errors import ValidationError

CAMERA_LOCATIONS = ("ctrl", "short_range", "medium_range", "long_range", "elevated", "uav")
MODALITIES = ("face", "body")

PROBE_COLUMNS = (
    "probe_id",
    "subject_id",
    "collection_id",
    "sensor_model",
    "camera_location",
    "modality",
    "head_height_px",
    "face_restricted",
    "has_gait",
    "has_turbulence",
    "solar_wm2",
    "wind_ms",
    "temperature_c",
    "subject_sex",
)

COLUMNS = (
    "probe_id",
    "subject_id",
    "gallery_subject_id",
    "algorithm",
    "raw_score",
    "collection_id",
    "sensor_model",
    "camera_location",
    "modality",
    "head_height_px",
    "face_restricted",
    "has_gait",
    "has_turbulence",
    "solar_wm2",
    "wind_ms",
    "temperature_c",
    "subject_sex",
)

_STRING_COLUMNS = (
    "probe_id",
    "subject_id",
    "gallery_subject_id",
    "algorithm",
    "collection_id",
    "sensor_model",
    "subject_sex",
)
_BOOL_COLUMNS = ("face_restricted", "has_gait", "has_turbulence")
# optional real columns and whether they must be non-negative
_OPTIONAL_REAL = {
    "head_height_px": True,
    "solar_wm2": True,
    "wind_ms": True,
    "temperature_c": False,
}
WEATHER_COLUMNS = ("solar_wm2", "wind_ms", "temperature_c")


class IngestError(ValidationError):
    pass


@dataclass(frozen=True)
class ProbeMetadata:
    probe_id: str
    subject_id: str
    collection_id: str
    sensor_model: str
    camera_location: str
    modality: str
    head_height_px: Optional[float]
    face_restricted: bool
    has_gait: bool
    has_turbulence: bool
    solar_wm2: Optional[float]
    wind_ms: Optional[float]
    temperature_c: Optional[float]
    subject_sex: str

    @property
    def sex_unspecified(self) -> bool:
        return self.subject_sex.strip().lower() == "unspecified"

    @property
    def missing_weather(self) -> bool:
        return any(getattr(self, c) is None for c in WEATHER_COLUMNS)


@dataclass(frozen=True)
class ScoreRow:
    probe: ProbeMetadata
    gallery_subject_id: str
    algorithm: str
    raw_score: float

    @property
    def is_genuine(self) -> bool:
        return self.probe.subject_id == self.gallery_subject_id


def _opt(value) -> Optional[float]:
    return None if pd.isna(value) else float(value)


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Immutable table of comparison scores.

    ``frame`` has the schema columns plus a boolean ``is_genuine`` column.
    Missing optional reals are NaN. Do not mutate ``frame`` in place; every
    operation here returns a new table.
    """

    frame: pd.DataFrame
    source: Optional[str] = None
    ingested_at: Optional[str] = None

    def __len__(self) -> int:
        return len(self.frame)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScoreTable):
            return NotImplemented
        a = self.frame.reset_index(drop=True)
        b = other.frame.reset_index(drop=True)
        return a.shape == b.shape and a.equals(b)

    @property
    def is_genuine(self) -> np.ndarray:
        return self.frame["is_genuine"].to_numpy(dtype=bool)

    @property
    def algorithms(self) -> list[str]:
        return sorted(self.frame["algorithm"].unique())

    def take(self, mask) -> "ScoreTable":
        return ScoreTable(
            self.frame.loc[np.asarray(mask, dtype=bool)].reset_index(drop=True),
            source=self.source,
            ingested_at=self.ingested_at,
        )

    def probes(self) -> pd.DataFrame:
        """One row of metadata per distinct probe, in first-seen order."""
        return self.frame.loc[:, list(PROBE_COLUMNS)].drop_duplicates("probe_id").reset_index(drop=True)

    def rows(self) -> Iterator[ScoreRow]:
        for rec in self.frame.itertuples(index=False):
            probe = ProbeMetadata(
                probe_id=rec.probe_id,
                subject_id=rec.subject_id,
                collection_id=rec.collection_id,
                sensor_model=rec.sensor_model,
                camera_location=rec.camera_location,
                modality=rec.modality,
                head_height_px=_opt(rec.head_height_px),
                face_restricted=bool(rec.face_restricted),
                has_gait=bool(rec.has_gait),
                has_turbulence=bool(rec.has_turbulence),
                solar_wm2=_opt(rec.solar_wm2),
                wind_ms=_opt(rec.wind_ms),
                temperature_c=_opt(rec.temperature_c),
                subject_sex=rec.subject_sex,
            )
            yield ScoreRow(probe, rec.gallery_subject_id, rec.algorithm, float(rec.raw_score))

    @classmethod
    def from_rows(cls, rows: Iterable[ScoreRow], source: Optional[str] = None) -> "ScoreTable":
        records = []
        for r in rows:
            rec = {c: getattr(r.probe, c) for c in PROBE_COLUMNS}
            rec.update(
                gallery_subject_id=r.gallery_subject_id,
                algorithm=r.algorithm,
                raw_score=r.raw_score,
            )
            records.append(rec)
        frame = pd.DataFrame.from_records(records, columns=list(COLUMNS))
        return cls(validate_frame(_coerce_typed(frame)), source=source)


@dataclass
class DropLog:
    dropped_missing_weather: int = 0
    dropped_unspecified_sex: int = 0
    retained: int = 0
    missing_weather_ids: list[str] = field(default_factory=list)
    unspecified_sex_ids: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.dropped_missing_weather + self.dropped_unspecified_sex + self.retained

    def to_dict(self) -> dict:
        return {
            "dropped_missing_weather": self.dropped_missing_weather,
            "dropped_unspecified_sex": self.dropped_unspecified_sex,
            "retained": self.retained,
            "missing_weather_ids": list(self.missing_weather_ids),
            "unspecified_sex_ids": list(self.unspecified_sex_ids),
        }


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


def _fail(row_index: int, msg: str):
    # row numbers are 1-based data rows (the header is not counted)
    raise IngestError(f"row {row_index + 1}: {msg}")


def _parse_real(col: pd.Series, name: str, optional: bool) -> np.ndarray:
    text = col.astype(str).str.strip()
    empty = text == ""
    if not optional and empty.any():
        _fail(int(np.flatnonzero(empty.to_numpy())[0]), f"missing value for {name}")
    probe = pd.to_numeric(text.where(~empty, None), errors="coerce").to_numpy(dtype=float)
    bad = np.isnan(probe) & ~empty.to_numpy()
    # literal "nan" parses to NaN; treat it as unparseable rather than missing
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        _fail(i, f"unparseable or non-finite {name} {text.iloc[i]!r}")
    # to_numeric's fast parser can be off by an ulp; float() round-trips repr exactly
    return text.where(~empty, "nan").astype(float).to_numpy()


def _parse_bool(col: pd.Series, name: str) -> np.ndarray:
    text = col.astype(str).str.strip().str.lower()
    ok = text.isin(("true", "false")).to_numpy()
    if not ok.all():
        i = int(np.flatnonzero(~ok)[0])
        _fail(i, f"{name} must be 'true' or 'false', got {col.iloc[i]!r}")
    return (text == "true").to_numpy()


def _coerce_text(frame: pd.DataFrame, has_label: bool) -> pd.DataFrame:
    missing = [c for c in COLUMNS if c not in frame.columns]
    if missing:
        raise IngestError(f"missing column(s): {', '.join(missing)}")
    out = pd.DataFrame(index=range(len(frame)))
    for c in _STRING_COLUMNS:
        out[c] = frame[c].astype(str).str.strip().to_numpy()
    out["raw_score"] = _parse_real(frame["raw_score"], "raw_score", optional=False)
    out["camera_location"] = frame["camera_location"].astype(str).str.strip().str.lower().to_numpy()
    out["modality"] = frame["modality"].astype(str).str.strip().str.lower().to_numpy()
    for c in _BOOL_COLUMNS:
        out[c] = _parse_bool(frame[c], c)
    for c in _OPTIONAL_REAL:
        out[c] = _parse_real(frame[c], c, optional=True)
    if has_label:
        out["is_genuine"] = _parse_bool(frame["is_genuine"], "is_genuine")
    return out[list(COLUMNS) + (["is_genuine"] if has_label else [])]


def _coerce_typed(frame: pd.DataFrame) -> pd.DataFrame:
    frame = frame.copy()
    for c in _OPTIONAL_REAL:
        frame[c] = pd.to_numeric(frame[c], errors="coerce").astype(float)
    frame["raw_score"] = frame["raw_score"].astype(float)
    for c in _BOOL_COLUMNS:
        frame[c] = frame[c].astype(bool)
    return frame


def validate_frame(frame: pd.DataFrame) -> pd.DataFrame:
    """Check every schema invariant and add the derived ``is_genuine`` column."""
    frame = frame.reset_index(drop=True)
    for c in _STRING_COLUMNS:
        empty = (frame[c].astype(str) == "").to_numpy()
        if empty.any() and c != "subject_sex":
            _fail(int(np.flatnonzero(empty)[0]), f"empty {c}")
    empty_sex = (frame["subject_sex"].astype(str) == "").to_numpy()
    if empty_sex.any():
        _fail(int(np.flatnonzero(empty_sex)[0]), "empty subject_sex")

    score = frame["raw_score"].to_numpy(dtype=float)
    bad = ~np.isfinite(score)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        _fail(i, f"non-finite raw_score {score[i]!r}")

    for c, nonneg in _OPTIONAL_REAL.items():
        v = frame[c].to_numpy(dtype=float)
        present = ~np.isnan(v)
        bad = present & ~np.isfinite(v)
        if nonneg:
            bad |= present & (v < 0)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            _fail(i, f"invalid {c} {v[i]!r}")

    for c, allowed in (("camera_location", CAMERA_LOCATIONS), ("modality", MODALITIES)):
        ok = frame[c].isin(allowed).to_numpy()
        if not ok.all():
            i = int(np.flatnonzero(~ok)[0])
            _fail(i, f"{c} {frame[c].iloc[i]!r} not one of {', '.join(allowed)}")

    derived = (frame["subject_id"] == frame["gallery_subject_id"]).to_numpy()
    if "is_genuine" in frame.columns:
        given = frame["is_genuine"].to_numpy(dtype=bool)
        mismatch = given != derived
        if mismatch.any():
            _fail(int(np.flatnonzero(mismatch)[0]), "is_genuine label disagrees with subject ids")
    frame = frame.loc[:, list(COLUMNS)].copy()
    frame["is_genuine"] = derived

    dup = frame.duplicated(["probe_id", "gallery_subject_id", "algorithm"]).to_numpy()
    if dup.any():
        i = int(np.flatnonzero(dup)[0])
        _fail(
            i,
            "duplicate (probe_id, gallery_subject_id, algorithm) triple "
            f"({frame['probe_id'].iloc[i]}, {frame['gallery_subject_id'].iloc[i]}, {frame['algorithm'].iloc[i]})",
        )

    meta = frame.loc[:, list(PROBE_COLUMNS)]
    first = meta.drop_duplicates()
    if first["probe_id"].duplicated().any():
        pid = first.loc[first["probe_id"].duplicated(), "probe_id"].iloc[0]
        i = int(np.flatnonzero((frame["probe_id"] == pid).to_numpy())[1])
        _fail(i, f"metadata for probe {pid} differs from its earlier rows")
    return frame


def _read_jsonl(path: Path) -> pd.DataFrame:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"row {lineno}: invalid JSON ({exc.msg})") from None
            rec = {}
            for k, v in obj.items():
                if v is None:
                    rec[k] = ""
                elif isinstance(v, bool):
                    rec[k] = "true" if v else "false"
                elif isinstance(v, float):
                    rec[k] = repr(v)
                else:
                    rec[k] = str(v)
            records.append(rec)
    return pd.DataFrame.from_records(records)


def ingest_scores(path, format: Optional[str] = None) -> ScoreTable:
    """Read a CSV or JSONL score file.

    The whole ingest fails on the first bad row; the error message names the
    1-based data row. ``format`` defaults to the file extension.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"no such file: {path}")
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "csv":
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False)
        raw.columns = [c.strip() for c in raw.columns]
    elif fmt == "jsonl":
        raw = _read_jsonl(path)
    else:
        raise IngestError(f"unsupported format {fmt!r} (expected csv or jsonl)")
    frame = _coerce_text(raw, has_label="is_genuine" in raw.columns)
    frame = validate_frame(frame)
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return ScoreTable(frame, source=str(path), ingested_at=stamp)


def _fmt_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else repr(float(value))
    return str(value)


def write_scores(table: ScoreTable, path, extra_columns: Iterable[str] = ()) -> None:
    """Write ``table`` as schema CSV; floats use ``repr`` so re-ingest is exact."""
    cols = list(COLUMNS) + list(extra_columns)
    frame = table.frame
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for rec in frame.loc[:, cols].itertuples(index=False, name=None):
            w.writerow([_fmt_cell(v) for v in rec])


# --------------------------------------------------------------------------
# drop rules
# --------------------------------------------------------------------------


def apply_drop_rules(table):
    """Remove probes with incomplete weather or unspecified sex.

    A probe matching both rules is counted under the weather rule only.
    Works on anything with a ``frame`` and a ``take(mask)`` method, so a
    normalized table can be filtered the same way.

    Returns
    -------
    (filtered table, DropLog)
    """
    frame = table.frame
    probes = frame.loc[:, ["probe_id", *WEATHER_COLUMNS, "subject_sex"]].drop_duplicates("probe_id")
    no_weather = probes[list(WEATHER_COLUMNS)].isna().any(axis=1).to_numpy()
    unspecified = (probes["subject_sex"].astype(str).str.strip().str.lower() == "unspecified").to_numpy()
    unspecified &= ~no_weather
    ids = probes["probe_id"].to_numpy()
    weather_ids = [str(p) for p in ids[no_weather]]
    sex_ids = [str(p) for p in ids[unspecified]]
    dropped = set(weather_ids) | set(sex_ids)
    keep = ~frame["probe_id"].isin(dropped).to_numpy()
    log = DropLog(
        dropped_missing_weather=len(weather_ids),
        dropped_unspecified_sex=len(sex_ids),
        retained=int(len(ids) - len(dropped)),
        missing_weather_ids=weather_ids,
        unspecified_sex_ids=sex_ids,
    )
    return table.take(keep), log
