import numpy as np
import pandas as pd
import pytest

from covfar.data_model import COLUMNS, ScoreTable, validate_frame

PROBE_DEFAULTS = dict(
    collection_id="BGC1",
    sensor_model="CAM-1",
    camera_location="ctrl",
    modality="face",
    head_height_px=120.0,
    face_restricted=False,
    has_gait=False,
    has_turbulence=False,
    solar_wm2=100.0,
    wind_ms=1.0,
    temperature_c=-5.0,
    subject_sex="female",
)


def record(probe_id, subject_id, gallery_subject_id, raw_score, algorithm="System A", **meta):
    rec = dict(PROBE_DEFAULTS)
    rec.update(meta)
    rec.update(
        probe_id=probe_id,
        subject_id=subject_id,
        gallery_subject_id=gallery_subject_id,
        algorithm=algorithm,
        raw_score=float(raw_score),
    )
    return rec


def table_from_records(records) -> ScoreTable:
    frame = pd.DataFrame.from_records(records, columns=list(COLUMNS))
    for c in ("head_height_px", "solar_wm2", "wind_ms", "temperature_c"):
        frame[c] = frame[c].astype(float)
    return ScoreTable(validate_frame(frame))


def probe_table(n_probes, impostors=2, seed=0, **meta) -> ScoreTable:
    """Every probe gets one genuine row and ``impostors`` impostor rows."""
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n_probes):
        subj = f"S{i}"
        recs.append(record(f"P{i}", subj, subj, rng.normal(5, 1), **meta))
        for k in range(impostors):
            recs.append(record(f"P{i}", subj, f"X{i}_{k}", rng.normal(0, 1), **meta))
    return table_from_records(recs)


@pytest.fixture
def make_table():
    return table_from_records


@pytest.fixture
def make_record():
    return record


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one criterion verdict; printed together at the end of the run."""
    store = request.config.stash.setdefault(ACCEPTANCE, {})

    def verdict(number: int, passed, detail: str):
        label = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
        store[number] = f"criterion {number}: {label}  {detail}"
        print(store[number])
        return passed

    return verdict


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for n in sorted(store):
            terminalreporter.write_line(store[n])
