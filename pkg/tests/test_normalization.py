import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import record, table_from_records
from covfar.data_model import ScoreTable, write_scores
from covfar.errors import ValidationError
from covfar.metrics import InsufficientSupportError, threshold_at_far
from covfar.normalization import (
    DEFAULT_ANCHORS,
    DegenerateFitError,
    NormalizationMap,
    OrientationError,
    apply_norm,
    fit_tail_map,
    maps_from_json,
    maps_to_json,
    normalize_table,
    read_normalized,
)

N_EXACT = 10**6 + 1


def stepped_impostors(values=(6, 5, 4, 3, 2)):
    """Sorted sample whose interpolated quantiles at 1e-6..1e-2 are exactly ``values``.

    Each anchor position (1 - f) * 1e6 sits inside a plateau a few ranks wide,
    so rounding in the position cannot move the interpolated value.
    """
    s = np.linspace(0.0, values[-1] - 0.1, N_EXACT)
    starts = [999_998, 999_988, 999_898, 998_998, 989_998]
    ends = [N_EXACT, 999_998, 999_988, 999_898, 998_998]
    for v, a, b in zip(values, starts, ends):
        s[a:b] = v
    return np.random.default_rng(0).permutation(s)


@pytest.fixture(scope="module")
def exact_sample():
    return stepped_impostors()


def test_exact_line(exact_sample):
    m = fit_tail_map(exact_sample, "A")
    assert m.m == pytest.approx(-1.0, abs=1e-12)
    assert m.b == pytest.approx(0.0, abs=1e-12)
    assert m.fit_rmse == pytest.approx(0.0, abs=1e-12)
    assert [f for f, _ in m.anchors] == list(DEFAULT_ANCHORS)
    assert [s for _, s in m.anchors] == [6.0, 5.0, 4.0, 3.0, 2.0]


def test_scaled_and_shifted_line(exact_sample):
    # scores {22, 20, 18, 16, 14}: log10 f = -0.5 * score + 5 passes through every anchor
    m = fit_tail_map(2 * exact_sample + 10, "A")
    assert m.m == pytest.approx(-0.5, abs=1e-12)
    assert m.b == pytest.approx(5.0, abs=1e-11)
    assert m.fit_rmse == pytest.approx(0.0, abs=1e-11)
    assert apply_norm(m, 22.0)[0] == pytest.approx(-6.0, abs=1e-10)


def test_apply_norm_examples():
    m = NormalizationMap("A", -1.0, 0.0, tuple((f, -math.log10(f)) for f in DEFAULT_ANCHORS), 0.0)
    assert apply_norm(m, 7.003) == (-7.003, True)
    assert apply_norm(m, 1.0) == (-1.0, True)
    assert apply_norm(m, 4.0) == (-4.0, False)
    assert apply_norm(m, 2.0) == (-2.0, False)
    assert m(np.array([1.0, 4.0])).tolist() == [-1.0, -4.0]
    assert m.is_extrapolated(np.array([1.0, 4.0, 6.5])).tolist() == [True, False, True]


def test_insufficient_support_default_anchors():
    with pytest.raises(InsufficientSupportError, match="insufficient impostor support"):
        fit_tail_map(np.random.default_rng(1).normal(size=10_000), "A")


def test_drop_unresolvable_anchors(caplog):
    s = np.random.default_rng(1).exponential(size=100_000)
    with caplog.at_level(logging.WARNING):
        m = fit_tail_map(s, "A", drop_unresolvable=True)
    assert [f for f, _ in m.anchors] == [1e-5, 1e-4, 1e-3, 1e-2]
    assert "1e-06" in caplog.text
    # 500 scores resolve only 1e-2: below the three-anchor minimum
    with pytest.raises(InsufficientSupportError):
        fit_tail_map(s[:500], "A", drop_unresolvable=True)


def test_degenerate_fit():
    with pytest.raises(DegenerateFitError):
        fit_tail_map(np.full(2000, 3.0), "A", anchor_fars=(1e-3, 1e-2, 1e-1))


def test_bad_anchor_values():
    with pytest.raises(ValidationError, match=r"\(0, 1\)"):
        fit_tail_map(np.arange(100.0), "A", anchor_fars=(0.0, 0.5, 0.9))


def test_anchor_residuals_bounded_by_rmse():
    s = np.random.default_rng(3).gamma(2.0, size=200_000)
    fars = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1)
    m = fit_tail_map(s, "A", fars)
    resid = np.array([math.log10(f) - (m.m * x + m.b) for f, x in m.anchors])
    assert math.sqrt(np.mean(resid**2)) == pytest.approx(m.fit_rmse, rel=1e-12)
    assert np.max(np.abs(resid)) <= math.sqrt(len(fars)) * m.fit_rmse + 1e-15


def test_roundtrip_far_within_factor_two():
    s = np.random.default_rng(4).exponential(size=10**6)
    m = fit_tail_map(s, "A")
    for f in np.logspace(-4, -2, 9):
        est = m(threshold_at_far(s, f))
        assert 0.5 <= 10**est / f <= 2.0


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(-1e3, 1e3), st.integers(0, 2**32 - 1))
def test_affine_equivariance(a, c, seed):
    s = np.random.default_rng(seed).standard_t(5, size=2000)
    fars = (1e-3, 1e-2, 5e-2, 1e-1)
    m1 = fit_tail_map(s, "A", fars)
    m2 = fit_tail_map(a * s + c, "A", fars)
    probe = np.linspace(s.min(), s.max(), 25)
    np.testing.assert_allclose(m2(a * probe + c), m1(probe), rtol=0, atol=1e-9 * max(1.0, np.abs(m1(probe)).max()))


def test_map_json_roundtrip(exact_sample):
    m = fit_tail_map(2 * exact_sample + 10, "System X")
    again = maps_from_json(maps_to_json({"System X": m}))
    assert again == {"System X": m}


# --------------------------------------------------------------------------
# table level
# --------------------------------------------------------------------------


def two_algorithm_table(transform, n_probes=60, impostors=40, seed=0):
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n_probes):
        subj = f"S{i}"
        pairs = [(subj, rng.normal(3, 1))] + [(f"G{i}_{k}", rng.normal(0, 1)) for k in range(impostors)]
        for gal, score in pairs:
            recs.append(record(f"P{i}", subj, gal, score, algorithm="Alg1"))
            recs.append(record(f"P{i}", subj, gal, transform(score), algorithm="Alg2"))
    return table_from_records(recs)


FARS = (1e-3, 1e-2, 1e-1)


def test_identical_tails_give_equal_maps():
    nt = normalize_table(two_algorithm_table(lambda x: x), FARS)
    m1, m2 = nt.maps["Alg1"], nt.maps["Alg2"]
    assert abs(m1.m - m2.m) <= 1e-12 and abs(m1.b - m2.b) <= 1e-12


def test_affine_algorithm_normalizes_identically():
    nt = normalize_table(two_algorithm_table(lambda x: 2 * x + 10), FARS)
    algo = nt.frame["algorithm"].to_numpy()
    np.testing.assert_allclose(nt.est_log_far[algo == "Alg1"], nt.est_log_far[algo == "Alg2"], rtol=0, atol=1e-9)


def test_rows_use_their_own_map():
    nt = normalize_table(two_algorithm_table(lambda x: 2 * x + 10), FARS)
    raw = nt.frame["raw_score"].to_numpy()
    for name, m in nt.maps.items():
        sel = nt.frame["algorithm"].to_numpy() == name
        assert np.array_equal(nt.est_log_far[sel], m.m * raw[sel] + m.b)


def test_per_algorithm_error_names_algorithm():
    t = two_algorithm_table(lambda x: x, n_probes=5, impostors=3)
    with pytest.raises(InsufficientSupportError, match="Alg1"):
        normalize_table(t)


def test_distance_scores_refused():
    t = two_algorithm_table(lambda x: -x)
    with pytest.raises(OrientationError, match="Alg2"):
        normalize_table(t, FARS)


def test_read_normalized_roundtrip(tmp_path):
    nt = normalize_table(two_algorithm_table(lambda x: x), FARS)
    path = tmp_path / "n.csv"
    write_scores(ScoreTable(nt.to_frame()), path, extra_columns=("est_log_far", "extrapolated"))
    again = read_normalized(path, nt.maps)
    assert np.array_equal(again.est_log_far, nt.est_log_far)
    assert np.array_equal(again.extrapolated, nt.extrapolated)
    assert again.table == nt.table
