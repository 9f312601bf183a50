import json

import numpy as np
import pytest

from covfar.covariates import DEFAULT_SPEC, build_design
from covfar.data_model import apply_drop_rules, ingest_scores, write_scores
from covfar.errors import ValidationError
from covfar.lmm import fit_reml, wald_stats
from covfar.normalization import normalize_table
from covfar.synthetic import DEFAULT_TAIL_MAPS, SynthConfig, generate, simulate_design

SMALL = dict(n_probes=400, n_subjects=80, impostors_per_probe=10)


def run_pipeline(table):
    nt = normalize_table(table, drop_unresolvable=True)
    kept, log = apply_drop_rules(nt)
    design = build_design(kept, DEFAULT_SPEC)
    return nt, kept, log, design, fit_reml(design)


def test_same_seed_byte_identical(tmp_path):
    a, _ = generate(SynthConfig(seed=3, **SMALL))
    b, _ = generate(SynthConfig(seed=3, **SMALL))
    write_scores(a, tmp_path / "a.csv")
    write_scores(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    c, _ = generate(SynthConfig(seed=4, **SMALL))
    assert not c.frame["raw_score"].equals(a.frame["raw_score"])


def test_table_shape_and_validity(tmp_path):
    cfg = SynthConfig(seed=1, **SMALL)
    table, truth = generate(cfg)
    n_alg = len(cfg.algorithms)
    assert len(table) == cfg.n_probes * (1 + cfg.impostors_per_probe) * n_alg
    assert int(table.is_genuine.sum()) == cfg.n_probes * n_alg
    assert len(truth.linear_predictor) == len(truth.noise) == cfg.n_probes * n_alg
    write_scores(table, tmp_path / "s.csv")
    assert ingest_scores(tmp_path / "s.csv") == table


def test_genuine_scores_invert_tail_maps():
    table, truth = generate(SynthConfig(seed=2, **SMALL))
    g = table.frame[table.is_genuine]
    m = g["algorithm"].map(lambda a: DEFAULT_TAIL_MAPS[a][0]).to_numpy()
    b = g["algorithm"].map(lambda a: DEFAULT_TAIL_MAPS[a][1]).to_numpy()
    est = m * g["raw_score"].to_numpy() + b
    np.testing.assert_allclose(est, truth.linear_predictor + truth.noise, rtol=0, atol=1e-9)


def test_drop_counts_exact():
    cfg = SynthConfig(seed=5, **SMALL)
    table, _ = generate(cfg)
    _, log = apply_drop_rules(table)
    assert log.dropped_missing_weather == round(cfg.missing_weather_fraction * cfg.n_probes)
    assert log.dropped_unspecified_sex == round(cfg.unspecified_sex_fraction * cfg.n_probes)


def test_ground_truth_json():
    _, truth = generate(SynthConfig(seed=0, **SMALL))
    d = json.loads(truth.to_json())
    assert d["beta"]["Intercept"] == -7.003
    assert d["config"]["seed"] == 0 and len(d["group_effects"]) == 55
    assert d["tail_maps"]["System A"] == {"m": -20.0, "b": 4.0}


@pytest.mark.parametrize(
    "kwargs, match",
    [
        ({"level_frequencies": {"Modality": {"Face": 0.5, "Body": 0.4}}}, "sum to 1"),
        ({"level_frequencies": {"Modality": {"Face": 0.5, "Hand": 0.5}}}, "unknown level"),
        ({"true_beta": {"Nope[x]": 1.0}}, "unknown column"),
        ({"tail_maps": {**DEFAULT_TAIL_MAPS, "System A": (1.0, 0.0)}}, "negative"),
        ({"residual_sd": 0.0}, "residual_sd"),
        ({"impostors_per_probe": 500}, "n_subjects"),
    ],
)
def test_invalid_config(kwargs, match):
    with pytest.raises(ValidationError, match=match):
        generate(SynthConfig(**kwargs))


def test_null_model_direct():
    d, _ = simulate_design(4000, 30, seed=1, beta={"Intercept": -6.0}, group_sd=0.0, residual_sd=1.0)
    fit = fit_reml(d)
    assert abs(fit.coefficients[0] + 6.0) <= 3 * fit.standard_errors[0]
    assert fit.group_variance < 0.01


def test_null_model_through_pipeline():
    cfg = SynthConfig(seed=11, n_probes=1500, n_subjects=100, impostors_per_probe=20,
                      true_beta={"Intercept": -5.0}, group_sd=0.0, residual_sd=1.0)
    _, _, _, design, fit = run_pipeline(generate(cfg)[0])
    assert fit.converged
    assert abs(fit.coefficients[0] + 5.0) <= 3 * fit.standard_errors[0]
    assert fit.group_variance < 0.05
    assert np.all(np.abs(fit.coefficients[1:]) <= 3 * fit.standard_errors[1:] + 0.05)


@pytest.fixture(scope="module")
def full_scale():
    cfg = SynthConfig(seed=7)
    table, truth = generate(cfg)
    return cfg, truth, *run_pipeline(table)


@pytest.mark.slow
def test_full_scale_end_to_end(full_scale):
    cfg, truth, nt, kept, log, design, fit = full_scale
    assert (log.dropped_missing_weather, log.dropped_unspecified_sex) == (900, 20)
    assert fit.converged and fit.n_groups == 55
    assert fit.n_observations == 8295 * 5
    beta = np.array([cfg.true_beta.get(c, 0.0) for c in fit.column_names])
    z = np.abs(fit.coefficients - beta) / fit.standard_errors
    assert np.all(z <= 3)
    for alg, (m, b) in DEFAULT_TAIL_MAPS.items():
        assert nt.maps[alg].m == pytest.approx(m, rel=0.02)


@pytest.mark.slow
def test_residual_sd_recovered(full_scale):
    cfg, truth, nt, *_ = full_scale
    est = nt.est_log_far[nt.table.is_genuine]
    resid = est - truth.linear_predictor
    assert abs(resid.std() / cfg.residual_sd - 1) <= 0.10
    fit = full_scale[-1]
    assert abs(np.sqrt(fit.scale) / cfg.residual_sd - 1) <= 0.10


def test_simulate_design_recovery():
    d, beta = simulate_design(5000, 40, seed=2)
    fit = fit_reml(d)
    truth = dict(zip(d.column_names, beta))
    covered = [s.ci_low <= truth[s.column] <= s.ci_high for s in wald_stats(fit) if not s.reference]
    assert len(covered) == 29
    assert np.mean(covered) >= 0.85
    assert d.X.shape == (5000, 29) and len(np.unique(d.groups)) == 40
