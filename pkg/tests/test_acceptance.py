"""Acceptance criteria 1-8, one test each.

Every test records a PASS/FAIL line (see the ``acceptance`` fixture) that is
repeated in the terminal summary, then asserts the same condition.
"""
import math
import time
from pathlib import Path

import numpy as np

from covfar.cli import main
from covfar.covariates import DesignMatrix
from covfar.fixtures import COEFFICIENT_ROWS, MODEL_SUMMARY
from covfar.lmm import fit_reml, wald_from_ci, wald_stats
from covfar.metrics import empirical_far, roc_curve
from covfar.normalization import fit_tail_map
from covfar.prediction import load_paper_coefficients, reference_model
from covfar.report import render_coefficient_table, render_model_summary
from covfar.synthetic import simulate_design

DATA = Path(__file__).parent / "data"


def test_criterion_1_far_arithmetic(capsys, tmp_path, acceptance):
    t0 = time.perf_counter()
    main(["predict", "--paper-coefficients", "--output-dir", str(tmp_path)])
    ref_out = capsys.readouterr().out
    main(["predict", "--paper-coefficients", "--set", "Head Hgt=<30 Pix", "--set", "Camera Loc=Long Range",
          "--output-dir", str(tmp_path)])
    ex_out = capsys.readouterr().out
    elapsed = time.perf_counter() - t0
    ref_ok = "1 in 10,023,052" in ref_out
    ex_ok = "1 in 1,469" in ex_out
    printed_ref = ref_out.strip().splitlines()[-1]
    ok = ref_ok and ex_ok and elapsed < 1.0
    acceptance(
        1, ok,
        f"all-reference -> {printed_ref!r} (target 1 in 10,023,052: {'ok' if ref_ok else 'mismatch'}); "
        f"worked example {'ok' if ex_ok else 'mismatch'} (1 in 1,469); {elapsed:.3f}s",
    )
    assert ex_ok and elapsed < 1.0
    assert ref_ok, "10**7.003 rounds to 10,069,317; the target denominator corresponds to 10**7.001"


def test_criterion_2_wald_consistency(acceptance):
    t0 = time.perf_counter()
    rows = {(c, l): (float(b), float(lo), float(hi), float(p)) for c, l, b, lo, hi, p, _ in COEFFICIENT_ROWS if p != "-"}
    targets = [("Wind Speed", "9-12 M/S"), ("Temperature", "0-10 C"), ("Camera Location", "Uav")]
    diffs = []
    for key in targets:
        b, lo, hi, printed = rows[key]
        diffs.append(abs(wald_from_ci(b, lo, hi)[1] - printed))
    elapsed = time.perf_counter() - t0
    ok = max(diffs) <= 0.005 and elapsed < 1.0
    acceptance(2, ok, f"max |p - printed| = {max(diffs):.4f} (tol 0.005); {elapsed:.3f}s")
    assert ok


def test_criterion_3_reml_oracle(acceptance):
    rng = np.random.default_rng(2024)
    g, n = 10, 20
    labels = np.repeat(np.arange(g), n).astype(str).astype(object)
    y = 2.5 + np.repeat(rng.normal(0, 1.2, g), n) + rng.normal(0, 1.0, g * n)

    # closed-form balanced one-way REML
    means = y.reshape(g, n).mean(axis=1)
    msb = n * np.sum((means - y.mean()) ** 2) / (g - 1)
    msw = np.sum((y.reshape(g, n) - means[:, None]) ** 2) / (g * (n - 1))
    assert msb > msw
    s2, su2, mu = msw, (msb - msw) / n, y.mean()

    t0 = time.perf_counter()
    fit = fit_reml(DesignMatrix(y, np.ones((g * n, 1)), labels, ["Intercept"], [("Intercept", "-")], []))
    elapsed = time.perf_counter() - t0
    rel = [abs(fit.scale - s2) / s2, abs(fit.group_variance - su2) / su2, abs(fit.coefficients[0] - mu) / abs(mu)]
    ok = max(rel) <= 1e-6 and elapsed < 1.0
    acceptance(3, ok, f"max relative error {max(rel):.2e} (tol 1e-6); {elapsed:.3f}s")
    assert ok


def test_criterion_4_coefficient_recovery(acceptance):
    t0 = time.perf_counter()
    within, covered = [], []
    for seed in range(20):
        design, beta = simulate_design(5000, 40, seed=1000 + seed)
        fit = fit_reml(design)
        truth = dict(zip(design.column_names, beta))
        for s in wald_stats(fit):
            if s.reference:
                continue
            within.append(abs(s.coef - truth[s.column]) <= 3 * s.se)
            covered.append(s.ci_low <= truth[s.column] <= s.ci_high)
    elapsed = time.perf_counter() - t0
    frac, cov = float(np.mean(within)), float(np.mean(covered))
    ok = frac >= 0.95 and 0.90 <= cov <= 0.99 and elapsed < 120
    acceptance(
        4, ok,
        f"{len(within)} pairs: within 3 SE {frac:.3f} (>= 0.95), 95% CI coverage {cov:.3f} (in [0.90, 0.99]); {elapsed:.1f}s",
    )
    assert ok


def test_criterion_5_normalization_fidelity(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    # exponential tail: log10 FAR(t) = -t / ln 10 exactly
    scores = rng.exponential(size=10**7)
    nmap = fit_tail_map(scores, "synthetic")
    held_out = np.logspace(-4, -2, 22)[1:-1]
    thresholds = -np.log(held_out)
    srt = np.sort(scores)
    ratios = []
    for t in thresholds:
        emp = (srt.size - np.searchsorted(srt, t, side="left")) / srt.size
        ratios.append(10 ** nmap(t) / emp)
    # spot-check the vectorised count against the library's own rate
    assert (srt.size - np.searchsorted(srt, thresholds[0], side="left")) / srt.size == empirical_far(scores, thresholds[0])

    a, c = 3.7, -12.0
    shifted = fit_tail_map(a * scores + c, "synthetic")
    probe = np.linspace(0, 16, 50)
    affine_err = float(np.max(np.abs(shifted(a * probe + c) - nmap(probe))))
    elapsed = time.perf_counter() - t0
    worst = max(max(ratios), 1 / min(ratios))
    ok = worst <= 2.0 and affine_err <= 1e-9 and elapsed < 60
    acceptance(
        5, ok,
        f"20 held-out thresholds: worst FAR ratio x{worst:.3f} (<= x2); affine error {affine_err:.1e} (<= 1e-9); {elapsed:.1f}s",
    )
    assert ok


def _sweep(genuine, impostor, grid):
    """O(N^2) reference: each grid threshold by explicit order statistics, rates by direct counting."""
    s = sorted(impostor)
    out = []
    for f in grid:
        pos = (1.0 - f) * (len(s) - 1)
        k = int(math.floor(pos))
        t = s[-1] if k >= len(s) - 1 else s[k] + (pos - k) * (s[k + 1] - s[k])
        out.append((t, f, sum(1 for x in genuine if x >= t) / len(genuine)))
    return out


def test_criterion_6_metrics_oracle(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    mismatches = 0
    for _ in range(50):
        ng, ni = rng.integers(2, 1001, size=2)
        decimals = int(rng.integers(0, 4))  # coarse rounding creates ties
        g = np.round(rng.normal(1.0, 1.0, ng), decimals)
        imp = np.round(rng.normal(0.0, 1.0, ni), decimals)
        grid = np.unique(np.round(rng.uniform(1.0 / ni, 1.0, 30), 6))
        grid = grid[(grid * ni >= 1) & (grid < 1)]
        got = [(p.threshold, p.far, p.tar) for p in roc_curve(g, imp, grid)]
        mismatches += got != _sweep(g.tolist(), imp.tolist(), grid.tolist())
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 30
    acceptance(6, ok, f"{mismatches}/50 tables differ from the exhaustive sweep; {elapsed:.1f}s")
    assert ok


def test_criterion_7_report_fidelity(acceptance):
    model, stats = reference_model(), load_paper_coefficients()
    table = render_coefficient_table(model, stats, fmt="latex", bold=False)
    summary = render_model_summary(model, "latex")
    ref_table = (DATA / "reference_coefficients.tex").read_text()
    ref_summary = (DATA / "reference_summary.tex").read_text()
    bad_rows = [a for a, b in zip(table.splitlines(), ref_table.splitlines()) if a != b]
    table_ok = table == ref_table
    summary_ok = summary == ref_summary and all(
        s in summary for s in ("41119", "& 55 &", "4.3539", "-88768.7911", "Yes")
    )
    ok = table_ok and summary_ok
    acceptance(
        7, ok,
        f"coefficient table {len(ref_table.splitlines())} lines, {len(bad_rows)} differing; summary verbatim: {summary_ok}",
    )
    assert ok


def test_criterion_8_declared(acceptance):
    """Published fit values are carried as fixtures only; nothing here refits them."""
    m = reference_model()
    carried = (m.scale, m.reml_loglik, m.n_observations, m.n_groups) == (
        MODEL_SUMMARY["scale"], MODEL_SUMMARY["reml_loglik"], 41119, 55,
    )
    acceptance(
        8, "DECLARED" if carried else "FAIL",
        "published coefficients, Scale 4.3539 and log-likelihood -88768.7911 need the restricted data; "
        "they are checked as report fixtures (criterion 7) and by the property suites (criteria 3-5)",
    )
    assert carried
