"""Coefficient tables, model summaries, forest plots and normalization diagnostics.

Everything here is a pure function from model objects to text, so the same
inputs always render byte-identical documents. Numbers are printed at three
decimals; p-values under 0.0005 come out as ``0.000``.
"""
from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence
from xml.sax.saxutils import escape, quoteattr

from .errors import ValidationError
from .lmm import CoefficientStat, FittedModel
from .metrics import RocPoint
from .normalization import NormalizationMap

FORMATS = ("text", "csv", "latex")
CSV_HEADER = ("cov_name", "level", "coef", "ci_low", "ci_high", "p_value", "num_probes")
TABLE_HEADER = ("Cov.Name", "Level", "Coef.", "[0.025", "0.975]", "P>|z|", "Num.Probes")
BOLD_THRESHOLD = 0.5


def fmt3(x: float) -> str:
    s = f"{x:.3f}"
    return "0.000" if s == "-0.000" else s


def _count(stat: CoefficientStat, counts: Optional[dict]) -> str:
    n = stat.num_probes
    if counts is not None:
        n = counts.get((stat.name, stat.level), n)
    if stat.name == "Intercept" or n is None:
        return "-"
    return str(int(n))


def _is_bold(stat: CoefficientStat) -> bool:
    return not stat.reference and abs(float(fmt3(stat.coef))) >= BOLD_THRESHOLD


def coefficient_cells(stat: CoefficientStat, counts: Optional[dict] = None) -> list[str]:
    """The seven printed cells of one coefficient row."""
    if stat.reference:
        return [stat.name, stat.level, "0.000000", "0", "0", "-", _count(stat, counts)]
    return [
        stat.name,
        stat.level,
        fmt3(stat.coef),
        fmt3(stat.ci_low),
        fmt3(stat.ci_high),
        fmt3(stat.p_value),
        _count(stat, counts),
    ]


def _group_var_cells(model: Optional[FittedModel]) -> Optional[list[str]]:
    if model is None or model.group_variance is None:
        return None
    return ["Group Var", "-", fmt3(model.group_variance), "", "", "", "-"]


def _latex_escape(text: str) -> str:
    # level labels already carry math markup ("W/M$^2$"); only escape bare specials
    return re.sub(r"(?<!\\)([&%#_])", r"\\\1", text)


def render_coefficient_table(
    model: Optional[FittedModel],
    stats: Sequence[CoefficientStat],
    counts: Optional[dict] = None,
    fmt: str = "text",
    *,
    bold: bool = True,
) -> str:
    """Coefficient table in ``text``, ``csv`` or ``latex``.

    Rows follow ``stats`` order (intercept, then each covariate's reference
    and fitted levels). When ``model`` is given a trailing group-variance row
    is added. ``counts`` overrides per-level probe counts; a level with no
    count prints ``-``.
    """
    if fmt not in FORMATS:
        raise ValidationError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    if not stats:
        raise ValidationError("no coefficient statistics to render")
    rows = [(coefficient_cells(s, counts), bold and _is_bold(s)) for s in stats]
    gv = _group_var_cells(model)

    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for s, (cells, _) in zip(stats, rows):
            if s.reference:
                cells = [s.name, s.level, "0.000", "", "", "", cells[6]]
            w.writerow(["" if c == "-" and i >= 5 else c for i, c in enumerate(cells)])
        if gv is not None:
            w.writerow([gv[0], gv[1], gv[2], "", "", "", ""])
        return buf.getvalue()

    if fmt == "latex":
        lines = ["\\begin{tabular}{lllllll}", "\\hline", " & ".join(TABLE_HEADER) + " \\\\", "\\hline"]
        for cells, b in rows:
            cells = [_latex_escape(cells[0]), cells[1], *cells[2:]]
            if b:
                cells[2] = f"\\textbf{{{cells[2]}}}"
            lines.append(" & ".join(cells) + " \\\\")
        if gv is not None:
            lines.append(" & ".join(gv) + " \\\\")
        lines += ["\\hline", "\\end{tabular}"]
        return "\n".join(lines) + "\n"

    body = [list(TABLE_HEADER)]
    for cells, b in rows:
        cells = list(cells)
        if b:
            cells[2] = f"*{cells[2]}*"
        body.append(cells)
    if gv is not None:
        body.append(gv)
    widths = [max(len(r[i]) for r in body) for i in range(len(TABLE_HEADER))]
    out = []
    for k, r in enumerate(body):
        out.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
        if k == 0:
            out.append("-" * len(out[0]))
    return "\n".join(out) + "\n"


def summary_pairs(model: FittedModel) -> list[tuple[str, str, str, str]]:
    """Model summary laid out as four columns, left and right label/value pairs."""
    lo, hi, mean = model.group_sizes
    return [
        ("Model:", "MixedLM", "Dependent Variable:", model.dependent),
        ("No. Observations", str(int(model.n_observations)), "Method", model.method),
        ("No. Groups:", str(int(model.n_groups)), "Scale:", f"{model.scale:.4f}"),
        ("Min. group size:", str(int(lo)), "Log-Likelihood:", f"{model.reml_loglik:.4f}"),
        ("Max. group size:", str(int(hi)), "Converged:", "Yes" if model.converged else "No"),
        ("Mean group size:", f"{mean:.1f}", "", ""),
    ]


def render_model_summary(model: FittedModel, fmt: str = "text") -> str:
    if fmt not in FORMATS:
        raise ValidationError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    rows = summary_pairs(model)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("field", "value"))
        for a, b, c, d in rows:
            w.writerow((a.rstrip(":"), b))
            if c:
                w.writerow((c.rstrip(":"), d))
        w.writerow(("Group Var", fmt3(model.group_variance)))
        return buf.getvalue()
    if fmt == "latex":
        lines = ["\\begin{tabular}{lllll}", "\\hline", " & 0 & 1 & 2 & 3 \\\\", "\\hline"]
        lines += [f"{i} & " + " & ".join(r) + " \\\\" for i, r in enumerate(rows)]
        lines += ["\\hline", "\\end{tabular}"]
        return "\n".join(lines) + "\n"
    w = [max(len(r[i]) for r in rows) for i in range(4)]
    out = [f"{a.ljust(w[0])}  {b.ljust(w[1])}  {c.ljust(w[2])}  {d}".rstrip() for a, b, c, d in rows]
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# forest plot
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ForestRow:
    name: str
    level: str
    coef: str
    ci_low: str
    ci_high: str

    @property
    def label(self) -> str:
        return f"{self.name}: {self.level}"


def forest_rows(stats: Iterable[CoefficientStat]) -> list[ForestRow]:
    """One row per fitted, non-reference level; the intercept is left out."""
    rows = []
    for s in stats:
        if s.reference or s.name == "Intercept":
            continue
        rows.append(ForestRow(s.name, s.level, fmt3(s.coef), fmt3(s.ci_low), fmt3(s.ci_high)))
    return rows


def render_forest_csv(rows: Sequence[ForestRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("cov_name", "level", "coef", "ci_low", "ci_high"))
    for r in rows:
        w.writerow((r.name, r.level, r.coef, r.ci_low, r.ci_high))
    return buf.getvalue()


def _nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    raw = (hi - lo) / target
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step) * step
    n = int(math.floor((hi - first) / step + 1e-9)) + 1
    return [round(first + i * step, 10) for i in range(n)]


def render_forest_svg(rows: Sequence[ForestRow], title: str = "Coefficient (log10 FAR)") -> str:
    """Forest plot assembled from lines, circles and text.

    Each row is a ``<g>`` carrying its plotted numbers as ``data-*``
    attributes, identical to the CSV mirror.
    """
    if not rows:
        raise ValidationError("forest plot needs at least one coefficient")
    label_w, plot_w, row_h, top, bottom = 300, 420, 20, 40, 40
    width = label_w + plot_w + 30
    height = top + row_h * len(rows) + bottom
    values = [float(v) for r in rows for v in (r.coef, r.ci_low, r.ci_high)] + [0.0]
    lo, hi = min(values), max(values)
    pad = 0.05 * (hi - lo) if hi > lo else 0.5
    lo, hi = lo - pad, hi + pad

    def x(v: float) -> str:
        return f"{label_w + (v - lo) / (hi - lo) * plot_w:.2f}"

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{label_w + plot_w / 2:.2f}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
    ]
    axis_y = top + row_h * len(rows)
    out.append(f'<line x1="{x(0.0)}" y1="{top - 5}" x2="{x(0.0)}" y2="{axis_y}" stroke="#888" stroke-dasharray="4,3"/>')
    out.append(f'<line x1="{label_w}" y1="{axis_y}" x2="{label_w + plot_w}" y2="{axis_y}" stroke="#000"/>')
    for t in _nice_ticks(lo, hi):
        out.append(f'<line x1="{x(t)}" y1="{axis_y}" x2="{x(t)}" y2="{axis_y + 4}" stroke="#000"/>')
        out.append(f'<text x="{x(t)}" y="{axis_y + 16}" text-anchor="middle">{t:g}</text>')
    for i, r in enumerate(rows):
        y = top + row_h * i + row_h / 2
        out.append(
            f'<g class="coef" data-cov={quoteattr(r.name)} data-level={quoteattr(r.level)} '
            f'data-coef="{r.coef}" data-ci-low="{r.ci_low}" data-ci-high="{r.ci_high}">'
        )
        out.append(f'<text x="{label_w - 8}" y="{y + 4:.1f}" text-anchor="end">{escape(r.label)}</text>')
        out.append(
            f'<line x1="{x(float(r.ci_low))}" y1="{y:.1f}" x2="{x(float(r.ci_high))}" y2="{y:.1f}" stroke="#1f4e79" stroke-width="1.5"/>'
        )
        out.append(f'<circle cx="{x(float(r.coef))}" cy="{y:.1f}" r="3.5" fill="#1f4e79"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_forest(stats: Sequence[CoefficientStat]) -> tuple[str, str]:
    """(SVG, CSV) for the non-reference coefficients in ``stats``."""
    rows = forest_rows(stats)
    return render_forest_svg(rows), render_forest_csv(rows)


# --------------------------------------------------------------------------
# normalization and ROC diagnostics
# --------------------------------------------------------------------------


def render_normalization_fit(nmap: NormalizationMap) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("anchor_far", "log10_far", "anchor_score", "fitted_log10_far", "residual"))
    for far, score in nmap.anchors:
        fitted = nmap.m * score + nmap.b
        w.writerow((repr(far), repr(math.log10(far)), repr(score), repr(fitted), repr(math.log10(far) - fitted)))
    return buf.getvalue()


def render_roc_csv(points: Sequence[RocPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("far", "threshold", "tar"))
    for p in points:
        w.writerow((repr(p.far), repr(p.threshold), repr(p.tar)))
    return buf.getvalue()


def safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text).strip("_") or "unnamed"


# --------------------------------------------------------------------------
# bundle
# --------------------------------------------------------------------------


@dataclass
class ReportBundle:
    """File name -> document text."""

    files: dict[str, str] = field(default_factory=dict)

    def write(self, out_dir, *, force: bool = False) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        targets = [out_dir / name for name in self.files]
        clash = [p.name for p in targets if p.exists()]
        if clash and not force:
            raise ValidationError(f"refusing to overwrite {', '.join(clash)} in {out_dir} (use --force)")
        for p, text in zip(targets, self.files.values()):
            p.write_text(text, encoding="utf-8")
        return targets


def build_report(
    model: FittedModel,
    stats: Sequence[CoefficientStat],
    *,
    counts: Optional[dict] = None,
    formats: Sequence[str] = FORMATS,
    maps: Optional[dict[str, NormalizationMap]] = None,
    roc: Optional[dict[str, Sequence[RocPoint]]] = None,
    bold: bool = True,
) -> ReportBundle:
    ext = {"text": "txt", "csv": "csv", "latex": "tex"}
    files = {}
    for f in formats:
        files[f"coefficients.{ext[f]}"] = render_coefficient_table(model, stats, counts, f, bold=bold)
    for f in formats:
        files[f"summary.{ext[f]}"] = render_model_summary(model, f)
    if forest_rows(stats):
        files["forest.svg"], files["forest.csv"] = render_forest(stats)
    for alg, nmap in sorted((maps or {}).items()):
        files[f"normalization_fit_{safe_name(alg)}.csv"] = render_normalization_fit(nmap)
    for alg, points in sorted((roc or {}).items()):
        files[f"roc_{safe_name(alg)}.csv"] = render_roc_csv(points)
    return ReportBundle(files)
