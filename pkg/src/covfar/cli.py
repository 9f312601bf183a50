"""Command line front end: ``covfar simulate | normalize | fit | predict | report``.

Every stage reads its predecessor's files from disk and writes its own into
the output directory. Exit codes: 0 success, 1 invalid input or arguments,
2 numerical failure (rank deficiency, non-convergence, degenerate fit).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .covariates import DEFAULT_SPEC, CovariateSpec, Scenario, build_design
from .data_model import ScoreTable, apply_drop_rules, ingest_scores, write_scores
from .errors import NumericalError, ValidationError
from .lmm import FittedModel, NotConvergedError, fit_reml, wald_stats
from .metrics import roc_curve
from .normalization import DEFAULT_ANCHORS, maps_from_json, maps_to_json, normalize_table, read_normalized
from .prediction import TAR_CAVEAT, estimate_to_json, load_paper_coefficients, model_coefficients, predict_far, reference_model
from .report import FORMATS, build_report
from .synthetic import SynthConfig, generate

log = logging.getLogger("covfar")

ENV_OUTPUT_DIR = "COVFAR_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "covfar-out"

SCORES_FILE = "scores.csv"
TRUTH_FILE = "ground_truth.json"
NORMALIZED_FILE = "normalized.csv"
MAPS_FILE = "maps.json"
MODEL_FILE = "model.json"
DROP_LOG_FILE = "drop_log.json"

ROC_GRID = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1)


@dataclass
class RunConfig:
    output_dir: Path
    input: Optional[Path] = None
    spec: CovariateSpec = DEFAULT_SPEC
    anchors: tuple[float, ...] = DEFAULT_ANCHORS
    seed: int = 0
    formats: tuple[str, ...] = FORMATS
    force: bool = False
    strict_anchors: bool = False
    extra: dict = field(default_factory=dict)

    def target(self, name: str) -> Path:
        return self.output_dir / name

    def claim(self, *names: str) -> list[Path]:
        """Create the output directory and check that ``names`` may be written."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        paths = [self.target(n) for n in names]
        clash = [p.name for p in paths if p.exists()]
        if clash and not self.force:
            raise ValidationError(f"refusing to overwrite {', '.join(clash)} in {self.output_dir} (use --force)")
        return paths

    def find_input(self, *candidates: str) -> Path:
        if self.input is not None:
            if not self.input.exists():
                raise ValidationError(f"no such file: {self.input}")
            return self.input
        for c in candidates:
            p = self.target(c)
            if p.exists():
                return p
        raise ValidationError(f"no input given and none of {', '.join(candidates)} found in {self.output_dir}")


def parse_anchors(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ValidationError(f"--anchors: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ValidationError("--anchors: empty list")
    return vals


def load_spec(path: Optional[str]) -> CovariateSpec:
    if path is None:
        return DEFAULT_SPEC
    try:
        return CovariateSpec.from_json(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ValidationError(f"cannot read covariate spec {path}: {exc}") from None


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _normalized_input(path: Path) -> bool:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
    return "est_log_far" in [c.strip() for c in header.strip().split(",")]


def _load_maps(path: Path) -> dict:
    try:
        return maps_from_json(path.read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError) as exc:
        raise ValidationError(f"cannot read normalization maps {path}: {exc}") from None


def _load_model(path: Path) -> FittedModel:
    try:
        return FittedModel.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ValidationError(f"cannot read model {path}: {exc}") from None


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> int:
    scores, truth_path = cfg.claim(SCORES_FILE, TRUTH_FILE)
    synth = SynthConfig(seed=cfg.seed, spec=cfg.spec)
    if cfg.extra.get("n_probes"):
        synth.n_probes = cfg.extra["n_probes"]
    if cfg.extra.get("impostors_per_probe") is not None:
        synth.impostors_per_probe = cfg.extra["impostors_per_probe"]
    table, truth = generate(synth)
    write_scores(table, scores)
    truth_path.write_text(truth.to_json() + "\n", encoding="utf-8")
    print(f"wrote {len(table)} rows to {scores}")
    return 0


def cmd_normalize(cfg: RunConfig) -> int:
    src = cfg.find_input(SCORES_FILE)
    out, maps_path = cfg.claim(NORMALIZED_FILE, MAPS_FILE)
    table = ingest_scores(src)
    nt = normalize_table(table, cfg.anchors, drop_unresolvable=not cfg.strict_anchors)
    write_scores(ScoreTable(nt.to_frame()), out, extra_columns=("est_log_far", "extrapolated"))
    maps_path.write_text(maps_to_json(nt.maps) + "\n", encoding="utf-8")
    n_extra = int(nt.extrapolated.sum())
    print(f"normalized {len(nt)} rows over {len(nt.maps)} algorithm(s); {n_extra} extrapolated")
    return 0


def cmd_fit(cfg: RunConfig) -> int:
    src = cfg.find_input(NORMALIZED_FILE, SCORES_FILE)
    model_path, drop_path = cfg.claim(MODEL_FILE, DROP_LOG_FILE)
    if _normalized_input(src):
        maps_path = src.parent / MAPS_FILE
        nt = read_normalized(src, _load_maps(maps_path) if maps_path.exists() else None)
    else:
        nt = normalize_table(ingest_scores(src), cfg.anchors, drop_unresolvable=not cfg.strict_anchors)
    kept, drops = apply_drop_rules(nt)
    _write_json(drop_path, drops.to_dict())
    design = build_design(kept, cfg.spec)
    model = fit_reml(design, drop_collinear=cfg.extra.get("drop_collinear", False))
    _write_json(model_path, model.to_dict())
    print(
        f"dropped {drops.dropped_missing_weather} probe(s) for weather, {drops.dropped_unspecified_sex} for sex; "
        f"fitted {model.n_observations} observations in {model.n_groups} groups"
    )
    if not model.converged:
        raise NotConvergedError("REML optimisation did not converge")
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    if cfg.extra.get("paper_coefficients"):
        coeffs = load_paper_coefficients()
    else:
        coeffs = model_coefficients(_load_model(cfg.find_input(MODEL_FILE)))
    scenario = Scenario.parse(cfg.extra.get("set") or [])
    est = predict_far(coeffs, scenario, cfg.spec)
    if "json" in cfg.formats:
        print(estimate_to_json(est))
    else:
        for cov, level, b in est.terms:
            print(f"  {cov:<16} {level:<20} {b:+.3f}")
        print(est.describe())
    print(TAR_CAVEAT, file=sys.stderr)
    return 0


def cmd_report(cfg: RunConfig) -> int:
    if cfg.extra.get("paper_coefficients"):
        model = reference_model()
        stats = load_paper_coefficients()
        maps = None
    else:
        model_path = cfg.find_input(MODEL_FILE)
        model = _load_model(model_path)
        stats = wald_stats(model, require_converged=False)
        maps_path = model_path.parent / MAPS_FILE
        maps = _load_maps(maps_path) if maps_path.exists() else None
    roc = None
    if cfg.extra.get("roc"):
        roc = {}
        nt = read_normalized(cfg.target(NORMALIZED_FILE))
        frame = nt.frame
        for alg in sorted(frame["algorithm"].unique()):
            sel = (frame["algorithm"] == alg).to_numpy()
            gen = nt.est_log_far[sel & nt.table.is_genuine]
            imp = nt.est_log_far[sel & ~nt.table.is_genuine]
            grid = [f for f in ROC_GRID if f * imp.size >= 1]
            roc[alg] = roc_curve(gen, imp, grid) if gen.size and imp.size >= 2 else []
    bundle = build_report(model, stats, formats=cfg.formats, maps=maps, roc=roc)
    written = bundle.write(cfg.output_dir, force=cfg.force)
    print(f"wrote {len(written)} report file(s) to {cfg.output_dir}")
    if not model.converged:
        raise NotConvergedError("model did not converge (Converged: No)")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "normalize": cmd_normalize,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "report": cmd_report,
}


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # bad arguments are a validation failure (exit 1), not argparse's default 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--input", help="input file (defaults to the previous stage's output)")
    common.add_argument("--output-dir", help=f"output directory (default ${ENV_OUTPUT_DIR} or ./{DEFAULT_OUTPUT_DIR})")
    common.add_argument("--spec", help="covariate spec JSON (default: embedded spec)")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="covfar", description="Covariate analysis of tail-normalized biometric scores.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic score table with ground truth")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-probes", type=int)
    s.add_argument("--impostors-per-probe", type=int)

    anchors = _Parser(add_help=False)
    anchors.add_argument("--anchors", default=",".join(f"{a:g}" for a in DEFAULT_ANCHORS), help="comma-separated anchor FARs")
    anchors.add_argument(
        "--strict-anchors",
        action="store_true",
        help="fail when an anchor FAR is finer than 1/N instead of dropping it",
    )

    sub.add_parser("normalize", parents=[common, anchors], help="fit per-algorithm tail maps and normalize scores")

    f = sub.add_parser("fit", parents=[common, anchors], help="drop rules, design matrix and REML fit")
    f.add_argument("--drop-collinear", action="store_true", help="drop collinear columns instead of failing")

    pr = sub.add_parser("predict", parents=[common], help="additive FAR estimate for a scenario")
    pr.add_argument("--paper-coefficients", action="store_true", help="use the embedded reference coefficients")
    pr.add_argument("--set", action="append", default=[], metavar="COVARIATE=LEVEL")
    pr.add_argument("--format", default="text", choices=("text", "json"))

    r = sub.add_parser("report", parents=[common], help="coefficient table, summary, forest plot, diagnostics")
    r.add_argument("--paper-coefficients", action="store_true", help="render the embedded reference tables")
    r.add_argument("--format", default=",".join(FORMATS), help="comma-separated subset of text,csv,latex")
    r.add_argument("--roc", action="store_true", help="also write ROC series from normalized.csv")
    return p


def _config(args) -> RunConfig:
    out = args.output_dir or os.environ.get(ENV_OUTPUT_DIR) or DEFAULT_OUTPUT_DIR
    formats = tuple(f.strip() for f in getattr(args, "format", ",".join(FORMATS)).split(",") if f.strip())
    allowed = ("text", "json") if args.command == "predict" else FORMATS
    bad = [f for f in formats if f not in allowed]
    if bad or not formats:
        raise ValidationError(f"--format: unknown format(s) {bad}; expected {', '.join(allowed)}")
    extra = {
        k: getattr(args, k, None)
        for k in ("n_probes", "impostors_per_probe", "drop_collinear", "paper_coefficients", "set", "roc")
    }
    return RunConfig(
        output_dir=Path(out),
        input=Path(args.input) if args.input else None,
        spec=load_spec(args.spec),
        anchors=parse_anchors(args.anchors) if hasattr(args, "anchors") else DEFAULT_ANCHORS,
        seed=getattr(args, "seed", 0),
        formats=formats,
        force=args.force,
        strict_anchors=getattr(args, "strict_anchors", False),
        extra=extra,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="covfar: %(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](_config(args))
    except ValidationError as exc:
        print(f"covfar {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"covfar {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"covfar {args.command}: error: {exc}", file=sys.stderr)
        return 1
