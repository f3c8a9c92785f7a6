"""Command-line orchestration: extract, generate, evaluate, survival, serve.

Exit codes: 0 all cases ok, 1 at least one case failed, 2 configuration
or usage error. Every invocation writes a machine-readable run manifest
next to its outputs; manifests and feature files carry no wall-clock
timestamps, so reruns with the same inputs and config are byte-identical.
"""

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

from . import __version__, nifti
from .config import ConfigError, PipelineConfig, config_hash, load_config
from .features import FeatureSet, assemble_feature_set
from .llm import LLMClient, LLMError
from .midline import ideal_midline, midline_deviation
from .reportgen import (build_prompt, feature_agreement, generate_report,
                        load_template, parse_report_findings,
                        reference_extraction, validate_report)
from .segstats import merge_segmentations, normalize_tumor_labels
from .texteval import (aggregate_scores, approx_randomization_test,
                       score_pair, summarize_agreement)
from .volume import LabelVolume
from .warp import apply_displacement_field
from . import survival as surv

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


def _sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out_dir, command, cfg, cases, outputs):
    doc = {
        "command": command,
        "package_version": __version__,
        "config_hash": config_hash(cfg),
        "cases": cases,
        "outputs": {str(k): _sha256_file(v) for k, v in sorted(outputs.items())},
    }
    path = Path(out_dir) / "run_manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _load_demographics(path):
    table = {}
    if not path:
        return table
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            age = row.get("age", "")
            table[row["subject_id"]] = {
                "age": float(age) if age else None,
                "sex": row.get("sex") or None,
            }
    return table


# extract ------------------------------------------------------------------

def _find_volume(case_dir, stem):
    for suffix in (".nii.gz", ".nii"):
        p = case_dir / f"{stem}{suffix}"
        if p.exists():
            return p
    return None


def _case_midline(case_dir, atlas_midline):
    """Subject midline: direct mask, or atlas annotation warped by the
    case displacement field."""
    direct = _find_volume(case_dir, "midline")
    if direct is not None:
        return nifti.load_nifti(direct, kind="labels")
    field_path = _find_volume(case_dir, "field")
    if atlas_midline is None or field_path is None:
        raise FileNotFoundError(
            "no midline mask and no (atlas midline + field) pair")
    field = nifti.load_nifti(field_path)
    return apply_displacement_field(atlas_midline, field)


def _extract_case(case_dir, cfg, atlas_midline, demo):
    subject_id = case_dir.name
    t1_path = _find_volume(case_dir, "t1n")
    tumor_path = _find_volume(case_dir, "tumor")
    anatomy_path = _find_volume(case_dir, "anatomy")
    missing = [name for name, p in
               [("t1n", t1_path), ("tumor", tumor_path), ("anatomy", anatomy_path)]
               if p is None]
    if missing:
        raise FileNotFoundError(f"missing inputs: {', '.join(missing)}")

    t1 = nifti.load_nifti(t1_path, kind="scalar")
    anatomy_raw = nifti.load_nifti(anatomy_path, kind="labels")
    anatomy = LabelVolume(anatomy_raw.data, anatomy_raw.affine,
                          scheme=cfg.anatomy_scheme)
    tumor_raw = nifti.load_nifti(tumor_path, kind="labels")
    tumor = normalize_tumor_labels(tumor_raw, cfg.tumor_labels)
    mid = _case_midline(case_dir, atlas_midline)

    merged = merge_segmentations(anatomy, tumor, mid)
    ideal = ideal_midline(mid)
    result = midline_deviation(mid, ideal)
    person = demo.get(subject_id, {})
    return assemble_feature_set(
        subject_id, merged, ideal=ideal, midline_result=result, cfg=cfg,
        age=person.get("age"), sex=person.get("sex")), t1


def cmd_extract(args, cfg):
    cases_root = Path(args.cases)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    case_dirs = sorted(p for p in cases_root.iterdir() if p.is_dir())
    if not case_dirs:
        print(f"no case directories under {cases_root}", file=sys.stderr)
        return EXIT_CONFIG

    atlas_midline = None
    if args.atlas_midline:
        atlas_midline = nifti.load_nifti(args.atlas_midline, kind="labels")
    demo = _load_demographics(args.demographics)

    def run_one(case_dir):
        try:
            features, _ = _extract_case(case_dir, cfg, atlas_midline, demo)
            return case_dir.name, features, None
        except Exception as e:
            return case_dir.name, None, f"{type(e).__name__}: {e}"

    if args.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_one, case_dirs))
    else:
        results = [run_one(d) for d in case_dirs]

    statuses = []
    outputs = {}
    for subject_id, features, error in results:
        if error is not None:
            statuses.append({"case": subject_id, "status": "failed",
                             "error": error})
            print(f"[failed] {subject_id}: {error}", file=sys.stderr)
            continue
        dest = out_dir / f"{subject_id}.features.json"
        dest.write_text(features.to_json() + "\n")
        outputs[dest.name] = dest
        statuses.append({"case": subject_id, "status": "ok"})
        print(f"[ok] {subject_id}")
    _write_manifest(out_dir, "extract", cfg, statuses, outputs)
    failed = any(s["status"] == "failed" for s in statuses)
    return EXIT_PARTIAL if failed else EXIT_OK


# generate -----------------------------------------------------------------

def cmd_generate(args, cfg):
    features_dir = Path(args.features)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    feature_files = sorted(features_dir.glob("*.features.json"))
    if not feature_files:
        print(f"no *.features.json under {features_dir}", file=sys.stderr)
        return EXIT_CONFIG
    variant = "Full" if cfg.prompt_variant == "full" else "Short"
    template = load_template(variant, examples_dir=args.examples)

    loaded = [FeatureSet.from_json(p.read_text()) for p in feature_files]

    def run_one(features):
        prompt = build_prompt(features, template)
        try:
            return features, generate_report(prompt, cfg.llm,
                                             features.subject_id), None
        except LLMError as e:
            return features, None, str(e)

    workers = max(args.jobs, cfg.llm.max_in_flight)
    if workers > 1 and len(loaded) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, loaded))
    else:
        results = [run_one(f) for f in loaded]

    statuses = []
    outputs = {}
    for features, report, error in results:
        if error is not None:
            statuses.append({"case": features.subject_id, "status": "failed",
                             "error": error})
            print(f"[failed] {features.subject_id}: {error}", file=sys.stderr)
            continue
        report.violations = [
            {"kind": v.kind, "message": v.message}
            for v in validate_report(report.findings_text, features)]
        text_path = out_dir / f"{features.subject_id}.txt"
        text_path.write_text(report.findings_text + "\n")
        (out_dir / f"{features.subject_id}.report.json").write_text(
            report.to_json() + "\n")
        outputs[text_path.name] = text_path
        statuses.append({"case": features.subject_id, "status": "ok",
                         "violations": len(report.violations)})
        print(f"[ok] {features.subject_id} ({len(report.violations)} violations)")
    _write_manifest(out_dir, "generate", cfg, statuses, outputs)
    failed = any(s["status"] == "failed" for s in statuses)
    return EXIT_PARTIAL if failed else EXIT_OK


# evaluate -----------------------------------------------------------------

def _read_corpus(directory):
    return {p.stem: p.read_text() for p in sorted(Path(directory).glob("*.txt"))}


def cmd_evaluate(args, cfg):
    candidates = _read_corpus(args.candidates)
    references = _read_corpus(args.references)
    shared = sorted(set(candidates) & set(references))
    if not shared:
        print("no filename overlap between candidates and references",
              file=sys.stderr)
        return EXIT_CONFIG

    scores = [score_pair(candidates[k], references[k]) for k in shared]
    summary = aggregate_scores(scores)
    agreements = []
    for k in shared:
        got = parse_report_findings(candidates[k])
        want = parse_report_findings(references[k])
        try:
            agreements.append(feature_agreement(got, want))
        except ValueError:
            pass

    doc = {
        "n": summary.n,
        "metrics": {m: {"mean": summary.means[m], "std": summary.stds[m]}
                    for m in sorted(summary.means)},
        "feature_agreement": summarize_agreement(agreements),
    }
    if args.compare_with:
        rivals = _read_corpus(args.compare_with)
        both = [k for k in shared if k in rivals]
        if len(both) >= 2:
            rival_scores = [score_pair(rivals[k], references[k]) for k in both]
            ours = {k: s for k, s in zip(shared, scores)}
            doc["ar_test"] = {}
            for metric in ("bleu1", "bleu2", "rouge1_f", "rouge2_f"):
                a = [getattr(ours[k], metric) for k in both]
                b = [getattr(s, metric) for s in rival_scores]
                doc["ar_test"][metric] = approx_randomization_test(
                    a, b, iters=args.iters, seed=args.seed if args.seed is not None
                    else cfg.seed)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "evaluation.json"
    json_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    csv_path = out_dir / "evaluation.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "mean", "std", "n"])
        for metric in sorted(summary.means):
            writer.writerow([metric, f"{summary.means[metric]:.6f}",
                             f"{summary.stds[metric]:.6f}", summary.n])
    _write_manifest(out_dir, "evaluate", cfg,
                    [{"case": k, "status": "ok"} for k in shared],
                    {p.name: p for p in (json_path, csv_path)})
    print(f"evaluated {summary.n} report pairs -> {json_path}")
    return EXIT_OK


# survival -----------------------------------------------------------------

def cmd_survival(args, cfg):
    try:
        records = surv.read_survival_csv(args.csv)
    except (ValueError, OSError) as e:
        print(f"bad survival CSV: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if not records:
        print(f"no records in {args.csv}", file=sys.stderr)
        return EXIT_CONFIG
    covariates = args.covariates or sorted(records[0].covariates)
    if not covariates:
        print("no covariates in CSV", file=sys.stderr)
        return EXIT_CONFIG

    doc = {"n": len(records), "n_events": sum(r.event for r in records),
           "km_overall": surv.km_curve_dict(surv.km_estimate(records)),
           "groups": {}, "cox": None}
    curves = {"all": surv.km_estimate(records)}
    for cov in covariates:
        high, low = surv.dichotomize(records, cov)
        chi2, p = surv.logrank_test(high, low)
        doc["groups"][cov] = {
            "n_high": len(high), "n_low": len(low),
            "km_high": surv.km_curve_dict(surv.km_estimate(high)),
            "km_low": surv.km_curve_dict(surv.km_estimate(low)),
            "logrank_chi2": chi2, "logrank_p": p,
        }
        curves[f"{cov} High"] = surv.km_estimate(high)
        curves[f"{cov} Low"] = surv.km_estimate(low)
    try:
        fit = surv.cox_fit(records, covariates)
        doc["cox"] = {"coefficients": fit.coefficients,
                      "log_likelihood": fit.log_likelihood,
                      "n_iter": fit.n_iter}
    except (surv.ConvergenceError, ValueError) as e:
        doc["cox"] = {"error": str(e)}

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "survival.json"
    json_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    svg_path = out_dir / "km.svg"
    svg_path.write_text(surv.svg_km_plot(curves))
    _write_manifest(out_dir, "survival", cfg, [],
                    {p.name: p for p in (json_path, svg_path)})
    print(f"survival analysis of {len(records)} records -> {json_path}")
    return EXIT_OK


# serve --------------------------------------------------------------------

def cmd_serve(args, cfg):
    import uvicorn

    from .review.service import create_app

    app = create_app(args.data, seed=cfg.seed)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


# entry point --------------------------------------------------------------

def _parse_set(values):
    out = {}
    for item in values or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def build_parser():
    parser = argparse.ArgumentParser(
        prog="glioscribe",
        description="Deterministic brain tumor feature extraction and "
                    "report generation pipeline.")
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="config override, dotted keys allowed")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--jobs", type=int, default=1,
                        help="bounded per-case parallelism")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="compute per-case feature documents")
    p.add_argument("--cases", required=True, help="directory of case subdirs")
    p.add_argument("--out", required=True)
    p.add_argument("--atlas-midline", help="atlas midline annotation NIfTI")
    p.add_argument("--demographics", help="CSV subject_id,age,sex")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("generate", help="generate findings text per case")
    p.add_argument("--features", required=True,
                   help="directory of *.features.json")
    p.add_argument("--out", required=True)
    p.add_argument("--examples", help="exemplar findings directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score candidate findings")
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--compare-with", help="second candidate corpus for the "
                                          "significance test")
    p.add_argument("--iters", type=int, default=10000)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("survival", help="KM curves, log-rank, Cox model")
    p.add_argument("--csv", required=True,
                   help="CSV with time_days,event,<covariates>")
    p.add_argument("--out", required=True)
    p.add_argument("--covariates", nargs="*")
    p.set_defaults(func=cmd_survival)

    p = sub.add_parser("serve", help="run the blinded review backend")
    p.add_argument("--data", required=True, help="review data directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, _parse_set(args.set))
        if args.seed is not None:
            cfg.seed = args.seed
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
