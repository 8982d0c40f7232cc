"""Command-line entry point: ``fairgauge {audit,plan,debias,simulate,render,oracle-predict}``.

Exit codes: 0 success, 1 I/O or schema error, 2 validation failure or
invalid spec, 3 predictor failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from ._serialize import canonical_dumps, write_canonical_json
from .data import DatasetError, MissingColumnError, load_dataset, validate, write_jsonl
from .debias import DebiasConfig, bundled_lexicon, load_indicator_map, load_lexicon, neutralize_dataset
from .metrics import GapAuditor, is_defined
from .render import ReportFormatError, render_report
from .sampling import CommandPredictor, EstimatorPredictor, PlanError, SamplingPlan, run_plan
from .stats import FilterRule, build_report, evaluate_replicate, filter_classes
from .synth import ConfusionPredictor, PopulationSpec, SpecError, generate, surgeon_scenario, true_metrics

log = logging.getLogger("fairgauge")

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2
EXIT_PREDICTOR = 3

SEED_ENV = "FAIRGAUGE_SEED"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# -- helpers --------------------------------------------------------------------

def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _ids_digest(ids) -> str:
    return hashlib.sha256("\n".join(map(str, ids)).encode("utf-8")).hexdigest()


def write_manifest(path, command: str, config: dict, inputs: dict, master_seed=None) -> None:
    """Everything needed to rerun ``command``; only ``timestamp`` may differ between reruns."""
    manifest = {
        "command": command,
        "config": config,
        "inputs": {name: {"path": str(p), "sha256": _digest(p)} for name, p in inputs.items()},
        "master_seed": master_seed,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    write_canonical_json(manifest, path)


def _parse_schema(text: str | None) -> dict | None:
    if not text:
        return None
    if os.path.exists(text):
        try:
            schema = json.loads(Path(text).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CliError(f"schema file {text}: {exc.msg}", EXIT_IO) from None
        if not isinstance(schema, dict):
            raise CliError(f"schema file {text} must hold a JSON object", EXIT_IO)
        return schema
    schema = {}
    for part in text.split(","):
        if "=" not in part:
            raise CliError(f"bad --schema entry {part!r}; expected role=column", EXIT_IO)
        role, col = part.split("=", 1)
        schema[role.strip()] = col.strip()
    return schema


def _load(path, schema, fmt=None, name=None):
    try:
        return load_dataset(path, fmt, schema, name=name)
    except DatasetError as exc:
        raise CliError(str(exc), EXIT_IO) from None


def _group_pair(text: str | None, ds) -> tuple[str, str]:
    if text:
        pair = tuple(p.strip() for p in text.split(","))
    else:
        pair = tuple(ds.groups[:2])
    if len(pair) != 2 or pair[0] == pair[1]:
        raise CliError(f"--groups needs two distinct groups, got {text!r}", EXIT_INVALID)
    for g in pair:
        if g not in ds.groups:
            raise CliError(f"group {g!r} not found in dataset (groups: {list(ds.groups)})", EXIT_INVALID)
    return pair


def _filter_rule(text: str) -> FilterRule:
    try:
        return FilterRule.parse(text)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INVALID) from None


def _resolve_seed(flag_seed, fallback):
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"{SEED_ENV} must be an integer, got {env!r}", EXIT_INVALID) from None
    return fallback


def _load_spec(text: str) -> PopulationSpec:
    if text == "surgeon":
        return surgeon_scenario()
    try:
        return PopulationSpec.from_json(text)
    except OSError as exc:
        raise CliError(f"cannot read spec {text}: {exc}", EXIT_IO) from None
    except SpecError as exc:
        raise CliError(f"invalid spec {text}: {exc}", EXIT_INVALID) from None


def _write_rows_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if v is None else format(v, ".12g") if isinstance(v, float) else v)
                        for k, v in row.items()})


# -- commands ---------------------------------------------------------------------

def cmd_audit(args) -> int:
    schema = _parse_schema(args.schema)
    ds = _load(args.dataset, schema, args.format)
    pred_col = (schema or {}).get("predicted_class", "predicted_class")
    if not ds.has_predictions:
        raise CliError(f"no predictions: column {pred_col!r} is missing or empty", EXIT_INVALID)
    report = validate(ds)
    errors = [i for i in report.issues if i.severity == "error"]
    if errors:
        raise CliError("validation failed: " + "; ".join(i.problem for i in errors), EXIT_INVALID)
    pair = _group_pair(args.groups, ds)
    rule = _filter_rule(args.filter)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        auditor = GapAuditor(group_pair=pair).fit(ds)
    table = auditor.gap_table_
    retained, excluded = filter_classes([table], rule)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows_csv(out / "gaps.csv", table.rows())
    support_rows = []
    for side, g in enumerate(pair):
        for cls in ds.classes:
            sc = table.support(side, cls)
            loss = sc.information_loss
            support_rows.append({"group": g, "class": cls, "n_gp": sc.n_gp, "n_tpr": sc.n_tpr,
                                 "n_pp": sc.n_pp, "information_loss": loss if is_defined(loss) else None})
    _write_rows_csv(out / "support_counts.csv", support_rows)
    performance = {"accuracy": auditor.accuracy_,
                   "f1": {c: (v if is_defined(v) else None) for c, v in auditor.f1_.items()}}
    write_canonical_json(performance, out / "performance.json")
    write_canonical_json({"filter": str(rule), "retained_classes": retained,
                          "excluded_classes": excluded}, out / "classes.json")
    write_canonical_json({
        "dataset": ds.name, "groups": list(ds.groups), "classes": list(ds.classes),
        "group_pair": list(pair), "alpha": args.alpha, "validation": report.to_dict(),
        "gap_table": table.to_dict(), "performance": performance,
        "retained_classes": retained, "excluded_classes": excluded,
    }, out / "audit.json")
    write_manifest(out / "manifest.json", "audit",
                   {"schema": schema, "groups": list(pair), "alpha": args.alpha,
                    "filter": str(rule), "format": args.format},
                   {"dataset": args.dataset})
    n_missing = ds.n_missing_predictions
    if n_missing:
        log.warning("%d record(s) without prediction excluded from denominators", n_missing)
    print(f"audited {len(ds)} records; {len(retained)}/{len(ds.classes)} classes retained -> {out}")
    return EXIT_OK


def _parse_datasets(values: list[str]) -> list[tuple[str, str]]:
    out = []
    for v in values:
        if "=" in v and not os.path.exists(v):
            name, path = v.split("=", 1)
        else:
            name, path = "base", v
        out.append((name, path))
    names = [n for n, _ in out]
    if len(set(names)) != len(names):
        raise CliError(f"dataset variant names must be unique, got {names}", EXIT_INVALID)
    return out


def cmd_plan(args) -> int:
    schema = _parse_schema(args.schema)
    try:
        plan = SamplingPlan.from_json(args.plan)
    except OSError as exc:
        raise CliError(f"cannot read plan {args.plan}: {exc}", EXIT_IO) from None
    except (ValueError, TypeError) as exc:
        raise CliError(f"invalid plan {args.plan}: {exc}", EXIT_INVALID) from None
    seed = _resolve_seed(args.seed, plan.master_seed)
    try:
        plan = SamplingPlan(plan.sizes, plan.replicates_per_size, plan.split_ratio, seed)
    except (ValueError, TypeError) as exc:
        raise CliError(f"invalid seed: {exc}", EXIT_INVALID) from None

    if bool(args.predictor_cmd) == bool(args.oracle_spec):
        raise CliError("give exactly one of --predictor-cmd or --oracle-spec", EXIT_INVALID)
    if args.predictor_cmd:
        predictor = CommandPredictor(args.predictor_cmd)
    else:
        predictor = EstimatorPredictor(ConfusionPredictor(_load_spec(args.oracle_spec)),
                                       features=("group", "true_class"))
    rule = _filter_rule(args.filter)
    variants = _parse_datasets(args.dataset)

    out = Path(args.out)
    results, failures = [], []
    pair = None
    for variant, path in variants:
        ds = _load(path, schema, args.format, name=variant)
        if pair is None:
            pair = _group_pair(args.groups, ds)
        try:
            plan.check_against(ds)
        except ValueError as exc:
            raise CliError(str(exc), EXIT_INVALID) from None
        try:
            handles = run_plan(plan, ds, predictor, n_jobs=args.jobs)
        except PlanError as exc:
            handles = exc.completed
            failures.extend((variant, f) for f in exc.failures)
        rep_dir = out / "replicates" / variant
        rep_dir.mkdir(parents=True, exist_ok=True)
        for h in handles:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = evaluate_replicate(h, pair, variant)
            results.append(res)
            payload = res.to_dict()
            payload["membership"] = {"train_sha256": _ids_digest(h.train.ids),
                                     "test_sha256": _ids_digest(h.test.ids),
                                     "n_train": len(h.train), "n_test": len(h.test)}
            write_canonical_json(payload, rep_dir / f"size-{h.size}_rep-{h.index:03d}.json")

    config = {"plan": plan.to_dict(), "schema": schema, "groups": list(pair), "alpha": args.alpha,
              "filter": str(rule), "test_variant": args.test_variant,
              "predictor_cmd": args.predictor_cmd, "oracle_spec": args.oracle_spec,
              "datasets": [[n, p] for n, p in variants], "format": args.format}
    inputs = {f"dataset:{n}": p for n, p in variants}
    inputs["plan"] = args.plan
    if args.oracle_spec and args.oracle_spec != "surgeon":
        inputs["oracle_spec"] = args.oracle_spec
    write_manifest(out / "manifest.json", "plan", config, inputs, plan.master_seed)

    if failures:
        for variant, f in failures:
            print(f"error: variant {variant!r}: {f}", file=sys.stderr)
        return EXIT_PREDICTOR
    report = build_report(results, args.alpha, rule, args.test_variant)
    report.write(out)
    print(f"{len(results)} replicates, {len(report.retained_classes)} classes retained -> {out / 'report.json'}")
    return EXIT_OK


def cmd_debias(args) -> int:
    schema = _parse_schema(args.schema)
    ds = _load(args.dataset, schema, args.format)
    try:
        lexicon = load_lexicon(args.lexicon) if args.lexicon else bundled_lexicon()
        imap = load_indicator_map(args.indicator_map) if args.indicator_map else None
    except (OSError, ValueError) as exc:
        raise CliError(str(exc), EXIT_IO) from None
    try:
        config = DebiasConfig(args.target, imap, lexicon, args.neutral_name, args.her_as)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INVALID) from None
    new_ds, report = neutralize_dataset(ds, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(new_ds, out)
    report_path = Path(args.report) if args.report else out.with_name(out.stem + ".debias_report.json")
    write_canonical_json(report.to_dict(), report_path)
    write_manifest(out.with_name(out.stem + ".manifest.json"), "debias",
                   {"target": args.target, "neutral_name": args.neutral_name, "her_as": args.her_as,
                    "schema": schema, "indicator_map": config.indicator_map},
                   {k: v for k, v in (("dataset", args.dataset), ("lexicon", args.lexicon),
                                      ("indicator_map", args.indicator_map)) if v})
    if report.missing_text:
        log.warning("%d record(s) without text passed through unchanged", len(report.missing_text))
    print(f"{report.replaced_indicator_count} indicator(s) and {report.replaced_name_count} name(s) "
          f"replaced -> {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = _load_spec(args.spec)
    seed = _resolve_seed(args.seed, 0)
    try:
        ds = generate(spec, args.n, seed)
    except (ValueError, TypeError) as exc:
        raise CliError(str(exc), EXIT_INVALID) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(ds, out)
    pair = tuple(args.groups.split(",")) if args.groups else tuple(spec.groups[:2])
    if len(pair) != 2 or any(g not in spec.groups for g in pair) or len(spec.groups) < 2:
        pair = None
    tm = true_metrics(spec)
    rows = tm.rows(pair)
    _write_rows_csv(out.with_name(out.stem + ".true_metrics.csv"), rows)
    write_canonical_json({"spec": spec.to_dict(), "group_pair": list(pair) if pair else None,
                          "true_metrics": rows}, out.with_name(out.stem + ".true_metrics.json"))
    inputs = {} if args.spec == "surgeon" else {"spec": args.spec}
    write_manifest(out.with_name(out.stem + ".manifest.json"), "simulate",
                   {"spec": args.spec, "n": args.n}, inputs, seed)
    print(f"generated {len(ds)} records -> {out}")
    return EXIT_OK


def cmd_render(args) -> int:
    try:
        report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read report: {exc}", EXIT_IO) from None
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed report: {exc.msg}", EXIT_IO) from None
    try:
        written = render_report(report, args.out)
    except ReportFormatError as exc:
        raise CliError(str(exc), EXIT_IO) from None
    print(f"wrote {len(written)} SVG file(s) -> {args.out}")
    return EXIT_OK


def cmd_oracle_predict(args) -> int:
    """Predictor-boundary helper: predictions for a test JSONL from a population spec."""
    spec = _load_spec(args.spec)
    ds = _load(args.test, None)
    est = EstimatorPredictor(ConfusionPredictor(spec), features=("group", "true_class"))
    labels = est(ds, ds, args.seed)
    preds = dict(zip(ds.ids.tolist(), labels))
    Path(args.out).write_text(canonical_dumps(preds) + "\n", encoding="utf-8")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairgauge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fairgauge {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p, multiple=False):
        if multiple:
            p.add_argument("--dataset", action="append", required=True,
                           help="dataset path, or NAME=PATH for a named variant (repeatable)")
        else:
            p.add_argument("--dataset", required=True)
        p.add_argument("--schema", help="role=column pairs (comma separated) or a JSON file")
        p.add_argument("--format", choices=["csv", "jsonl"], help="defaults to the file suffix")

    p = sub.add_parser("audit", help="gap tables, supports and accuracy/F1 for one predicted dataset")
    data_args(p)
    p.add_argument("--groups", help="ordered pair g,g_other (default: first two groups)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--filter", default="any-prediction", help="none | any-prediction | min-preds=K")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("plan", help="replicate sampling plan with summaries and t-tests")
    data_args(p, multiple=True)
    p.add_argument("--plan", required=True, help="JSON with sizes, replicates_per_size, split_ratio, master_seed")
    p.add_argument("--predictor-cmd", help="command with {train} {test} {out} {seed} placeholders")
    p.add_argument("--oracle-spec", help="population spec JSON (or 'surgeon') for the synthetic predictor")
    p.add_argument("--groups")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--filter", default="any-prediction")
    p.add_argument("--test-variant", choices=["student_pooled", "welch"], default="student_pooled")
    p.add_argument("--seed", type=int, help=f"overrides the plan's master_seed and ${SEED_ENV}")
    p.add_argument("--jobs", type=int, default=1, help="parallel replicates (0 = one per CPU)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("debias", help="rewrite gender indicators and first names")
    data_args(p)
    p.add_argument("--target", default="M", help="target gender label (default M)")
    p.add_argument("--lexicon", help="first-name file, one per line (default: bundled list)")
    p.add_argument("--indicator-map", help="JSON object overriding the indicator rewrites")
    p.add_argument("--neutral-name", default="Camille")
    p.add_argument("--her-as", choices=["possessive", "objective"], default="possessive")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--report", help="report path (default: <out>.debias_report.json)")
    p.set_defaults(func=cmd_debias)

    p = sub.add_parser("simulate", help="draw a synthetic population and its exact metrics")
    p.add_argument("--spec", required=True, help="population spec JSON or 'surgeon'")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--groups")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("render", help="SVG box plots and heat tables from a report")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("oracle-predict", help="synthetic predictions for a test JSONL")
    p.add_argument("--spec", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
