"""Replicate aggregation: summaries, two-sample t-tests, class filters, reports."""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as sps

from ._serialize import canonical_dumps
from ._validation import check_alpha
from .metrics import KINDS, GapTable, accuracy, f1_all_classes, gap_table, is_defined

__all__ = [
    "Summary",
    "summarize",
    "TTestResult",
    "t_test",
    "FilterRule",
    "filter_classes",
    "ReplicateResult",
    "evaluate_replicate",
    "SummaryReport",
    "build_report",
]


@dataclass(frozen=True)
class Summary:
    count: int
    mean: float | None
    variance: float | None
    min: float | None
    q1: float | None
    median: float | None
    q3: float | None
    max: float | None
    undefined_count: int = 0

    @property
    def empty(self) -> bool:
        return self.count == 0

    @classmethod
    def empty_summary(cls, undefined_count: int) -> "Summary":
        return cls(0, None, None, None, None, None, None, None, undefined_count)

    def to_dict(self) -> dict:
        return {"count": self.count, "mean": self.mean, "variance": self.variance,
                "min": self.min, "q1": self.q1, "median": self.median, "q3": self.q3,
                "max": self.max, "undefined_count": self.undefined_count, "empty": self.empty}


def _defined_values(values) -> tuple[np.ndarray, int]:
    kept = [float(v) for v in values if is_defined(v)]
    return np.asarray(kept, dtype=float), len(values) - len(kept)


def summarize(values: Sequence) -> Summary:
    """Moments and five-number summary over the defined entries of ``values``.

    UNDEFINED, None and NaN entries are skipped and counted. The variance
    is the unbiased (n - 1) estimate and is None for a single observation.
    Quartiles interpolate linearly between order statistics.
    """
    values = list(values)
    x, undefined = _defined_values(values)
    if x.size == 0:
        raise ValueError("cannot summarize: no defined values")
    mean = float(x.mean())
    variance = float(((x - mean) ** 2).sum() / (x.size - 1)) if x.size > 1 else None
    q = np.quantile(x, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return Summary(int(x.size), mean, variance, *map(float, q), undefined_count=undefined)


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: float
    p_value: float
    significant: bool
    variant: str = "student_pooled"
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {"t_statistic": self.t_statistic, "degrees_of_freedom": self.degrees_of_freedom,
                "p_value": self.p_value, "significant": self.significant,
                "variant": self.variant, "degenerate": self.degenerate}


TEST_VARIANTS = ("student_pooled", "welch")


def t_test(a: Sequence[float], b: Sequence[float], variant: str = "student_pooled",
           alpha: float = 0.05) -> TTestResult:
    """Two-sided two-sample t-test of equal means.

    ``student_pooled`` pools the variances with ``n_a + n_b - 2`` degrees of
    freedom; ``welch`` uses the Welch-Satterthwaite approximation. When both
    samples are constant the test is degenerate: equal constants give
    t = 0, p = 1 and different constants give t = +-inf, p = 0.
    """
    if variant not in TEST_VARIANTS:
        raise ValueError(f"unknown t-test variant {variant!r}; expected one of {TEST_VARIANTS}")
    alpha = check_alpha(alpha)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise ValueError(f"t-test needs at least 2 observations per sample, got {na} and {nb}")
    ma, mb = a.mean(), b.mean()
    va = ((a - ma) ** 2).sum() / (na - 1)
    vb = ((b - mb) ** 2).sum() / (nb - 1)
    if variant == "student_pooled":
        df = float(na + nb - 2)
        pooled = ((na - 1) * va + (nb - 1) * vb) / df
        se2 = pooled * (1 / na + 1 / nb)
    else:
        sa, sb = va / na, vb / nb
        se2 = sa + sb
        df = float(se2 ** 2 / (sa ** 2 / (na - 1) + sb ** 2 / (nb - 1))) if se2 > 0 else float(na + nb - 2)
    diff = ma - mb
    if se2 == 0:
        if diff == 0:
            return TTestResult(0.0, df, 1.0, False, variant, degenerate=True)
        t = math.copysign(math.inf, diff)
        return TTestResult(t, df, 0.0, True, variant, degenerate=True)
    t = float(diff / math.sqrt(se2))
    p = float(min(1.0, 2.0 * sps.t.sf(abs(t), df)))
    return TTestResult(t, df, p, p < alpha, variant)


# -- class filtering ----------------------------------------------------------

@dataclass(frozen=True)
class FilterRule:
    """Keep a class only if each group of the pair has more than ``min_exclusive``
    predictions of it in every replicate.

    ``min_exclusive = 0`` means at least one prediction per group;
    ``None`` retains every class.
    """

    min_exclusive: int | None = 0

    @classmethod
    def parse(cls, text: str) -> "FilterRule":
        text = text.strip()
        if text == "none":
            return cls(None)
        if text == "any-prediction":
            return cls(0)
        m = re.fullmatch(r"min-preds=(\d+)", text)
        if m:
            return cls(int(m.group(1)))
        raise ValueError(f"unknown filter {text!r}; expected none, any-prediction or min-preds=K")

    @classmethod
    def min_predictions_per_group(cls, k: int) -> "FilterRule":
        return cls(int(k))

    def __str__(self) -> str:
        if self.min_exclusive is None:
            return "none"
        if self.min_exclusive == 0:
            return "any-prediction"
        return f"min-preds={self.min_exclusive}"


MIN_ONE_PREDICTION_PER_GROUP = FilterRule(0)


def filter_classes(results: Sequence[GapTable], rule: FilterRule = MIN_ONE_PREDICTION_PER_GROUP
                   ) -> tuple[list[str], dict[str, str]]:
    """Classes passing ``rule`` in every table, plus the reason each other class failed.

    The count checked is the number of records of each group predicted as
    the class (the GP numerator).
    """
    if not results:
        raise ValueError("filter_classes needs at least one gap table")
    classes = results[0].classes
    if rule.min_exclusive is None:
        return list(classes), {}
    retained, reasons = [], {}
    for j, cls in enumerate(classes):
        reason = None
        for r, table in enumerate(results):
            for side, group in enumerate(table.group_pair):
                n = int(table.n_gp[side, j])
                if n <= rule.min_exclusive:
                    reason = (f"{n} prediction(s) for group {group!r} in replicate {r}; "
                              f"rule {rule} needs more than {rule.min_exclusive}")
                    break
            if reason:
                break
        if reason:
            reasons[cls] = reason
        else:
            retained.append(cls)
    return retained, reasons


# -- replicate results and report ------------------------------------------------

@dataclass(frozen=True)
class ReplicateResult:
    size: int
    index: int
    gap_table: GapTable
    accuracy: float
    f1: dict
    variant: str = "base"
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "variant": self.variant, "size": self.size, "index": self.index, "seed": self.seed,
            "accuracy": self.accuracy,
            "f1": {c: (v if is_defined(v) else None) for c, v in self.f1.items()},
            "gap_table": self.gap_table.to_dict(),
        }


def evaluate_replicate(handle, group_pair: tuple[str, str], variant: str = "base") -> ReplicateResult:
    test = handle.test
    return ReplicateResult(handle.size, handle.index, gap_table(test, *group_pair),
                           accuracy(test), f1_all_classes(test), variant, handle.seed)


def _summary_or_empty(values) -> Summary:
    try:
        return summarize(values)
    except ValueError:
        return Summary.empty_summary(len(values))


def _test_entry(a, b, variant, alpha) -> dict:
    xa, _ = _defined_values(a)
    xb, _ = _defined_values(b)
    if xa.size < 2 or xb.size < 2:
        return {"status": "insufficient data", "result": None, "n_a": int(xa.size), "n_b": int(xb.size)}
    return {"status": "ok", "result": t_test(xa, xb, variant, alpha).to_dict(),
            "n_a": int(xa.size), "n_b": int(xb.size)}


@dataclass
class SummaryReport:
    group_pair: tuple[str, str]
    classes: list[str]
    retained_classes: list[str]
    excluded_classes: dict
    sizes: list[int]
    variants: list[str]
    alpha: float
    test_variant: str
    filter_rule: str
    gap_summaries: list = field(default_factory=list)
    accuracy_summaries: list = field(default_factory=list)
    f1_summaries: list = field(default_factory=list)
    t_tests: list = field(default_factory=list)

    def gap_summary(self, metric, cls: str, size: int, variant: str = "base") -> Summary:
        metric = str(metric)
        for row in self.gap_summaries:
            if (row["metric"], row["class"], row["size"], row["variant"]) == (metric, cls, size, variant):
                return row["summary"]
        raise KeyError((metric, cls, size, variant))

    def to_dict(self) -> dict:
        def rows(items):
            return [{**r, "summary": r["summary"].to_dict()} for r in items]

        return {
            "group_pair": list(self.group_pair),
            "classes": list(self.classes),
            "retained_classes": list(self.retained_classes),
            "excluded_classes": dict(self.excluded_classes),
            "sizes": list(self.sizes),
            "variants": list(self.variants),
            "alpha": self.alpha,
            "test_variant": self.test_variant,
            "filter": self.filter_rule,
            "gap_summaries": rows(self.gap_summaries),
            "accuracy_summaries": rows(self.accuracy_summaries),
            "f1_summaries": rows(self.f1_summaries),
            "t_tests": list(self.t_tests),
        }

    def to_json(self) -> str:
        return canonical_dumps(self.to_dict()) + "\n"

    # -- CSV exports -----------------------------------------------------
    def _grid(self, stat: str) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", "metric", "class", *[f"size_{s}" for s in self.sizes]])
        for variant in self.variants:
            for kind in KINDS:
                for cls in self.retained_classes:
                    cells = []
                    for s in self.sizes:
                        v = getattr(self.gap_summary(kind, cls, s, variant), stat)
                        cells.append("" if v is None else format(v, ".12g"))
                    w.writerow([variant, kind.value, cls, *cells])
        return buf.getvalue()

    def csv_tables(self) -> dict[str, str]:
        """CSV text keyed by file name."""
        fields = ["count", "mean", "variance", "min", "q1", "median", "q3", "max", "undefined_count"]

        def fmt(v):
            if v is None:
                return ""
            return format(v, ".12g") if isinstance(v, float) else str(v)

        def summary_table(items, keys):
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow([*keys, *fields])
            for r in items:
                s = r["summary"].to_dict()
                w.writerow([r[k] for k in keys] + [fmt(s[f]) for f in fields])
            return buf.getvalue()

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["comparison", "quantity", "metric", "class", "variant", "size", "a", "b",
                    "status", "n_a", "n_b", "t_statistic", "degrees_of_freedom", "p_value",
                    "significant", "degenerate"])
        for t in self.t_tests:
            res = t["result"] or {}
            w.writerow([t["comparison"], t["quantity"], t.get("metric", ""), t.get("class", ""),
                        t.get("variant", ""), t.get("size", ""), t["a"], t["b"], t["status"],
                        t["n_a"], t["n_b"], fmt(res.get("t_statistic")),
                        fmt(res.get("degrees_of_freedom")), fmt(res.get("p_value")),
                        "" if not res else str(res["significant"]).lower(),
                        "" if not res else str(res["degenerate"]).lower()])
        return {
            "gap_summaries.csv": summary_table(self.gap_summaries, ["variant", "size", "metric", "class"]),
            "variance_table.csv": self._grid("variance"),
            "mean_table.csv": self._grid("mean"),
            "performance_summaries.csv": summary_table(
                [{**r, "class": ""} for r in self.accuracy_summaries] + self.f1_summaries,
                ["variant", "size", "quantity", "class"]),
            "t_tests.csv": buf.getvalue(),
        }

    def write(self, out_dir) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = [out_dir / "report.json"]
        written[0].write_text(self.to_json(), encoding="utf-8")
        for name, text in self.csv_tables().items():
            path = out_dir / name
            path.write_text(text, encoding="utf-8")
            written.append(path)
        return written


def build_report(results: Sequence[ReplicateResult], alpha: float = 0.05,
                 rule: FilterRule = MIN_ONE_PREDICTION_PER_GROUP,
                 test_variant: str = "student_pooled") -> SummaryReport:
    """Summaries of gaps, accuracy and F1 per size, and t-tests between sizes and variants.

    Classes failing ``rule`` in any replicate of any size or variant are left
    out of the gap and F1 sections. Size pairs are compared within each
    variant; variant pairs within each size.
    """
    if not results:
        raise ValueError("build_report needs at least one replicate result")
    alpha = check_alpha(alpha)
    if test_variant not in TEST_VARIANTS:
        raise ValueError(f"unknown t-test variant {test_variant!r}")
    results = sorted(results, key=lambda r: (r.variant, r.size, r.index))
    pair = results[0].gap_table.group_pair
    classes = list(results[0].gap_table.classes)
    for r in results:
        if r.gap_table.group_pair != pair or list(r.gap_table.classes) != classes:
            raise ValueError("replicate results disagree on group pair or classes")
    variants = list(dict.fromkeys(r.variant for r in results))
    sizes = sorted({r.size for r in results})
    retained, excluded = filter_classes([r.gap_table for r in results], rule)

    groups: dict[tuple[str, int], list[ReplicateResult]] = {}
    for r in results:
        groups.setdefault((r.variant, r.size), []).append(r)

    gap_values, acc_values, f1_values = {}, {}, {}
    for (variant, size), rs in groups.items():
        acc_values[variant, size] = [r.accuracy for r in rs]
        for kind in KINDS:
            gaps = np.array([r.gap_table.gaps(kind) for r in rs])  # (R, C)
            for j, cls in enumerate(classes):
                if cls in retained:
                    gap_values[variant, size, kind.value, cls] = gaps[:, j].tolist()
        for cls in retained:
            f1_values[variant, size, cls] = [r.f1[cls] for r in rs]

    report = SummaryReport(pair, classes, retained, excluded, sizes, variants, alpha,
                           test_variant, str(rule))
    for variant in variants:
        for size in sizes:
            if (variant, size) not in groups:
                continue
            for kind in KINDS:
                for cls in retained:
                    vals = gap_values[variant, size, kind.value, cls]
                    report.gap_summaries.append({"variant": variant, "size": size, "metric": kind.value,
                                                 "class": cls, "summary": _summary_or_empty(vals)})
            report.accuracy_summaries.append({"variant": variant, "size": size, "quantity": "accuracy",
                                              "summary": _summary_or_empty(acc_values[variant, size])})
            for cls in retained:
                report.f1_summaries.append({"variant": variant, "size": size, "quantity": "f1",
                                            "class": cls,
                                            "summary": _summary_or_empty(f1_values[variant, size, cls])})

    def add(comparison, quantity, a, b, va, vb, **keys):
        report.t_tests.append({"comparison": comparison, "quantity": quantity, "a": a, "b": b,
                               **keys, **_test_entry(va, vb, test_variant, alpha)})

    for variant in variants:
        for s1, s2 in combinations(sizes, 2):
            if (variant, s1) not in groups or (variant, s2) not in groups:
                continue
            for kind in KINDS:
                for cls in retained:
                    add("size", "gap", s1, s2, gap_values[variant, s1, kind.value, cls],
                        gap_values[variant, s2, kind.value, cls], variant=variant,
                        metric=kind.value, **{"class": cls})
            add("size", "accuracy", s1, s2, acc_values[variant, s1], acc_values[variant, s2],
                variant=variant)
            for cls in retained:
                add("size", "f1", s1, s2, f1_values[variant, s1, cls], f1_values[variant, s2, cls],
                    variant=variant, **{"class": cls})
    for size in sizes:
        for v1, v2 in combinations(variants, 2):
            if (v1, size) not in groups or (v2, size) not in groups:
                continue
            for kind in KINDS:
                for cls in retained:
                    add("variant", "gap", v1, v2, gap_values[v1, size, kind.value, cls],
                        gap_values[v2, size, kind.value, cls], size=size,
                        metric=kind.value, **{"class": cls})
            add("variant", "accuracy", v1, v2, acc_values[v1, size], acc_values[v2, size], size=size)
            for cls in retained:
                add("variant", "f1", v1, v2, f1_values[v1, size, cls], f1_values[v2, size, cls],
                    size=size, **{"class": cls})
    return report
