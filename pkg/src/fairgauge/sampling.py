"""Stratified subsampling, stratified train/test splits and replicate plans.

Cells are the (group, true_class) pairs of the source dataset, ordered
group-major in vocabulary order. Fractional allocations are rounded with the
largest-remainder (Hamilton) method; ties go to the earlier cell.
"""

from __future__ import annotations

import json
import os
import shlex
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from sklearn.base import clone

from ._validation import check_positive_int, check_ratio, check_seed
from .data import MISSING, AuditDataset, write_jsonl

__all__ = [
    "largest_remainder",
    "cell_allocation",
    "derive_seed",
    "stratified_sample",
    "split",
    "SamplingPlan",
    "ReplicateHandle",
    "PredictorError",
    "PlanError",
    "run_plan",
    "EstimatorPredictor",
    "CommandPredictor",
    "identity_predictor",
]


def largest_remainder(quotas: Sequence, total: int) -> list[int]:
    """Round non-negative ``quotas`` to integers summing to ``total``.

    Every cell gets ``floor(quota)``; the remaining units go to the largest
    fractional parts, earlier cells first on ties. Quotas may be ints,
    floats or :class:`fractions.Fraction`; fractions keep ties exact.
    """
    quotas = [Fraction(q) if not isinstance(q, float) else Fraction(repr(q)) for q in quotas]
    if any(q < 0 for q in quotas):
        raise ValueError("quotas must be non-negative")
    floors = [q.numerator // q.denominator for q in quotas]
    extra = total - sum(floors)
    if extra < 0 or extra > len(quotas):
        raise ValueError(f"cannot allocate {total} units to quotas summing to {float(sum(quotas))}")
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - floors[i]), i))
    for i in order[:extra]:
        floors[i] += 1
    return floors


def cell_allocation(counts: Sequence[int], size: int) -> list[int]:
    """Proportional allocation of ``size`` records over cells of the given populations."""
    total = sum(counts)
    return largest_remainder([Fraction(size * c, total) for c in counts], size)


def derive_seed(master_seed: int, size: int, index: int) -> int:
    """64-bit seed for replicate ``index`` of ``size``, a pure function of its inputs."""
    seq = np.random.SeedSequence(check_seed(master_seed, "master_seed"), spawn_key=(int(size), int(index)))
    return int(seq.generate_state(1, np.uint64)[0])


def _draw(members: list[np.ndarray], alloc: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    chosen = []
    for idx, k in zip(members, alloc):
        if k > len(idx):
            raise AssertionError(f"allocation {k} exceeds cell population {len(idx)}")
        if k == len(idx):
            chosen.append(idx)
        elif k:
            chosen.append(idx[rng.choice(len(idx), size=k, replace=False)])
    if not chosen:
        return np.empty(0, dtype=np.int64)
    return np.sort(np.concatenate(chosen))


def stratified_sample(ds: AuditDataset, size: int, seed: int) -> AuditDataset:
    """Draw ``size`` records preserving each (group, class) cell's share.

    Records within a cell are chosen uniformly without replacement. The
    result keeps the source's record order and vocabularies.
    """
    size = check_positive_int(size, "size")
    if size > len(ds):
        raise ValueError(f"sample size {size} exceeds dataset size {len(ds)}")
    counts, members = ds.strata()
    alloc = cell_allocation(counts.tolist(), size)
    rng = np.random.default_rng(check_seed(seed))
    return ds.subset(_draw(members, alloc, rng))


def split(ds: AuditDataset, ratio=0.7, seed: int = 0) -> tuple[AuditDataset, AuditDataset]:
    """Stratified train/test partition with ``ratio`` of records on the train side.

    The train total is ``ratio * len(ds)`` rounded half up; per-cell train
    counts follow largest-remainder rounding of ``ratio * cell_count``.
    """
    frac = check_ratio(ratio, "ratio")
    counts, members = ds.strata()
    target = frac * len(ds)
    n_train = int((target + Fraction(1, 2)) // 1)
    alloc = largest_remainder([frac * int(c) for c in counts], n_train)
    rng = np.random.default_rng(check_seed(seed))
    train_idx = _draw(members, alloc, rng)
    mask = np.ones(len(ds), dtype=bool)
    mask[train_idx] = False
    return ds.subset(train_idx), ds.subset(np.flatnonzero(mask))


# -- plans -------------------------------------------------------------------

@dataclass(frozen=True)
class SamplingPlan:
    sizes: tuple[int, ...]
    replicates_per_size: int = 50
    split_ratio: float = 0.7
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(check_positive_int(s, "size") for s in self.sizes))
        if not self.sizes:
            raise ValueError("plan needs at least one size")
        check_positive_int(self.replicates_per_size, "replicates_per_size")
        check_ratio(self.split_ratio, "split_ratio")
        check_seed(self.master_seed, "master_seed")

    def check_against(self, ds: AuditDataset) -> None:
        too_big = [s for s in self.sizes if s > len(ds)]
        if too_big:
            raise ValueError(f"plan sizes {too_big} exceed dataset size {len(ds)}")

    @classmethod
    def from_dict(cls, data: Mapping) -> "SamplingPlan":
        unknown = set(data) - {"sizes", "replicates_per_size", "split_ratio", "master_seed"}
        if unknown:
            raise ValueError(f"unknown plan keys {sorted(unknown)}")
        if "sizes" not in data:
            raise ValueError("plan is missing 'sizes'")
        return cls(sizes=tuple(data["sizes"]),
                   replicates_per_size=data.get("replicates_per_size", 50),
                   split_ratio=data.get("split_ratio", 0.7),
                   master_seed=data.get("master_seed", 0))

    @classmethod
    def from_json(cls, path) -> "SamplingPlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {"sizes": list(self.sizes), "replicates_per_size": self.replicates_per_size,
                "split_ratio": self.split_ratio, "master_seed": self.master_seed}


@dataclass(frozen=True)
class ReplicateHandle:
    size: int
    index: int
    seed: int
    train: AuditDataset = field(repr=False)
    test: AuditDataset = field(repr=False)


class PredictorError(RuntimeError):
    def __init__(self, size: int, index: int, cause: BaseException):
        super().__init__(f"predictor failed on replicate (size={size}, index={index}): {cause}")
        self.size = size
        self.index = index
        self.cause = cause


class PlanError(RuntimeError):
    """Some replicates failed; ``completed`` holds the ones that succeeded."""

    def __init__(self, failures: list[PredictorError], completed: list[ReplicateHandle]):
        lines = "; ".join(str(f) for f in failures)
        super().__init__(f"{len(failures)} replicate(s) failed: {lines}")
        self.failures = failures
        self.completed = completed


#: ``predictor(train, test, seed)`` returns either a mapping id -> label or
#: a sequence of labels aligned with ``test``'s records.
Predictor = Callable[[AuditDataset, AuditDataset, int], object]


def _replicate_seeds(seed: int) -> tuple[int, int, int]:
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(int(c.generate_state(1, np.uint64)[0]) for c in children)


def _apply_predictions(test: AuditDataset, preds) -> AuditDataset:
    if isinstance(preds, Mapping):
        missing = set(test.ids.tolist()) - set(preds)
        if missing:
            raise ValueError(f"predictions missing for {len(missing)} test record(s), "
                             f"e.g. {sorted(missing)[0]!r}")
        labels = [preds[rid] for rid in test.ids.tolist()]
    else:
        labels = list(preds)
        if len(labels) != len(test):
            raise ValueError(f"predictor returned {len(labels)} labels for {len(test)} test records")
    return test.with_pred_codes(test.encode_classes(labels))


def _run_one(ds, plan, size, index, predictor) -> ReplicateHandle:
    seed = derive_seed(plan.master_seed, size, index)
    sample_seed, split_seed, predict_seed = _replicate_seeds(seed)
    sample = stratified_sample(ds, size, sample_seed)
    train, test = split(sample, plan.split_ratio, split_seed)
    try:
        preds = predictor(train, test, predict_seed)
        test = _apply_predictions(test, preds)
    except Exception as exc:
        raise PredictorError(size, index, exc) from exc
    return ReplicateHandle(size, index, seed, train, test)


def run_plan(plan: SamplingPlan, ds: AuditDataset, predictor: Predictor,
             n_jobs: int = 1) -> list[ReplicateHandle]:
    """Sample, split and predict every (size, replicate) of ``plan``.

    Handles come back ordered by (size, index) whatever ``n_jobs`` is. The
    predictor is called once per replicate; when some calls fail the others
    still complete and a :class:`PlanError` carries both.
    """
    plan.check_against(ds)
    jobs = [(size, index) for size in plan.sizes for index in range(plan.replicates_per_size)]

    def task(job):
        try:
            return _run_one(ds, plan, job[0], job[1], predictor)
        except PredictorError as exc:
            return exc

    if n_jobs == 1:
        results = [task(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs if n_jobs > 0 else None) as pool:
            results = list(pool.map(task, jobs))
    failures = [r for r in results if isinstance(r, PredictorError)]
    handles = [r for r in results if isinstance(r, ReplicateHandle)]
    if failures:
        raise PlanError(failures, handles)
    return handles


# -- predictor boundary -------------------------------------------------------

def identity_predictor(train: AuditDataset, test: AuditDataset, seed: int) -> list[str]:
    """Predicts every record's true class."""
    return [test.classes[c] for c in test.class_codes.tolist()]


_FEATURES = ("text", "group", "true_class")


def _features(ds: AuditDataset, features: Sequence[str]) -> np.ndarray:
    cols = []
    for name in features:
        if name == "text":
            if ds.texts is None:
                raise ValueError("dataset has no text column")
            cols.append(ds.texts)
        elif name == "group":
            cols.append(np.asarray(ds.groups, dtype=object)[ds.group_codes])
        elif name == "true_class":
            cols.append(np.asarray(ds.classes, dtype=object)[ds.class_codes])
        else:
            raise ValueError(f"unknown feature {name!r}; expected one of {_FEATURES}")
    if len(cols) == 1:
        return cols[0]
    return np.column_stack(cols)


class EstimatorPredictor:
    """Adapt a scikit-learn classifier to the predictor boundary.

    Each replicate gets a fresh clone fitted on the train split; if the
    estimator exposes ``random_state`` it is set to the replicate seed.

    Parameters
    ----------
    estimator : classifier with ``fit`` / ``predict``
    features : column names passed as ``X``; ``("text",)`` gives a 1-D array
        of strings suited to a vectorizer pipeline.
    """

    def __init__(self, estimator, features: Sequence[str] = ("text",)):
        self.estimator = estimator
        self.features = tuple(features)

    def __call__(self, train: AuditDataset, test: AuditDataset, seed: int):
        est = clone(self.estimator)
        if "random_state" in est.get_params():
            est.set_params(random_state=seed % 2**32)
        y_train = np.asarray(train.classes, dtype=object)[train.class_codes]
        est.fit(_features(train, self.features), y_train)
        return est.predict(_features(test, self.features)).tolist()


class CommandPredictor:
    """Run an external command per replicate.

    The train and test splits are written as canonical JSONL into a fresh
    working directory and ``command`` is run with the placeholders
    ``{train}``, ``{test}``, ``{out}``, ``{seed}`` and ``{workdir}``
    substituted. The command must write ``{out}``: a JSON object mapping
    record id to predicted class label.
    """

    def __init__(self, command: str, workdir=None, timeout: float | None = None):
        self.command = command
        self.workdir = workdir
        self.timeout = timeout

    def __call__(self, train: AuditDataset, test: AuditDataset, seed: int):
        base = None if self.workdir is None else str(self.workdir)
        if base is not None:
            os.makedirs(base, exist_ok=True)
        with tempfile.TemporaryDirectory(dir=base, prefix="replicate-") as tmp:
            tmp = Path(tmp)
            paths = {"train": tmp / "train.jsonl", "test": tmp / "test.jsonl",
                     "out": tmp / "predictions.json", "workdir": tmp}
            write_jsonl(train, paths["train"])
            write_jsonl(test.with_pred_codes(np.full(len(test), MISSING)), paths["test"])
            args = [part.format(seed=seed, **{k: str(v) for k, v in paths.items()})
                    for part in shlex.split(self.command)]
            proc = subprocess.run(args, capture_output=True, text=True, timeout=self.timeout)
            if proc.returncode != 0:
                raise RuntimeError(f"command exited with status {proc.returncode}: "
                                   f"{proc.stderr.strip()[-500:]}")
            try:
                preds = json.loads(paths["out"].read_text(encoding="utf-8"))
            except FileNotFoundError:
                raise RuntimeError("command did not write the predictions file") from None
            if not isinstance(preds, dict):
                raise RuntimeError("predictions file must hold a JSON object id -> label")
            return preds
