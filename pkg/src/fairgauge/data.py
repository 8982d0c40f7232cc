"""Record schema, dataset ingestion and validation.

An :class:`AuditDataset` stores its records column-wise as integer codes into
ordered group and class vocabularies. Vocabularies follow first-appearance
order so every downstream table is deterministically ordered.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._validation import DatasetError, check_label

__all__ = [
    "MISSING",
    "DEFAULT_SCHEMA",
    "Record",
    "AuditDataset",
    "Issue",
    "ValidationReport",
    "DatasetError",
    "MissingColumnError",
    "load_dataset",
    "write_jsonl",
    "validate",
    "attach_predictions",
]

#: Code used for a record without a predicted class.
MISSING = -1

ROLES = ("id", "group", "true_class", "predicted_class", "text")
DEFAULT_SCHEMA = {role: role for role in ROLES}
MANDATORY_ROLES = ("group", "true_class")


class MissingColumnError(DatasetError):
    def __init__(self, column: str, role: str):
        super().__init__(f"missing column {column!r} (mapped to {role})")
        self.column = column
        self.role = role


@dataclass(frozen=True)
class Record:
    id: str
    group: str
    true_class: str
    predicted_class: str | None = None
    text: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "group": self.group,
            "true_class": self.true_class,
            "predicted_class": self.predicted_class,
            "text": self.text,
        }


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class AuditDataset:
    """Immutable, validated collection of records.

    Parameters
    ----------
    ids : sequence of str
    group_codes, class_codes : int arrays indexing ``groups`` / ``classes``
    pred_codes : int array, ``MISSING`` where no prediction exists
    groups, classes : ordered label vocabularies
    texts : optional object array of str or None
    name : str
    """

    __slots__ = ("_ids", "_group_codes", "_class_codes", "_pred_codes", "_texts",
                 "_groups", "_classes", "_name", "_cube", "_records", "_strata")

    def __init__(self, ids, group_codes, class_codes, pred_codes, groups, classes,
                 texts=None, name: str = "dataset", *, check: bool = True):
        self._ids = _readonly(np.asarray(ids, dtype=object))
        self._group_codes = _readonly(np.asarray(group_codes, dtype=np.int64))
        self._class_codes = _readonly(np.asarray(class_codes, dtype=np.int64))
        self._pred_codes = _readonly(np.asarray(pred_codes, dtype=np.int64))
        self._texts = None if texts is None else _readonly(np.asarray(texts, dtype=object))
        self._groups = tuple(groups)
        self._classes = tuple(classes)
        self._name = str(name)
        self._cube = None
        self._records = None
        self._strata = None
        if check:
            self._check()

    def _check(self) -> None:
        n = len(self._ids)
        for arr, what in ((self._group_codes, "group"), (self._class_codes, "class"),
                          (self._pred_codes, "prediction")):
            if arr.shape != (n,):
                raise DatasetError(f"{what} codes have shape {arr.shape}, expected ({n},)")
        if self._texts is not None and self._texts.shape != (n,):
            raise DatasetError("texts length does not match record count")
        if not self._groups or not self._classes:
            raise DatasetError("group and class vocabularies must be non-empty")
        if len(set(self._groups)) != len(self._groups) or len(set(self._classes)) != len(self._classes):
            raise DatasetError("vocabularies must not contain duplicates")
        if n and (self._group_codes.min() < 0 or self._group_codes.max() >= len(self._groups)):
            raise DatasetError("group code outside vocabulary")
        if n and (self._class_codes.min() < 0 or self._class_codes.max() >= len(self._classes)):
            raise DatasetError("class code outside vocabulary")
        if n and (self._pred_codes.min() < MISSING or self._pred_codes.max() >= len(self._classes)):
            raise DatasetError("predicted class code outside vocabulary")
        if len(set(self._ids.tolist())) != n:
            seen = set()
            for rid in self._ids:
                if rid in seen:
                    raise DatasetError(f"duplicate id {rid!r}")
                seen.add(rid)

    @classmethod
    def from_records(cls, records: Iterable[Record | Mapping], name: str = "dataset",
                     groups: Sequence[str] | None = None,
                     classes: Sequence[str] | None = None) -> "AuditDataset":
        """Build a dataset from records, collecting vocabularies in first-appearance order.

        Explicit ``groups`` / ``classes`` fix the vocabularies; labels outside
        them raise :class:`DatasetError`.
        """
        fixed_groups = groups is not None
        fixed_classes = classes is not None
        group_index = {g: i for i, g in enumerate(groups or ())}
        class_index = {c: i for i, c in enumerate(classes or ())}

        def code(index, label, fixed, kind, rid):
            if label not in index:
                if fixed:
                    raise DatasetError(f"record {rid!r}: {kind} label {label!r} not in vocabulary")
                index[label] = len(index)
            return index[label]

        ids, gc, cc, pc, texts = [], [], [], [], []
        for rec in records:
            if isinstance(rec, Mapping):
                rec = Record(**rec)
            if not rec.group or not rec.true_class:
                raise DatasetError(f"record {rec.id!r}: group and true_class must be non-empty")
            ids.append(rec.id)
            gc.append(code(group_index, rec.group, fixed_groups, "group", rec.id))
            cc.append(code(class_index, rec.true_class, fixed_classes, "class", rec.id))
            if rec.predicted_class is None:
                pc.append(MISSING)
            else:
                pc.append(code(class_index, rec.predicted_class, fixed_classes, "class", rec.id))
            texts.append(rec.text)
        has_text = any(t is not None for t in texts)
        return cls(ids, gc, cc, pc, list(group_index), list(class_index),
                   texts=texts if has_text else None, name=name)

    # -- accessors -------------------------------------------------------
    @property
    def name(self) -> str:
        return self._name

    @property
    def groups(self) -> tuple[str, ...]:
        return self._groups

    @property
    def classes(self) -> tuple[str, ...]:
        return self._classes

    @property
    def ids(self) -> np.ndarray:
        return self._ids

    @property
    def group_codes(self) -> np.ndarray:
        return self._group_codes

    @property
    def class_codes(self) -> np.ndarray:
        return self._class_codes

    @property
    def pred_codes(self) -> np.ndarray:
        return self._pred_codes

    @property
    def texts(self) -> np.ndarray | None:
        return self._texts

    @property
    def has_predictions(self) -> bool:
        return bool(np.any(self._pred_codes != MISSING))

    @property
    def n_missing_predictions(self) -> int:
        return int(np.count_nonzero(self._pred_codes == MISSING))

    def __len__(self) -> int:
        return len(self._ids)

    def __repr__(self) -> str:
        return (f"AuditDataset(name={self._name!r}, n={len(self)}, "
                f"groups={list(self._groups)}, classes={len(self._classes)})")

    @property
    def records(self) -> tuple[Record, ...]:
        if self._records is None:
            g, c = self._groups, self._classes
            texts = self._texts if self._texts is not None else [None] * len(self)
            self._records = tuple(
                Record(str(i), g[gi], c[ci], None if pi == MISSING else c[pi], t)
                for i, gi, ci, pi, t in zip(self._ids, self._group_codes.tolist(),
                                            self._class_codes.tolist(),
                                            self._pred_codes.tolist(), texts)
            )
        return self._records

    def __iter__(self):
        return iter(self.records)

    def group_index(self, label: str) -> int:
        return check_label(label, self._groups, "group")

    def class_index(self, label: str) -> int:
        return check_label(label, self._classes, "class")

    def confusion_cube(self) -> np.ndarray:
        """Counts ``[group, true_class, predicted_class]`` over predicted records."""
        if self._cube is None:
            ng, nc = len(self._groups), len(self._classes)
            mask = self._pred_codes != MISSING
            flat = (self._group_codes[mask] * nc + self._class_codes[mask]) * nc + self._pred_codes[mask]
            cube = np.bincount(flat, minlength=ng * nc * nc).reshape(ng, nc, nc)
            self._cube = _readonly(cube)
        return self._cube

    def strata(self) -> tuple[np.ndarray, list[np.ndarray]]:
        """Per-cell record counts and member indices, cells ordered group-major."""
        if self._strata is None:
            nc = len(self._classes)
            cells = self._group_codes * nc + self._class_codes
            n_cells = len(self._groups) * nc
            order = np.argsort(cells, kind="stable")
            counts = np.bincount(cells, minlength=n_cells)
            bounds = np.concatenate([[0], np.cumsum(counts)])
            members = [_readonly(order[bounds[k]:bounds[k + 1]]) for k in range(n_cells)]
            self._strata = (_readonly(counts), members)
        return self._strata

    def cell_counts(self) -> np.ndarray:
        """Record counts per ``[group, true_class]`` regardless of predictions."""
        nc = len(self._classes)
        flat = self._group_codes * nc + self._class_codes
        return np.bincount(flat, minlength=len(self._groups) * nc).reshape(len(self._groups), nc)

    # -- derivation ------------------------------------------------------
    def subset(self, indices, name: str | None = None) -> "AuditDataset":
        """Dataset restricted to ``indices`` (in the given order); vocabularies are kept."""
        idx = np.asarray(indices, dtype=np.int64)
        return AuditDataset(
            self._ids[idx], self._group_codes[idx], self._class_codes[idx], self._pred_codes[idx],
            self._groups, self._classes,
            texts=None if self._texts is None else self._texts[idx],
            name=self._name if name is None else name, check=False,
        )

    def with_pred_codes(self, pred_codes) -> "AuditDataset":
        pred_codes = np.asarray(pred_codes, dtype=np.int64)
        if pred_codes.shape != self._pred_codes.shape:
            raise ValueError("prediction array length does not match dataset")
        if len(pred_codes) and (pred_codes.min() < MISSING or pred_codes.max() >= len(self._classes)):
            raise ValueError("predicted class code outside vocabulary")
        return AuditDataset(self._ids, self._group_codes, self._class_codes, pred_codes,
                            self._groups, self._classes, texts=self._texts,
                            name=self._name, check=False)

    def with_texts(self, texts) -> "AuditDataset":
        return AuditDataset(self._ids, self._group_codes, self._class_codes, self._pred_codes,
                            self._groups, self._classes, texts=texts, name=self._name,
                            check=False)

    def encode_classes(self, labels) -> np.ndarray:
        index = {c: i for i, c in enumerate(self._classes)}
        out = np.empty(len(labels), dtype=np.int64)
        for k, label in enumerate(labels):
            try:
                out[k] = index[label]
            except KeyError:
                raise ValueError(f"unknown class label {label!r}") from None
        return out


# -- ingestion -------------------------------------------------------------

def _resolve_schema(schema: Mapping[str, str] | None) -> dict:
    resolved = dict(DEFAULT_SCHEMA)
    if schema:
        unknown = set(schema) - set(ROLES)
        if unknown:
            raise DatasetError(f"unknown schema roles {sorted(unknown)}; expected {list(ROLES)}")
        resolved.update(schema)
    return resolved


def _clean(value) -> str | None:
    if value is None:
        return None
    value = str(value)
    return value if value.strip() else None


def _iter_rows(path: Path, fmt: str):
    """Yield ``(row_number, mapping, columns)``; ``columns`` is the CSV header or row keys."""
    if fmt == "csv":
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames
            if header is None:
                return
            for i, row in enumerate(reader, start=2):
                yield i, row, header
    elif fmt == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for i, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DatasetError(f"{path}:{i}: invalid JSON ({exc.msg})") from None
                if not isinstance(row, dict):
                    raise DatasetError(f"{path}:{i}: expected a JSON object")
                yield i, row, row.keys()
    else:
        raise DatasetError(f"unsupported format {fmt!r}; expected 'csv' or 'jsonl'")


def load_dataset(path, format: str | None = None, schema: Mapping[str, str] | None = None,
                 name: str | None = None) -> AuditDataset:
    """Read a CSV or JSONL file into an :class:`AuditDataset`.

    ``schema`` maps the roles ``id``, ``group``, ``true_class``,
    ``predicted_class`` and ``text`` to column names; unspecified roles use
    the canonical names. ``group`` and ``true_class`` columns are mandatory;
    a missing ``id`` column yields row-number ids.
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    schema = _resolve_schema(schema)
    try:
        rows = list(_iter_rows(path, format))
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise DatasetError(f"{path} is not valid UTF-8") from exc
    except csv.Error as exc:
        raise DatasetError(f"{path}: malformed CSV ({exc})") from exc
    if not rows:
        raise DatasetError(f"{path}: empty dataset")

    if format == "csv":
        columns = set(rows[0][2])
    else:
        columns = set().union(*(row.keys() for _, row, _ in rows))
    for role in MANDATORY_ROLES:
        if schema[role] not in columns:
            raise MissingColumnError(schema[role], role)

    records = []
    for lineno, row, _ in rows:
        values = {role: _clean(row.get(col)) for role, col in schema.items()}
        for role in MANDATORY_ROLES:
            if values[role] is None:
                raise DatasetError(
                    f"{path}: row {lineno} (id {values['id']!r}) has no value for "
                    f"{role} column {schema[role]!r}")
        rid = values["id"] if values["id"] is not None else f"row-{lineno}"
        text = row.get(schema["text"])
        records.append(Record(rid, values["group"], values["true_class"],
                              values["predicted_class"], None if text is None else str(text)))
    return AuditDataset.from_records(records, name=name or path.stem)


def write_jsonl(ds: AuditDataset, path) -> None:
    """Write the canonical serialization: keys id, group, true_class, predicted_class, text."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for rec in ds.records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=False) + "\n")


# -- validation --------------------------------------------------------------

@dataclass(frozen=True)
class Issue:
    record_id: str | None
    problem: str
    severity: str = "warning"

    def to_dict(self) -> dict:
        return {"record_id": self.record_id, "problem": self.problem, "severity": self.severity}


@dataclass(frozen=True)
class ValidationReport:
    record_count: int
    cell_counts: dict = field(default_factory=dict)
    issues: tuple = ()

    @property
    def ok(self) -> bool:
        return not any(i.severity == "error" for i in self.issues)

    def to_dict(self) -> dict:
        return {
            "record_count": self.record_count,
            "cell_counts": [{"group": g, "class": c, "count": n} for (g, c), n in self.cell_counts.items()],
            "issues": [i.to_dict() for i in self.issues],
        }


def validate(ds: AuditDataset) -> ValidationReport:
    """Tally (group, class) cells and report problems without raising."""
    counts = ds.cell_counts()
    cells = {(g, c): int(counts[i, j])
             for i, g in enumerate(ds.groups) for j, c in enumerate(ds.classes)}
    issues = []
    if len(ds.groups) < 2:
        issues.append(Issue(None, f"need at least 2 groups, found {len(ds.groups)}", "error"))
    if len(ds.classes) < 2:
        issues.append(Issue(None, f"need at least 2 classes, found {len(ds.classes)}", "error"))
    for (g, c), n in cells.items():
        if n == 0:
            issues.append(Issue(None, f"empty cell: no records with group={g!r} and true_class={c!r}"))
    missing = np.flatnonzero(ds.pred_codes == MISSING)
    for k in missing.tolist():
        issues.append(Issue(str(ds.ids[k]), "missing predicted_class"))
    return ValidationReport(len(ds), cells, tuple(issues))


def attach_predictions(ds: AuditDataset, preds: Mapping[str, str]) -> AuditDataset:
    """Return a copy of ``ds`` with ``predicted_class`` set for the ids in ``preds``."""
    position = {rid: k for k, rid in enumerate(ds.ids.tolist())}
    class_index = {c: i for i, c in enumerate(ds.classes)}
    codes = ds.pred_codes.copy()
    for rid, label in preds.items():
        if rid not in position:
            raise KeyError(f"unknown record id {rid!r}")
        if label not in class_index:
            raise ValueError(f"predicted label {label!r} is not in the class vocabulary")
        codes[position[rid]] = class_index[label]
    return ds.with_pred_codes(codes)


def warn_missing_predictions(ds: AuditDataset) -> None:
    n = ds.n_missing_predictions
    if n:
        warnings.warn(f"{n} record(s) without predicted_class excluded from metric denominators",
                      stacklevel=3)
