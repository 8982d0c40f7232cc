"""Group-conditional fairness metrics, inter-group gaps and support counts.

All estimators work on exact integer counts taken from the dataset's
``[group, true_class, predicted_class]`` confusion cube and divide once at
the end. An empty denominator yields :data:`UNDEFINED` rather than a number.

For a group ``g`` and class ``y``::

    GP  = #{pred=y, G=g}          / #{G=g}
    TPR = #{pred=y, true=y, G=g}  / #{true=y, G=g}
    PP  = #{pred=y, true=y, G=g}  / #{pred=y, G=g}

Records without a prediction are left out of every count.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .data import AuditDataset, warn_missing_predictions

__all__ = [
    "UNDEFINED",
    "is_defined",
    "MetricKind",
    "MetricValue",
    "GapValue",
    "SupportCounts",
    "GapTable",
    "group_parity",
    "true_positive_rate",
    "predictive_parity",
    "metric_value",
    "gap",
    "gap_table",
    "support_counts",
    "accuracy",
    "f1_per_class",
    "GapAuditor",
]


class _Undefined:
    """Marker for a ratio whose denominator is empty."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNDEFINED"

    def __bool__(self) -> bool:
        return False

    def __reduce__(self):
        return "UNDEFINED"


UNDEFINED = _Undefined()


def is_defined(value) -> bool:
    if value is UNDEFINED or value is None:
        return False
    return not (isinstance(value, float) and math.isnan(value))


def _ratio(num: int, den: int):
    return num / den if den > 0 else UNDEFINED


class MetricKind(str, enum.Enum):
    GP = "GP"
    TPR = "TPR"
    PP = "PP"

    def __str__(self) -> str:
        return self.value


KINDS = (MetricKind.GP, MetricKind.TPR, MetricKind.PP)


@dataclass(frozen=True)
class MetricValue:
    kind: MetricKind
    group: str
    cls: str
    numerator: int
    denominator: int

    @property
    def value(self):
        return _ratio(self.numerator, self.denominator)

    @property
    def defined(self) -> bool:
        return self.denominator > 0


@dataclass(frozen=True)
class SupportCounts:
    n_gp: int
    n_tpr: int
    n_pp: int

    @property
    def information_loss(self):
        """Share of GP's support not seen by TPR/PP, ``1 - n_tpr / n_gp``."""
        return UNDEFINED if self.n_gp == 0 else 1 - self.n_tpr / self.n_gp

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.n_gp, self.n_tpr, self.n_pp)


@dataclass(frozen=True)
class GapValue:
    kind: MetricKind
    group_pair: tuple[str, str]
    cls: str
    first: MetricValue
    second: MetricValue
    supports: tuple[int, int]

    @property
    def gap(self):
        if self.first.defined and self.second.defined:
            return self.first.value - self.second.value
        return UNDEFINED

    @property
    def defined(self) -> bool:
        return self.first.defined and self.second.defined


def _cube(ds: AuditDataset) -> np.ndarray:
    warn_missing_predictions(ds)
    return ds.confusion_cube()


def _counts(cube: np.ndarray, kind: MetricKind, g: int, y: int) -> tuple[int, int]:
    hit = int(cube[g, y, y])
    if kind is MetricKind.GP:
        return int(cube[g, :, y].sum()), int(cube[g].sum())
    if kind is MetricKind.TPR:
        return hit, int(cube[g, y, :].sum())
    if kind is MetricKind.PP:
        return hit, int(cube[g, :, y].sum())
    raise ValueError(f"unknown metric kind {kind!r}")


def metric_value(kind, ds: AuditDataset, g: str, y: str) -> MetricValue:
    kind = MetricKind(kind)
    gi, yi = ds.group_index(g), ds.class_index(y)
    num, den = _counts(_cube(ds), kind, gi, yi)
    return MetricValue(kind, g, y, num, den)


def group_parity(ds: AuditDataset, g: str, y: str) -> MetricValue:
    """P(pred = y | G = g)."""
    return metric_value(MetricKind.GP, ds, g, y)


def true_positive_rate(ds: AuditDataset, g: str, y: str) -> MetricValue:
    """P(pred = y | G = g, true = y)."""
    return metric_value(MetricKind.TPR, ds, g, y)


def predictive_parity(ds: AuditDataset, g: str, y: str) -> MetricValue:
    """P(true = y | pred = y, G = g)."""
    return metric_value(MetricKind.PP, ds, g, y)


def support_counts(ds: AuditDataset, g: str, y: str) -> SupportCounts:
    """Individuals entering each estimator's numerator intersection.

    ``n_tpr == n_pp <= n_gp`` holds by construction.
    """
    gi, yi = ds.group_index(g), ds.class_index(y)
    cube = _cube(ds)
    hit = int(cube[gi, yi, yi])
    return SupportCounts(int(cube[gi, :, yi].sum()), hit, hit)


def _support_for(kind: MetricKind, sc: SupportCounts) -> int:
    return sc.n_gp if kind is MetricKind.GP else sc.n_tpr


def gap(kind, ds: AuditDataset, g: str, g_other: str, y: str) -> GapValue:
    """``M(g, y) - M(g_other, y)``; negative values disadvantage ``g``."""
    if g == g_other:
        raise ValueError(f"gap needs two distinct groups, got {g!r} twice")
    kind = MetricKind(kind)
    first = metric_value(kind, ds, g, y)
    second = metric_value(kind, ds, g_other, y)
    supports = (_support_for(kind, support_counts(ds, g, y)),
                _support_for(kind, support_counts(ds, g_other, y)))
    return GapValue(kind, (g, g_other), y, first, second, supports)


def accuracy(ds: AuditDataset) -> float:
    """Fraction of predicted records whose prediction equals the true class."""
    cube = _cube(ds)
    total = int(cube.sum())
    if total == 0:
        raise ValueError("accuracy needs at least one record with a prediction")
    return int(np.trace(cube, axis1=1, axis2=2).sum()) / total


def _f1_from_counts(tp: int, n_pred: int, n_true: int):
    precision = _ratio(tp, n_pred)
    recall = _ratio(tp, n_true)
    if not is_defined(precision) and not is_defined(recall):
        return UNDEFINED
    if tp == 0:
        # one side undefined, the other zero: F1 is zero, not undefined
        if is_defined(precision) and is_defined(recall):
            return UNDEFINED
        return 0.0
    return 2 * tp / (n_pred + n_true)


def f1_per_class(ds: AuditDataset, y: str):
    """One-vs-rest F1 of class ``y`` over all groups."""
    yi = ds.class_index(y)
    cm = _cube(ds).sum(axis=0)
    return _f1_from_counts(int(cm[yi, yi]), int(cm[:, yi].sum()), int(cm[yi, :].sum()))


def f1_all_classes(ds: AuditDataset) -> dict:
    cm = _cube(ds).sum(axis=0)
    return {c: _f1_from_counts(int(cm[i, i]), int(cm[:, i].sum()), int(cm[i, :].sum()))
            for i, c in enumerate(ds.classes)}


class GapTable:
    """Every metric, for both groups of a pair, for every class of one dataset.

    ``numerators`` and ``denominators`` have shape ``(3, 2, n_classes)``
    indexed by (metric kind, pair position, class). ``n_gp`` and ``n_tpr``
    have shape ``(2, n_classes)``.
    """

    def __init__(self, group_pair, classes, numerators, denominators, n_gp, n_tpr):
        self.group_pair = tuple(group_pair)
        self.classes = tuple(classes)
        self.numerators = numerators
        self.denominators = denominators
        self.n_gp = n_gp
        self.n_tpr = n_tpr

    @classmethod
    def from_dataset(cls, ds: AuditDataset, g: str, g_other: str) -> "GapTable":
        if g == g_other:
            raise ValueError(f"gap needs two distinct groups, got {g!r} twice")
        pair = (ds.group_index(g), ds.group_index(g_other))
        cube = _cube(ds)[list(pair)]                      # (2, C, C)
        diag = np.diagonal(cube, axis1=1, axis2=2)        # (2, C)
        pred = cube.sum(axis=1)                           # (2, C)
        true = cube.sum(axis=2)                           # (2, C)
        size = cube.sum(axis=(1, 2))[:, None]             # (2, 1)
        nums = np.stack([pred, diag, diag])
        dens = np.stack([np.broadcast_to(size, pred.shape), true, pred])
        return cls((g, g_other), ds.classes, nums.astype(np.int64), dens.astype(np.int64),
                   pred.astype(np.int64), diag.astype(np.int64))

    def _k(self, kind) -> int:
        return KINDS.index(MetricKind(kind))

    def values(self, kind) -> np.ndarray:
        """Metric values of shape ``(2, n_classes)``, NaN where undefined."""
        k = self._k(kind)
        den = self.denominators[k]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(den > 0, self.numerators[k] / np.where(den > 0, den, 1), np.nan)

    def gaps(self, kind) -> np.ndarray:
        """Gap per class, NaN where either side is undefined."""
        v = self.values(kind)
        return v[0] - v[1]

    def undefined_counts(self) -> dict:
        return {kind.value: int(np.isnan(self.gaps(kind)).sum()) for kind in KINDS}

    def gap_value(self, kind, cls: str) -> GapValue:
        kind = MetricKind(kind)
        k, j = self._k(kind), self.classes.index(cls)
        sides = [MetricValue(kind, self.group_pair[s], cls, int(self.numerators[k, s, j]),
                             int(self.denominators[k, s, j])) for s in (0, 1)]
        support = self.n_gp if kind is MetricKind.GP else self.n_tpr
        return GapValue(kind, self.group_pair, cls, sides[0], sides[1],
                        (int(support[0, j]), int(support[1, j])))

    def support(self, side: int, cls: str) -> SupportCounts:
        j = self.classes.index(cls)
        return SupportCounts(int(self.n_gp[side, j]), int(self.n_tpr[side, j]), int(self.n_tpr[side, j]))

    def rows(self) -> list[dict]:
        out = []
        g, h = self.group_pair
        for kind in KINDS:
            for cls in self.classes:
                gv = self.gap_value(kind, cls)
                out.append({
                    "metric": kind.value,
                    "class": cls,
                    f"value_{g}": gv.first.value if gv.first.defined else None,
                    f"value_{h}": gv.second.value if gv.second.defined else None,
                    "gap": gv.gap if gv.defined else None,
                    "defined": gv.defined,
                    f"numerator_{g}": gv.first.numerator,
                    f"denominator_{g}": gv.first.denominator,
                    f"numerator_{h}": gv.second.numerator,
                    f"denominator_{h}": gv.second.denominator,
                    f"support_{g}": gv.supports[0],
                    f"support_{h}": gv.supports[1],
                })
        return out

    def to_dict(self) -> dict:
        return {"group_pair": list(self.group_pair), "classes": list(self.classes), "cells": self.rows()}


def gap_table(ds: AuditDataset, g: str, g_other: str) -> GapTable:
    return GapTable.from_dataset(ds, g, g_other)


class GapAuditor(BaseEstimator):
    """Estimator-style wrapper computing a full audit of one predicted dataset.

    Parameters
    ----------
    group_pair : tuple of str, optional
        Ordered ``(g, g_other)``; defaults to the first two groups.

    Attributes
    ----------
    gap_table_ : GapTable
    accuracy_ : float
    f1_ : dict mapping class to F1 or UNDEFINED
    """

    def __init__(self, group_pair=None):
        self.group_pair = group_pair

    def fit(self, ds: AuditDataset, y=None):
        pair = self.group_pair or ds.groups[:2]
        if len(pair) != 2:
            raise ValueError("group_pair must name exactly two groups")
        self.group_pair_ = tuple(pair)
        self.gap_table_ = gap_table(ds, *self.group_pair_)
        self.accuracy_ = accuracy(ds)
        self.f1_ = f1_all_classes(ds)
        self.classes_ = ds.classes
        return self
