"""Synthetic populations with closed-form fairness metrics.

A :class:`PopulationSpec` describes a generative law: group ``g`` with
weight ``w[g]``, true class ``y`` with probability ``p(y|g)``, and a
memoryless predictor emitting ``yhat`` with probability ``c_g(yhat|y)``.
Under that law::

    GP(g, y)  = sum_y' p(y'|g) c_g(y|y')
    TPR(g, y) = c_g(y|y)
    PP(g, y)  = p(y|g) c_g(y|y) / GP(g, y)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int, check_seed
from .data import AuditDataset
from .metrics import KINDS, UNDEFINED, MetricKind

__all__ = [
    "SpecError",
    "PopulationSpec",
    "TrueMetrics",
    "true_metrics",
    "generate",
    "surgeon_scenario",
    "ConfusionPredictor",
]

TOL = 1e-12


class SpecError(ValueError):
    """Invalid population spec; the message starts with the offending location."""


@dataclass(frozen=True, eq=False)
class PopulationSpec:
    groups: tuple[str, ...]
    classes: tuple[str, ...]
    group_weights: np.ndarray      # (G,)
    class_priors: np.ndarray       # (G, C): p(y | g)
    confusion: np.ndarray          # (G, C, C): c_g(yhat | y), indexed [g, y, yhat]
    name: str = "population"

    def __post_init__(self):
        for attr in ("group_weights", "class_priors", "confusion"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "classes", tuple(self.classes))
        self.validate()

    def validate(self) -> None:
        G, C = len(self.groups), len(self.classes)
        if G < 1 or C < 1:
            raise SpecError("groups/classes: need at least one of each")
        if len(set(self.groups)) != G or len(set(self.classes)) != C:
            raise SpecError("groups/classes: labels must be unique")
        if self.group_weights.shape != (G,):
            raise SpecError(f"groups: expected {G} weights, got shape {self.group_weights.shape}")
        if self.class_priors.shape != (G, C):
            raise SpecError(f"class_priors: expected shape {(G, C)}, got {self.class_priors.shape}")
        if self.confusion.shape != (G, C, C):
            raise SpecError(f"confusion: expected shape {(G, C, C)}, got {self.confusion.shape}")
        _check_distribution(self.group_weights, "groups")
        for i, g in enumerate(self.groups):
            _check_distribution(self.class_priors[i], f"class_priors.{g}")
            for j, y in enumerate(self.classes):
                _check_distribution(self.confusion[i, j], f"confusion.{g}.{y}")

    # -- JSON ------------------------------------------------------------
    @classmethod
    def from_dict(cls, data: Mapping) -> "PopulationSpec":
        """Parse the JSON form::

            {"groups": {"M": 0.5, "F": 0.5},
             "classes": ["a", "b"],
             "class_priors": {"M": {"a": 0.5, "b": 0.5}, ...},
             "confusion": {"M": {"a": {"a": 0.9, "b": 0.1}, ...}, ...}}
        """
        if not isinstance(data, Mapping):
            raise SpecError("<root>: expected a JSON object")
        for key in ("groups", "classes", "class_priors", "confusion"):
            if key not in data:
                raise SpecError(f"{key}: missing")
        groups_obj = data["groups"]
        if not isinstance(groups_obj, Mapping) or not groups_obj:
            raise SpecError("groups: expected a non-empty object label -> weight")
        groups = [str(g) for g in groups_obj]
        classes = data["classes"]
        if not isinstance(classes, list) or not classes:
            raise SpecError("classes: expected a non-empty list of labels")
        classes = [str(c) for c in classes]
        weights = [_number(groups_obj[g], f"groups.{g}") for g in groups]
        priors = [[_number(_lookup(data["class_priors"], [g, y], "class_priors"),
                           f"class_priors.{g}.{y}") for y in classes] for g in groups]
        confusion = [[[_number(_lookup(data["confusion"], [g, y, z], "confusion"),
                               f"confusion.{g}.{y}.{z}") for z in classes]
                      for y in classes] for g in groups]
        return cls(tuple(groups), tuple(classes), np.array(weights), np.array(priors),
                   np.array(confusion), name=str(data.get("name", "population")))

    @classmethod
    def from_json(cls, path) -> "PopulationSpec":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SpecError(f"<root>: invalid JSON at line {exc.lineno} ({exc.msg})") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        g, c = self.groups, self.classes
        return {
            "name": self.name,
            "groups": {gl: float(self.group_weights[i]) for i, gl in enumerate(g)},
            "classes": list(c),
            "class_priors": {gl: {yl: float(self.class_priors[i, j]) for j, yl in enumerate(c)}
                             for i, gl in enumerate(g)},
            "confusion": {gl: {yl: {zl: float(self.confusion[i, j, k]) for k, zl in enumerate(c)}
                               for j, yl in enumerate(c)} for i, gl in enumerate(g)},
        }

    def class_shares(self, group: str) -> np.ndarray:
        """Share of ``group`` among the members of each class, P(G = group | Y = y)."""
        joint = self.group_weights[:, None] * self.class_priors
        return joint[self.groups.index(group)] / joint.sum(axis=0)

    def class_prevalence(self) -> np.ndarray:
        return self.group_weights @ self.class_priors


def _lookup(obj, path: Sequence[str], root: str):
    where = root
    for key in path:
        if not isinstance(obj, Mapping):
            raise SpecError(f"{where}: expected an object")
        where = f"{where}.{key}"
        if key not in obj:
            raise SpecError(f"{where}: missing")
        obj = obj[key]
    return obj


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SpecError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _check_distribution(p: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise SpecError(f"{where}: probabilities must lie in [0, 1]")
    total = float(p.sum())
    if abs(total - 1.0) > TOL:
        raise SpecError(f"{where}: sums to {total!r}, expected 1")


@dataclass(frozen=True, eq=False)
class TrueMetrics:
    """Exact metric values, arrays of shape ``(G, C)`` with NaN for undefined PP."""

    groups: tuple[str, ...]
    classes: tuple[str, ...]
    gp: np.ndarray
    tpr: np.ndarray
    pp: np.ndarray

    def values(self, kind) -> np.ndarray:
        return {MetricKind.GP: self.gp, MetricKind.TPR: self.tpr, MetricKind.PP: self.pp}[MetricKind(kind)]

    def value(self, kind, g: str, y: str):
        v = float(self.values(kind)[self.groups.index(g), self.classes.index(y)])
        return UNDEFINED if np.isnan(v) else v

    def gaps(self, kind, g: str, g_other: str) -> np.ndarray:
        v = self.values(kind)
        return v[self.groups.index(g)] - v[self.groups.index(g_other)]

    def gap(self, kind, g: str, g_other: str, y: str):
        v = float(self.gaps(kind, g, g_other)[self.classes.index(y)])
        return UNDEFINED if np.isnan(v) else v

    def rows(self, group_pair=None) -> list[dict]:
        out = []
        for kind in KINDS:
            vals = self.values(kind)
            for j, y in enumerate(self.classes):
                row = {"metric": kind.value, "class": y}
                for i, g in enumerate(self.groups):
                    row[f"value_{g}"] = None if np.isnan(vals[i, j]) else float(vals[i, j])
                if group_pair is not None:
                    gp = float(self.gaps(kind, *group_pair)[j])
                    row["gap"] = None if np.isnan(gp) else gp
                out.append(row)
        return out


def true_metrics(spec: PopulationSpec) -> TrueMetrics:
    spec.validate()
    gp = np.einsum("gy,gyz->gz", spec.class_priors, spec.confusion)
    tpr = np.diagonal(spec.confusion, axis1=1, axis2=2).copy()
    with np.errstate(invalid="ignore", divide="ignore"):
        pp = np.where(gp > 0, spec.class_priors * tpr / np.where(gp > 0, gp, 1), np.nan)
    # TPR conditions on the true class, so it is undefined where p(y|g) = 0
    tpr = np.where(spec.class_priors > 0, tpr, np.nan)
    return TrueMetrics(spec.groups, spec.classes, gp, tpr, pp)


def _categorical(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One draw per row of ``probs`` (shape ``(n, K)``)."""
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(len(probs))
    return np.minimum((u[:, None] >= cdf).sum(axis=1), probs.shape[1] - 1)


def _sample_codes(spec: PopulationSpec, n: int, rng: np.random.Generator):
    groups = _categorical(rng, np.broadcast_to(spec.group_weights, (n, len(spec.groups))))
    classes = _categorical(rng, spec.class_priors[groups])
    preds = _categorical(rng, spec.confusion[groups, classes])
    return groups, classes, preds


def generate(spec: PopulationSpec, n: int, seed: int, name: str | None = None) -> AuditDataset:
    """Draw ``n`` i.i.d. records: group, then true class, then predicted class."""
    spec.validate()
    n = check_positive_int(n, "n")
    rng = np.random.default_rng(check_seed(seed))
    groups, classes, preds = _sample_codes(spec, n, rng)
    width = len(str(n - 1))
    ids = np.char.add("s", np.char.zfill(np.arange(n).astype(str), width)).astype(object)
    return AuditDataset(ids, groups, classes, preds, spec.groups, spec.classes,
                        name=name or spec.name, check=False)


def surgeon_scenario() -> PopulationSpec:
    """Two groups, a rare male-dominated class, a balanced common class and the rest.

    The rare class has 0.5% prevalence and a 15% female share; the balanced
    class has 5% prevalence and a 49.5% female share. The confusion rows are
    illustrative: the predictor recovers the rare class less often for
    women and leaks a little of the remainder class into both others.
    """
    classes = ("surgeon", "physician", "other")
    priors = {
        "M": (0.0085, 0.0505, 0.941),
        "F": (0.0015, 0.0495, 0.949),
    }
    confusion = {
        "M": ((0.70, 0.20, 0.10),
              (0.03, 0.80, 0.17),
              (0.002, 0.018, 0.98)),
        "F": ((0.40, 0.40, 0.20),
              (0.005, 0.83, 0.165),
              (0.0003, 0.0197, 0.98)),
    }
    return PopulationSpec(
        groups=("M", "F"),
        classes=classes,
        group_weights=np.array([0.5, 0.5]),
        class_priors=np.array([priors["M"], priors["F"]]),
        confusion=np.array([confusion["M"], confusion["F"]]),
        name="surgeon_scenario",
    )


class ConfusionPredictor(ClassifierMixin, BaseEstimator):
    """Memoryless predictor that draws ``yhat ~ c_g(. | y)`` from a population spec.

    ``X`` is an array of shape ``(n, 2)`` holding (group, true_class) labels,
    which is what :class:`~fairgauge.sampling.EstimatorPredictor` passes with
    ``features=("group", "true_class")``. ``fit`` learns nothing.
    """

    def __init__(self, spec: PopulationSpec | None = None, random_state=None):
        self.spec = spec
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.spec is None:
            raise ValueError("ConfusionPredictor needs a PopulationSpec")
        self.spec_ = self.spec
        self.classes_ = np.asarray(self.spec.classes, dtype=object)
        return self

    def predict(self, X):
        check_is_fitted(self, "spec_")
        X = np.asarray(X, dtype=object)
        if X.ndim != 2 or X.shape[1] != 2:
            raise ValueError(f"expected X of shape (n, 2) with (group, true_class), got {X.shape}")
        g_index = {g: i for i, g in enumerate(self.spec_.groups)}
        y_index = {y: i for i, y in enumerate(self.spec_.classes)}
        try:
            g = np.fromiter((g_index[v] for v in X[:, 0]), dtype=np.int64, count=len(X))
            y = np.fromiter((y_index[v] for v in X[:, 1]), dtype=np.int64, count=len(X))
        except KeyError as exc:
            raise ValueError(f"label {exc.args[0]!r} not in the population spec") from None
        rng = np.random.default_rng(self.random_state)
        codes = _categorical(rng, self.spec_.confusion[g, y])
        return self.classes_[codes]
