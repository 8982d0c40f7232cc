"""Gender-indicator neutralization for text corpora.

Explicit gender indicators are rewritten to a single target gender and
every first name found in a lexicon becomes one neutral name. Matching is
on whole ``\\w+`` tokens, so "his" inside "history" is left alone.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import AuditDataset

__all__ = [
    "INDICATORS",
    "default_indicator_map",
    "load_lexicon",
    "load_indicator_map",
    "bundled_lexicon",
    "DebiasConfig",
    "DebiasReport",
    "neutralize",
    "neutralize_dataset",
    "GenderNeutralizer",
]

INDICATORS = ("he", "she", "her", "his", "him", "hers", "himself", "herself",
              "mr", "mrs", "ms", "miss")

_TOKEN = re.compile(r"\w+")


def default_indicator_map(target: str, her_as: str = "possessive") -> dict[str, str]:
    """Indicator rewrites toward ``target`` ("M" or "F").

    ``her_as`` picks the masculine form for the ambiguous "her":
    ``"possessive"`` gives "his", ``"objective"`` gives "him".
    """
    if target == "M":
        if her_as not in ("possessive", "objective"):
            raise ValueError(f"her_as must be 'possessive' or 'objective', got {her_as!r}")
        return {"she": "he", "her": "his" if her_as == "possessive" else "him", "hers": "his",
                "herself": "himself", "mrs": "mr", "ms": "mr", "miss": "mr"}
    if target == "F":
        return {"he": "she", "his": "her", "him": "her", "himself": "herself", "mr": "mrs"}
    raise ValueError(f"no default indicator map for target {target!r}; pass indicator_map")


def _read_lines(text: str) -> list[str]:
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(line)
    return out


def load_lexicon(path) -> frozenset[str]:
    """Names from a UTF-8 file, one per line; ``#`` starts a comment."""
    return frozenset(_read_lines(Path(path).read_text(encoding="utf-8")))


def bundled_lexicon() -> frozenset[str]:
    text = resources.files("fairgauge").joinpath("data/names.txt").read_text(encoding="utf-8")
    return frozenset(_read_lines(text))


def load_indicator_map(path) -> dict[str, str]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict) or not all(isinstance(k, str) and isinstance(v, str)
                                             for k, v in data.items()):
        raise ValueError(f"{path}: indicator map must be a JSON object of string -> string")
    return data


@dataclass(frozen=True)
class DebiasConfig:
    target_gender: str = "M"
    indicator_map: Mapping[str, str] | None = None
    name_lexicon: frozenset = field(default_factory=frozenset)
    neutral_name: str = "Camille"
    her_as: str = "possessive"
    case_policy: str = "preserve_capitalization"

    def __post_init__(self):
        imap = self.indicator_map
        if imap is None:
            imap = default_indicator_map(self.target_gender, self.her_as)
        imap = dict(imap)
        for key, value in imap.items():
            if key != key.lower() or not _TOKEN.fullmatch(key):
                raise ValueError(f"indicator key {key!r} must be a single lowercase token")
            if not _TOKEN.fullmatch(value):
                raise ValueError(f"indicator value {value!r} must be a single token")
        chained = sorted(v for v in imap.values() if v.lower() in imap and imap[v.lower()] != v.lower())
        if chained:
            raise ValueError(f"indicator values {chained} are themselves rewritten; the map would not be idempotent")
        if not self.neutral_name or not _TOKEN.fullmatch(self.neutral_name):
            raise ValueError("neutral_name must be a single non-empty token")
        if self.case_policy != "preserve_capitalization":
            raise ValueError(f"unsupported case_policy {self.case_policy!r}")
        object.__setattr__(self, "indicator_map", imap)
        object.__setattr__(self, "name_lexicon", frozenset(n.lower() for n in self.name_lexicon))

    @property
    def off_target(self) -> frozenset[str]:
        """Indicators that must not survive a pass."""
        return frozenset(k for k, v in self.indicator_map.items() if k != v.lower())


@dataclass
class DebiasReport:
    replaced_indicator_count: int = 0
    replaced_name_count: int = 0
    tallies: Counter = field(default_factory=Counter)
    missing_text: list = field(default_factory=list)

    def merge(self, other: "DebiasReport") -> None:
        self.replaced_indicator_count += other.replaced_indicator_count
        self.replaced_name_count += other.replaced_name_count
        self.tallies.update(other.tallies)
        self.missing_text.extend(other.missing_text)

    def to_dict(self) -> dict:
        return {"replaced_indicator_count": self.replaced_indicator_count,
                "replaced_name_count": self.replaced_name_count,
                "tallies": dict(sorted(self.tallies.items())),
                "missing_text": list(self.missing_text)}


def _match_case(source: str, word: str) -> str:
    if len(source) > 1 and source.isupper():
        return word.upper()
    if source[0].isupper():
        return word[0].upper() + word[1:]
    return word


def neutralize(text: str, config: DebiasConfig) -> tuple[str, DebiasReport]:
    """Rewrite indicators and lexicon names in ``text``; everything else is kept verbatim.

    Names only match capitalized tokens, so "will" or "may" in running text
    survive even when "Will" and "May" are in the lexicon.
    """
    report = DebiasReport()
    imap = config.indicator_map
    names = config.name_lexicon
    neutral_lower = config.neutral_name.lower()

    def repl(m: re.Match) -> str:
        token = m.group(0)
        low = token.lower()
        if low in imap:
            new = _match_case(token, imap[low])
            if new != token:
                report.replaced_indicator_count += 1
                report.tallies[low] += 1
            return new
        if low in names and low != neutral_lower and token[0].isupper():
            report.replaced_name_count += 1
            report.tallies[low] += 1
            return _match_case(token, config.neutral_name)
        return token

    return _TOKEN.sub(repl, text), report


def neutralize_dataset(ds: AuditDataset, config: DebiasConfig) -> tuple[AuditDataset, DebiasReport]:
    """Apply :func:`neutralize` to every record's text; ids and labels are untouched.

    Records without text are passed through and listed in ``missing_text``.
    """
    total = DebiasReport()
    texts = ds.texts if ds.texts is not None else np.full(len(ds), None, dtype=object)
    out = np.empty(len(ds), dtype=object)
    for k, (rid, text) in enumerate(zip(ds.ids.tolist(), texts)):
        if text is None:
            total.missing_text.append(rid)
            out[k] = None
            continue
        out[k], rep = neutralize(text, config)
        total.merge(rep)
    return ds.with_texts(out if ds.texts is not None else None), total


class GenderNeutralizer(TransformerMixin, BaseEstimator):
    """Transformer form of :func:`neutralize` for use in text pipelines.

    Parameters
    ----------
    target_gender : {"M", "F"} or any label when ``indicator_map`` is given
    neutral_name : str, default "Camille"
    lexicon : iterable of names, path to a lexicon file, or None for the bundled list
    indicator_map : mapping, optional
    her_as : {"possessive", "objective"}
    """

    def __init__(self, target_gender="M", neutral_name="Camille", lexicon=None,
                 indicator_map=None, her_as="possessive"):
        self.target_gender = target_gender
        self.neutral_name = neutral_name
        self.lexicon = lexicon
        self.indicator_map = indicator_map
        self.her_as = her_as

    def fit(self, X=None, y=None):
        if self.lexicon is None:
            names = bundled_lexicon()
        elif isinstance(self.lexicon, (str, Path)):
            names = load_lexicon(self.lexicon)
        else:
            names = frozenset(self.lexicon)
        self.config_ = DebiasConfig(self.target_gender, self.indicator_map, names,
                                    self.neutral_name, self.her_as)
        return self

    def transform(self, X: Iterable[str]) -> list[str]:
        check_is_fitted(self, "config_")
        return [neutralize(str(x), self.config_)[0] for x in X]
