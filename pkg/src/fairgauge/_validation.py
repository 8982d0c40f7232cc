"""Input validation helpers shared by the public entry points."""

from __future__ import annotations

from fractions import Fraction
from numbers import Integral, Real
from typing import Sequence

MAX_SEED = 2**64


class DatasetError(ValueError):
    """Raised when audit data cannot be loaded or violates its schema."""


def check_label(label, vocabulary: Sequence[str], kind: str) -> int:
    """Return the vocabulary index of ``label`` or raise ``ValueError``."""
    try:
        return vocabulary.index(label)
    except ValueError:
        raise ValueError(
            f"unknown {kind} label {label!r}; expected one of {list(vocabulary)}"
        ) from None


def check_ratio(ratio, name: str = "ratio") -> Fraction:
    """Validate a ratio in the open interval (0, 1) and return it as an exact fraction.

    Floats are converted through their shortest decimal repr so that ``0.7``
    becomes exactly 7/10 rather than its binary approximation.
    """
    if isinstance(ratio, bool) or not isinstance(ratio, (Real, Fraction)):
        raise TypeError(f"{name} must be a real number, got {type(ratio).__name__}")
    frac = Fraction(repr(float(ratio))) if isinstance(ratio, float) else Fraction(ratio)
    if not 0 < frac < 1:
        raise ValueError(f"{name} must lie strictly between 0 and 1, got {ratio}")
    return frac


def check_seed(seed, name: str = "seed") -> int:
    if isinstance(seed, bool) or not isinstance(seed, Integral):
        raise TypeError(f"{name} must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed < MAX_SEED:
        raise ValueError(f"{name} must be a 64-bit unsigned integer, got {seed}")
    return seed


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie strictly between 0 and 1, got {alpha}")
    return alpha
