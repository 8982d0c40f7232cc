import sys
from pathlib import Path

import pytest
from hypothesis import strategies as st

from fairgauge.data import AuditDataset, Record

sys.path.insert(0, str(Path(__file__).parent))


def make(rows, name="fixture"):
    """Dataset from (group, true, pred) triples with ids r0, r1, ..."""
    return AuditDataset.from_records(
        [Record(f"r{i}", g, y, p) for i, (g, y, p) in enumerate(rows)], name=name)


# Cells {(M,a):3,(M,b):1,(F,a):2,(F,b):2}; GP(M,a)=2/4, GP(F,a)=1/4; 6 of 8 correct.
COUNTS_ROWS = [
    ("M", "a", "a"), ("M", "a", "a"), ("M", "a", "b"), ("M", "b", "b"),
    ("F", "a", "a"), ("F", "a", "b"), ("F", "b", "b"), ("F", "b", "b"),
]

# TPR(F,a): 3 true-a women, 2 predicted a. PP(M,a): 3 men predicted a, 2 truly a.
RATES_ROWS = [
    ("M", "a", "a"), ("M", "a", "a"), ("M", "b", "a"), ("M", "b", "b"),
    ("F", "a", "a"), ("F", "a", "a"), ("F", "a", "b"), ("F", "b", "b"),
]


@pytest.fixture
def counts_ds():
    return make(COUNTS_ROWS, "counts")


@pytest.fixture
def rates_ds():
    return make(RATES_ROWS, "rates")


@st.composite
def small_datasets(draw, max_records=20, allow_missing=False):
    """Random datasets of 1..max_records records over 2 groups and 2-3 classes."""
    n = draw(st.integers(1, max_records))
    classes = ["a", "b", "c"][: draw(st.integers(2, 3))]
    pred_choices = classes + ([None] if allow_missing else [])
    rows = draw(st.lists(st.tuples(st.sampled_from(["M", "F"]), st.sampled_from(classes),
                                   st.sampled_from(pred_choices)), min_size=n, max_size=n))
    return AuditDataset.from_records(
        [Record(f"r{i}", g, y, p) for i, (g, y, p) in enumerate(rows)],
        groups=["M", "F"], classes=classes)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
