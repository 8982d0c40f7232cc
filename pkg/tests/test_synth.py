import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import enumerate_law
from fairgauge.metrics import UNDEFINED, accuracy, gap_table, support_counts
from fairgauge.synth import (
    ConfusionPredictor,
    PopulationSpec,
    SpecError,
    generate,
    surgeon_scenario,
    true_metrics,
)


def two_group_spec():
    return PopulationSpec(
        groups=("M", "F"), classes=("y1", "y2"),
        group_weights=[0.5, 0.5],
        class_priors=[[0.5, 0.5], [0.5, 0.5]],
        confusion=[[[0.9, 0.1], [0.1, 0.9]],
                   [[0.7, 0.3], [0.1, 0.9]]],
    )


def test_two_group_closed_forms():
    tm = true_metrics(two_group_spec())
    assert tm.gap("TPR", "M", "F", "y1") == pytest.approx(0.2, abs=1e-15)
    assert tm.value("GP", "M", "y1") == pytest.approx(0.5, abs=1e-15)
    assert tm.value("GP", "F", "y1") == pytest.approx(0.4, abs=1e-15)
    assert tm.gap("GP", "M", "F", "y1") == pytest.approx(0.1, abs=1e-15)
    # values frozen from brute-force enumeration of the joint law
    assert tm.value("PP", "M", "y1") == pytest.approx(0.9, abs=1e-15)
    assert tm.value("PP", "F", "y1") == pytest.approx(0.875, abs=1e-15)
    assert tm.value("PP", "F", "y2") == pytest.approx(0.75, abs=1e-15)


def test_symmetric_spec_has_zero_gaps():
    spec = PopulationSpec(("A", "B"), ("x", "y", "z"), [0.3, 0.7],
                          [[0.2, 0.3, 0.5]] * 2,
                          [[[0.6, 0.3, 0.1], [0.2, 0.7, 0.1], [0.0, 0.1, 0.9]]] * 2)
    tm = true_metrics(spec)
    for kind in ("GP", "TPR", "PP"):
        assert np.all(tm.gaps(kind, "A", "B") == 0)


def test_identity_confusion():
    priors = np.array([[0.2, 0.8, 0.0], [0.5, 0.25, 0.25]])
    spec = PopulationSpec(("M", "F"), ("a", "b", "c"), [0.5, 0.5], priors, [np.eye(3)] * 2)
    tm = true_metrics(spec)
    assert np.array_equal(tm.gp, priors)
    populated = priors > 0
    assert np.all(tm.tpr[populated] == 1) and np.all(tm.pp[populated] == 1)
    assert tm.value("PP", "M", "c") is UNDEFINED
    assert tm.value("TPR", "M", "c") is UNDEFINED


def _random_spec(draw, G, C):
    def dist(k, low=0):
        w = np.array(draw(st.lists(st.integers(low, 5), min_size=k, max_size=k).filter(any)), float)
        return w / w.sum()
    # every group gets positive weight; the joint-law oracle cannot condition on an empty group
    return PopulationSpec(tuple(f"g{i}" for i in range(G)), tuple(f"c{j}" for j in range(C)),
                          dist(G, low=1), [dist(C) for _ in range(G)],
                          [[dist(C) for _ in range(C)] for _ in range(G)])


@st.composite
def specs(draw):
    return _random_spec(draw, draw(st.integers(1, 3)), draw(st.integers(1, 4)))


@given(specs())
@settings(max_examples=150, deadline=None)
def test_closed_forms_match_enumeration(spec):
    tm = true_metrics(spec)
    law = enumerate_law(spec.group_weights, spec.class_priors, spec.confusion)
    for kind, arr in (("GP", tm.gp), ("TPR", tm.tpr), ("PP", tm.pp)):
        assert np.array_equal(np.isnan(arr), np.isnan(law[kind]))
        assert np.allclose(arr, law[kind], atol=1e-12, equal_nan=True)
    assert np.allclose(tm.gp.sum(axis=1), 1.0, atol=1e-12)
    for arr in (tm.gp, tm.tpr, tm.pp):
        finite = arr[~np.isnan(arr)]
        assert np.all((finite >= 0) & (finite <= 1 + 1e-12))
    if len(spec.groups) >= 2:
        a, b = spec.groups[:2]
        assert np.allclose(tm.gaps("GP", a, b), -tm.gaps("GP", b, a), equal_nan=True)


def test_generate_converges_to_truth():
    spec = two_group_spec()
    ds = generate(spec, 100_000, seed=17)
    table = gap_table(ds, "M", "F")
    assert abs(table.values("GP")[0, 0] - 0.5) < 0.01
    tm = true_metrics(spec)
    for kind, truth in (("GP", tm.gp), ("TPR", tm.tpr), ("PP", tm.pp)):
        est = table.values(kind)
        assert np.nanmax(np.abs(est - truth)) < 0.02


def test_generate_determinism_and_ids():
    spec = two_group_spec()
    a, b = generate(spec, 500, seed=3), generate(spec, 500, seed=3)
    assert a.records == b.records
    assert generate(spec, 500, seed=4).records != a.records
    assert a.ids[0] == "s000" and a.ids[-1] == "s499"
    assert a.texts is None


def test_generate_degenerate_spec():
    spec = PopulationSpec(("M",), ("a",), [1.0], [[1.0]], [[[1.0]]])
    ds = generate(spec, 50, seed=0)
    assert {(r.group, r.true_class, r.predicted_class) for r in ds} == {("M", "a", "a")}
    assert accuracy(ds) == 1.0


def test_generate_errors():
    with pytest.raises(ValueError):
        generate(two_group_spec(), 0, seed=1)


def test_support_ordering_on_generated_data():
    ds = generate(surgeon_scenario(), 20_000, seed=8)
    for g in ds.groups:
        for y in ds.classes:
            sc = support_counts(ds, g, y)
            assert sc.n_tpr == sc.n_pp <= sc.n_gp


def test_surgeon_scenario_targets():
    spec = surgeon_scenario()
    surgeon, physician = spec.classes.index("surgeon"), spec.classes.index("physician")
    shares = spec.class_shares("F")
    assert shares[surgeon] == pytest.approx(0.15, abs=1e-12)
    assert shares[physician] == pytest.approx(0.495, abs=1e-12)
    assert spec.class_prevalence()[surgeon] == pytest.approx(0.005, abs=1e-12)
    spec.validate()


# -- spec files ---------------------------------------------------------------------

def test_json_round_trip(tmp_path):
    spec = surgeon_scenario()
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec.to_dict()), encoding="utf-8")
    back = PopulationSpec.from_json(path)
    assert back.groups == spec.groups and back.classes == spec.classes
    assert np.array_equal(back.confusion, spec.confusion)
    assert np.array_equal(back.class_priors, spec.class_priors)


@pytest.mark.parametrize("mutate, where", [
    (lambda d: d["confusion"]["F"]["surgeon"].update(surgeon=0.5), "confusion.F.surgeon"),
    (lambda d: d["class_priors"]["M"].pop("other"), "class_priors.M.other: missing"),
    (lambda d: d["groups"].update(M="heavy"), "groups.M: expected a number"),
    (lambda d: d["class_priors"]["F"].update(surgeon=-0.1, other=1.0485), "class_priors.F"),
    (lambda d: d.pop("confusion"), "confusion: missing"),
])
def test_invalid_spec_locations(mutate, where):
    data = surgeon_scenario().to_dict()
    mutate(data)
    with pytest.raises(SpecError) as info:
        PopulationSpec.from_dict(data)
    assert str(info.value).startswith(where)


def test_invalid_json_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{", encoding="utf-8")
    with pytest.raises(SpecError, match="invalid JSON"):
        PopulationSpec.from_json(path)


# -- synthetic predictor ------------------------------------------------------------

def test_confusion_predictor_follows_rows():
    spec = two_group_spec()
    X = np.array([["F", "y1"]] * 20_000, dtype=object)
    pred = ConfusionPredictor(spec, random_state=0).fit(X).predict(X)
    assert abs(np.mean(pred == "y1") - 0.7) < 0.02
    again = ConfusionPredictor(spec, random_state=0).fit(X).predict(X)
    assert np.array_equal(pred, again)


def test_confusion_predictor_errors():
    with pytest.raises(ValueError, match="PopulationSpec"):
        ConfusionPredictor().fit(np.zeros((1, 2)))
    est = ConfusionPredictor(two_group_spec()).fit(None)
    with pytest.raises(ValueError, match="'Q'"):
        est.predict(np.array([["Q", "y1"]], dtype=object))
    with pytest.raises(ValueError, match="shape"):
        est.predict(np.array(["M"], dtype=object))
