import sys
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make
from oracles import brute_force_allocation
from fairgauge.data import AuditDataset, Record
from fairgauge.metrics import accuracy, gap_table
from fairgauge.sampling import (
    CommandPredictor,
    EstimatorPredictor,
    PlanError,
    SamplingPlan,
    cell_allocation,
    derive_seed,
    identity_predictor,
    largest_remainder,
    run_plan,
    split,
    stratified_sample,
)
from fairgauge.synth import ConfusionPredictor, PopulationSpec, generate


def cells_dataset(counts, groups=("M", "F"), classes=("a", "b")):
    """Dataset whose group-major cells hold the given record counts, predictions = truth."""
    records, i = [], 0
    cells = [(g, y) for g in groups for y in classes]
    for (g, y), n in zip(cells, counts):
        for _ in range(n):
            records.append(Record(f"r{i:05d}", g, y, y))
            i += 1
    return AuditDataset.from_records(records, groups=list(groups), classes=list(classes))


def cell_tally(ds):
    tally = Counter(zip(ds.group_codes.tolist(), ds.class_codes.tolist()))
    G, C = len(ds.groups), len(ds.classes)
    return [tally.get((g, c), 0) for g in range(G) for c in range(C)]


@pytest.fixture(scope="module")
def toy_population():
    xyz = ("x", "y", "z")

    def rows(m):
        return {a: dict(zip(xyz, r)) for a, r in zip(xyz, m)}

    spec = PopulationSpec.from_dict({
        "groups": {"M": 0.5, "F": 0.5}, "classes": list(xyz),
        "class_priors": {"M": dict(zip(xyz, (0.2, 0.3, 0.5))), "F": dict(zip(xyz, (0.3, 0.3, 0.4)))},
        "confusion": {"M": rows([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]]),
                      "F": rows([[0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.1, 0.1, 0.8]])},
    })
    return spec, generate(spec, 2000, seed=5)


# -- allocation ---------------------------------------------------------------------

def test_allocation_examples():
    assert cell_allocation([50, 30, 20], 10) == [5, 3, 2]
    assert cell_allocation([2002, 386860], 10000) == [51, 9949]
    # Fraction quota of the rare cell
    assert Fraction(10000 * 2002, 388862) > 51 and Fraction(10000 * 2002, 388862) < Fraction(515, 10)


def test_largest_remainder_ties_go_to_earlier_cell():
    assert largest_remainder([Fraction(1, 2), Fraction(1, 2)], 1) == [1, 0]
    assert largest_remainder([Fraction(1, 3)] * 3, 1) == [1, 0, 0]


def test_largest_remainder_rejects_impossible_totals():
    with pytest.raises(ValueError):
        largest_remainder([1, 1], 5)
    with pytest.raises(ValueError):
        largest_remainder([-1, 2], 1)


@given(st.lists(st.integers(0, 6), min_size=1, max_size=4).filter(lambda c: sum(c) > 0), st.data())
@settings(max_examples=200, deadline=None)
def test_allocation_matches_brute_force(counts, data):
    size = data.draw(st.integers(0, sum(counts)))
    quotas = [Fraction(size * c, sum(counts)) for c in counts]
    got = cell_allocation(counts, size)
    assert got == brute_force_allocation(quotas, size, counts)
    assert sum(got) == size
    assert all(abs(g - q) < 1 for g, q in zip(got, quotas))


# -- sampling -----------------------------------------------------------------------

def test_stratified_sample_cell_counts():
    ds = cells_dataset([50, 30, 20, 0])
    sample = stratified_sample(ds, 10, seed=1)
    assert cell_tally(sample) == [5, 3, 2, 0]
    assert sample.groups == ds.groups and sample.classes == ds.classes


def test_rare_cell_sample():
    ds = cells_dataset([2002, 386860], groups=("F",), classes=("surgeon", "other"))
    sample = stratified_sample(ds, 10000, seed=3)
    assert cell_tally(sample) == [51, 9949]


def test_full_size_sample_is_the_dataset(counts_ds):
    sample = stratified_sample(counts_ds, len(counts_ds), seed=9)
    assert sample.records == counts_ds.records


def test_sample_errors(counts_ds):
    with pytest.raises(ValueError, match="exceeds"):
        stratified_sample(counts_ds, 9, seed=0)
    with pytest.raises(ValueError):
        stratified_sample(counts_ds, 0, seed=0)
    with pytest.raises(ValueError):
        stratified_sample(counts_ds, 3, seed=-1)


def test_sample_determinism_and_sensitivity(toy_population):
    _, ds = toy_population
    a = stratified_sample(ds, 300, seed=11)
    b = stratified_sample(ds, 300, seed=11)
    c = stratified_sample(ds, 300, seed=12)
    assert a.ids.tolist() == b.ids.tolist()
    assert a.ids.tolist() != c.ids.tolist()


# -- split --------------------------------------------------------------------------

def test_split_example():
    ds = cells_dataset([5, 3, 2], groups=("M",), classes=("a", "b", "c"))
    train, test = split(ds, 0.7, seed=0)
    assert len(train) == 7 and len(test) == 3
    assert cell_tally(train) == [4, 2, 1]
    assert cell_tally(test) == [1, 1, 1]


def test_split_rejects_bad_ratio(counts_ds):
    for bad in (0, 1, 1.5, -0.2):
        with pytest.raises(ValueError):
            split(counts_ds, bad, seed=0)


@given(st.lists(st.integers(0, 8), min_size=4, max_size=4).filter(lambda c: sum(c) >= 2),
       st.sampled_from([0.5, 0.6, 0.7, 0.8]), st.integers(0, 2**32))
@settings(max_examples=100, deadline=None)
def test_split_partitions_and_is_deterministic(counts, ratio, seed):
    ds = cells_dataset(counts)
    train, test = split(ds, ratio, seed)
    ids_train, ids_test = set(train.ids.tolist()), set(test.ids.tolist())
    assert not ids_train & ids_test
    assert ids_train | ids_test == set(ds.ids.tolist())
    target = Fraction(repr(ratio)) * len(ds)
    assert len(train) == int(target + Fraction(1, 2))
    assert all(abs(t - Fraction(repr(ratio)) * c) < 1 for t, c in zip(cell_tally(train), counts))
    again = split(ds, ratio, seed)
    assert again[0].ids.tolist() == train.ids.tolist()


# -- plans --------------------------------------------------------------------------

def test_derive_seed_is_pure():
    assert derive_seed(0, 10000, 3) == derive_seed(0, 10000, 3)
    seen = {derive_seed(0, s, i) for s in (10, 20) for i in range(50)}
    assert len(seen) == 100
    assert derive_seed(1, 10, 0) != derive_seed(0, 10, 0)


def test_plan_validation():
    with pytest.raises(ValueError):
        SamplingPlan(sizes=())
    with pytest.raises(ValueError):
        SamplingPlan(sizes=(10,), split_ratio=1.0)
    with pytest.raises(ValueError, match="unknown"):
        SamplingPlan.from_dict({"sizes": [1], "bogus": 2})
    plan = SamplingPlan.from_dict({"sizes": [5, 10], "replicates_per_size": 3})
    assert SamplingPlan.from_dict(plan.to_dict()) == plan


def test_plan_size_larger_than_dataset(counts_ds):
    with pytest.raises(ValueError, match="exceed"):
        run_plan(SamplingPlan(sizes=(100,), replicates_per_size=1), counts_ds, identity_predictor)


def test_identity_plan_gives_perfect_accuracy(toy_population):
    _, ds = toy_population
    plan = SamplingPlan(sizes=(100,), replicates_per_size=3, master_seed=4)
    handles = run_plan(plan, ds, identity_predictor)
    assert [(h.size, h.index) for h in handles] == [(100, 0), (100, 1), (100, 2)]
    for h in handles:
        assert len(h.train) == 70 and len(h.test) == 30
        assert accuracy(h.test) == 1.0
        table = gap_table(h.test, "M", "F")
        for kind in ("GP", "TPR", "PP"):
            g = table.gaps(kind)
            assert np.all(np.isnan(g) | (np.abs(g) <= 1))


def test_plan_handle_count_and_order(toy_population):
    _, ds = toy_population
    plan = SamplingPlan(sizes=(40, 80, 120, 160), replicates_per_size=50)
    handles = run_plan(plan, ds, identity_predictor)
    assert len(handles) == 200
    assert [(h.size, h.index) for h in handles] == [(s, i) for s in plan.sizes for i in range(50)]


def test_plan_parallel_matches_sequential(toy_population):
    spec, ds = toy_population
    predictor = EstimatorPredictor(ConfusionPredictor(spec), features=("group", "true_class"))
    plan = SamplingPlan(sizes=(100, 200), replicates_per_size=4, master_seed=21)
    seq = run_plan(plan, ds, predictor, n_jobs=1)
    par = run_plan(plan, ds, predictor, n_jobs=4)
    assert [h.seed for h in seq] == [h.seed for h in par]
    for a, b in zip(seq, par):
        assert a.train.records == b.train.records
        assert a.test.records == b.test.records


def test_plan_reproducible_across_runs(toy_population):
    spec, ds = toy_population
    predictor = EstimatorPredictor(ConfusionPredictor(spec), features=("group", "true_class"))
    plan = SamplingPlan(sizes=(150,), replicates_per_size=3, master_seed=8)
    a = run_plan(plan, ds, predictor)
    b = run_plan(plan, ds, predictor)
    assert [h.test.records for h in a] == [h.test.records for h in b]


def test_predictor_failure_reports_replicate(toy_population):
    _, ds = toy_population

    def flaky(train, test, seed):
        if len(test) == 30:
            raise RuntimeError("boom")
        return identity_predictor(train, test, seed)

    plan = SamplingPlan(sizes=(100, 200), replicates_per_size=2)
    with pytest.raises(PlanError) as info:
        run_plan(plan, ds, flaky)
    err = info.value
    assert [(f.size, f.index) for f in err.failures] == [(100, 0), (100, 1)]
    assert "size=100, index=0" in str(err) and "boom" in str(err)
    assert [(h.size, h.index) for h in err.completed] == [(200, 0), (200, 1)]


def test_predictor_bad_outputs(toy_population):
    _, ds = toy_population
    plan = SamplingPlan(sizes=(50,), replicates_per_size=1)
    with pytest.raises(PlanError, match="labels for"):
        run_plan(plan, ds, lambda tr, te, s: ["x"])
    with pytest.raises(PlanError, match="missing"):
        run_plan(plan, ds, lambda tr, te, s: {})
    with pytest.raises(PlanError, match="'nope'"):
        run_plan(plan, ds, lambda tr, te, s: ["nope"] * len(te))


def test_command_predictor_round_trip(toy_population, tmp_path):
    spec, ds = toy_population
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(__import__("json").dumps(spec.to_dict()), encoding="utf-8")
    cmd = (f"{sys.executable} -m fairgauge oracle-predict --spec {spec_path} "
           "--test {test} --out {out} --seed {seed}")
    plan = SamplingPlan(sizes=(60,), replicates_per_size=2, master_seed=2)
    via_cmd = run_plan(plan, ds, CommandPredictor(cmd, workdir=tmp_path / "work"))
    in_proc = run_plan(plan, ds, EstimatorPredictor(ConfusionPredictor(spec),
                                                    features=("group", "true_class")))
    assert [h.test.records for h in via_cmd] == [h.test.records for h in in_proc]


def test_command_predictor_failure(toy_population, tmp_path):
    _, ds = toy_population
    cmd = f"{sys.executable} -c \"import sys; sys.exit('bad model')\""
    plan = SamplingPlan(sizes=(50,), replicates_per_size=1)
    with pytest.raises(PlanError, match="bad model"):
        run_plan(plan, ds, CommandPredictor(cmd))


def test_estimator_predictor_needs_text(counts_ds):
    from sklearn.dummy import DummyClassifier
    with pytest.raises(ValueError, match="text"):
        EstimatorPredictor(DummyClassifier())(counts_ds, counts_ds, 0)
    preds = EstimatorPredictor(DummyClassifier(), features=("group",))(counts_ds, counts_ds, 0)
    assert len(preds) == len(counts_ds)


def test_fixture_helper_consistency():
    assert cell_tally(make([("M", "a", "a"), ("F", "b", "b")])) == [1, 0, 0, 1]
