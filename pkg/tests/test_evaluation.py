import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glr.evaluation import (
    FoldError,
    JsonlSink,
    RunRecord,
    make_folds,
    rank_models,
    read_records,
    run_benchmark,
    split_size_sweep,
    stratified_holdout,
    summarize,
)
from glr.models import ModelSpec

from conftest import random_graph


# -- folds -------------------------------------------------------------------

def test_exact_stratification_8_nodes():
    labels = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    plan = make_folds(labels, 4, seed=1)
    assert np.array_equal(plan.counts(labels), np.ones((2, 4), dtype=int))


def test_same_seed_same_plan():
    labels = np.random.default_rng(0).integers(0, 3, 50)
    a, b = make_folds(labels, 4, 7), make_folds(labels, 4, 7)
    assert np.array_equal(a.assignments, b.assignments)
    assert not np.array_equal(a.assignments, make_folds(labels, 4, 8).assignments)


@settings(max_examples=80)
@given(st.lists(st.integers(0, 5), min_size=12, max_size=200), st.integers(2, 6), st.integers(0, 2**63 - 1))
def test_fold_properties(raw, k, seed):
    labels = np.asarray(raw)
    sizes = np.bincount(labels)
    if np.any(sizes[sizes > 0] < k):
        with pytest.raises(FoldError):
            make_folds(labels, k, seed)
        return
    plan = make_folds(labels, k, seed)
    counts = plan.counts(labels)
    for c in np.flatnonzero(sizes):
        assert np.all(np.abs(counts[c] - sizes[c] / k) < 1)
    tests = [plan.test_nodes(f) for f in range(k)]
    assert np.array_equal(np.sort(np.concatenate(tests)), np.arange(len(labels)))
    for f in range(k):
        assert len(np.intersect1d(plan.test_nodes(f), plan.train_nodes(f))) == 0
    fold_sizes = np.array([len(t) for t in tests])
    assert fold_sizes.max() - fold_sizes.min() <= 1


def test_cora_sized_folds():
    # Cora class sizes
    sizes = [351, 217, 418, 818, 426, 298, 180]
    labels = np.repeat(np.arange(7), sizes)
    plan = make_folds(labels, 4, 42)
    fold_sizes = np.bincount(plan.assignments)
    assert np.all(np.abs(fold_sizes - 677) <= 1)
    counts = plan.counts(labels)
    assert np.all(np.abs(counts - np.array(sizes)[:, None] / 4) < 1)


def test_small_class_policy():
    labels = np.array([0, 0, 0, 0, 1, 1])
    with pytest.raises(FoldError, match="fewer than k"):
        make_folds(labels, 4, 0)
    with pytest.warns(RuntimeWarning):
        plan = make_folds(labels, 4, 0, allow_small_classes=True)
    assert plan.counts(labels)[1].sum() == 2


def test_fold_errors():
    with pytest.raises(FoldError):
        make_folds([0, 1], 1, 0)


def test_stratified_holdout():
    labels = np.repeat([0, 1], [40, 20])
    train, test = stratified_holdout(labels, 0.25, 3)
    assert np.bincount(labels[test]).tolist() == [10, 5]
    assert len(np.intersect1d(train, test)) == 0
    assert len(train) + len(test) == 60
    with pytest.raises(FoldError):
        stratified_holdout(labels, 1.0, 0)
    with pytest.raises(FoldError):
        stratified_holdout(np.array([0, 0, 1]), 0.6, 0)


# -- benchmark ---------------------------------------------------------------

@pytest.fixture
def graph(rng):
    return random_graph(rng, 40, n_features=6, n_classes=2, p_edge=0.15, name="g40")


def test_cardinality_and_repeat_identity(graph):
    recs = run_benchmark([("g40", graph)], [ModelSpec("glr")], k=4, repeats=3, seed=42)
    assert len(recs) == 12
    assert {(r.fold, r.repeat) for r in recs} == {(f, r) for f in range(4) for r in range(3)}
    for f in range(4):
        accs = {r.accuracy for r in recs if r.fold == f}
        assert len(accs) == 1
    assert all(0.0 <= r.accuracy <= 1.0 and r.n_train + r.n_test == 40 for r in recs)


def test_two_models_24_records(graph):
    recs = run_benchmark([("g40", graph)], [ModelSpec("glr"), ModelSpec("lr_x")], seed=42)
    assert len(recs) == 24


def test_timeout_marks_whole_cell(graph):
    recs = run_benchmark([("g40", graph)], [ModelSpec("glr"), ModelSpec("lr_a")], time_limit_seconds=0.0)
    assert len(recs) == 24
    assert all(r.timed_out and r.accuracy is None for r in recs)
    s = summarize(recs)
    assert s.ranks["g40"] == {"glr": 2.0, "lr_a": 2.0}


def test_dataset_load_failure_recorded(graph):
    def broken():
        raise OSError("no such dataset")

    recs = run_benchmark([("bad", broken), ("g40", graph)], [ModelSpec("lr_x")], k=2, repeats=1)
    bad = [r for r in recs if r.dataset == "bad"]
    assert len(bad) == 2 and all(r.error and "no such dataset" in r.error for r in bad)
    assert all(r.ok for r in recs if r.dataset == "g40")


def test_model_error_recorded(graph):
    # embed_dim larger than n - 1 makes the eigen-embedding fail
    recs = run_benchmark([("g40", graph)], [ModelSpec("knn_spectral_a", {"embed_dim": 100})], k=2, repeats=1)
    assert all(r.error and not r.ok for r in recs)
    assert summarize(recs).cells[("g40", "knn_spectral_a")].mean is None


def test_threads_give_same_records(graph, rng):
    other = random_graph(rng, 30, n_features=4, n_classes=2, name="g30")
    models = [ModelSpec("glr"), ModelSpec("diffusion_a"), ModelSpec("knn_spectral_x", {"embed_dim": 3})]
    serial = run_benchmark([("g40", graph), ("g30", other)], models, seed=5)
    parallel = run_benchmark([("g40", graph), ("g30", other)], models, seed=5, threads=4)
    key = lambda r: r.key()
    assert [(r.key(), r.accuracy) for r in sorted(serial, key=key)] == [(r.key(), r.accuracy) for r in sorted(parallel, key=key)]


def test_jsonl_round_trip_and_summary_recompute(graph, tmp_path):
    models = [ModelSpec("glr"), ModelSpec("lr_a"), ModelSpec("diffusion_x")]
    with JsonlSink(tmp_path / "runs.jsonl") as sink:
        recs = run_benchmark([("g40", graph)], models, seed=1, sink=sink)
    loaded = read_records(tmp_path / "runs.jsonl")
    assert [r.key() for r in loaded] == [r.key() for r in recs]
    lines = (tmp_path / "runs.jsonl").read_text().splitlines()
    assert all(json.loads(l)["schema_version"] == 1 for l in lines)
    s = summarize(loaded)
    for m in ("glr", "lr_a", "diffusion_x"):
        accs = [json.loads(l)["accuracy"] for l in lines if json.loads(l)["model"]["kind"] == m]
        assert s.cells[("g40", m)].mean == float(np.mean(accs))
        assert s.cells[("g40", m)].std == float(np.std(accs))


def test_sink_without_times_uses_sidecar(graph, tmp_path):
    with JsonlSink(tmp_path / "runs.jsonl", with_times=False) as sink:
        run_benchmark([("g40", graph)], [ModelSpec("lr_x")], k=2, repeats=1, sink=sink)
    assert all(json.loads(l)["fit_seconds"] is None for l in (tmp_path / "runs.jsonl").read_text().splitlines())
    loaded = read_records(tmp_path / "runs.jsonl")
    assert all(r.fit_seconds is not None for r in loaded)


def test_bad_schema_rejected(tmp_path):
    (tmp_path / "runs.jsonl").write_text(json.dumps({"schema_version": 99}) + "\n")
    with pytest.raises(ValueError, match="runs.jsonl:1"):
        read_records(tmp_path / "runs.jsonl")


# -- ranking / summary -------------------------------------------------------

def test_rank_rules():
    assert rank_models({"a": 0.9, "b": 0.8}) == {"a": 1.0, "b": 2.0}
    assert rank_models({"a": 0.9, "b": 0.8, "c": None}) == {"a": 1.0, "b": 2.0, "c": 3.0}
    assert rank_models({"a": 0.7, "b": 0.7}) == {"a": 1.5, "b": 1.5}
    assert rank_models({"a": None, "b": None, "c": 0.1}) == {"a": 3.0, "b": 3.0, "c": 1.0}


def test_summary_average_rank_and_table():
    recs = []
    for d, accs in {"d1": {"glr": 0.9, "lr_a": 0.8}, "d2": {"glr": 0.6, "lr_a": 0.7}, "d3": {"glr": 0.5, "lr_a": 0.5}}.items():
        for m, a in accs.items():
            recs.append(RunRecord(d, ModelSpec(m), 0, 0, 0, accuracy=a, fit_seconds=1.0, predict_seconds=0.5))
    s = summarize(recs)
    assert s.average_rank == {"glr": pytest.approx(1.5), "lr_a": pytest.approx(1.5)}
    assert s.cells[("d1", "glr")].mean_total_seconds == 1.5
    csv_text = s.to_csv().splitlines()
    assert csv_text[0] == "model,d1,d2,d3,avg_rank"
    assert csv_text[1].startswith("glr,0.9000 ± 0.0000")
    with pytest.raises(ValueError):
        summarize([])


def test_sweep_shape(graph):
    recs = split_size_sweep("g40", graph, ModelSpec("glr"), [0.1, 0.25, 0.5, 0.75], seed=0)
    assert len(recs) == 4
    assert [r.test_fraction for r in recs] == [0.1, 0.25, 0.5, 0.75]
    assert recs[1].n_test == pytest.approx(10, abs=1)
