"""Published dataset statistics, checked when the public datasets are installed.

These are skipped without the data; the acceptance criteria that depend on
the same datasets fail instead (see test_acceptance.py).
"""
import numpy as np
import pytest

from glr.cli import main
from glr.dataset_io import load_dataset
from glr.evaluation import make_folds
from glr.graph_core import dataset_stats, hconcat
from glr.models import ModelSpec, fit, scores

from conftest import real_dataset_dir

# n, stored adjacency entries, L, C
PUBLISHED = {
    "cora": (2708, 10556, 1433, 7),
    "citeseer": (3327, 9104, 3703, 6),
}


def need(name):
    d = real_dataset_dir(name)
    if d is None:
        pytest.skip(f"{name} not installed (set GLR_DATA_DIR or run scripts/fetch_datasets.py)")
    return d


@pytest.mark.parametrize("name", sorted(PUBLISHED))
def test_manifest_counts(name):
    g, man = load_dataset(need(name))
    assert (man.n, man.m, man.L, man.C) == PUBLISHED[name]
    assert g.is_symmetric()


def test_cora_density_and_design_width():
    g, _ = load_dataset(need("cora"))
    s = dataset_stats(g)
    assert f"{s.density:.2e}" == "1.44e-03"
    assert f"{s.density_table:.2e}" == "2.88e-03"
    assert hconcat(g.adjacency, g.features).shape == (2708, 4141)


def test_cora_folds():
    g, _ = load_dataset(need("cora"))
    plan = make_folds(g.labels, 4, 42)
    assert np.all(np.abs(np.bincount(plan.assignments) - 677) <= 1)
    sizes = np.bincount(g.labels)
    assert np.all(np.abs(plan.counts(g.labels) - sizes[:, None] / 4) < 1)


def test_cora_probability_rows():
    g, _ = load_dataset(need("cora"))
    plan = make_folds(g.labels, 4, 0)
    m = fit(ModelSpec("glr"), g, plan.train_nodes(0))
    p = scores(m, g, np.arange(g.n))
    assert np.max(np.abs(p.sum(axis=1) - 1.0)) < 1e-12


def test_cora_stats_command(capsys):
    assert main(["stats", str(need("cora"))]) == 0
    out = capsys.readouterr().out
    assert "n=2708" in out and "C=7" in out
