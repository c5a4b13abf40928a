import os
from pathlib import Path

import numpy as np
import pytest

from glr.graph_core import CsrMatrix, build_graph

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"


def random_graph(rng, n, n_features=5, n_classes=3, p_edge=0.3, p_feat=0.4, name="rand", integer_features=False):
    """Small random attributed graph with every class present."""
    iu = np.triu_indices(n, 1)
    mask = rng.random(len(iu[0])) < p_edge
    edges = np.column_stack([iu[0][mask], iu[1][mask]])
    dense = rng.random((n, n_features)) * (rng.random((n, n_features)) < p_feat)
    if integer_features:
        dense = np.ceil(dense * 3)
    labels = rng.integers(0, n_classes, n)
    labels[:n_classes] = np.arange(n_classes)
    rng.shuffle(labels)
    return build_graph(edges, CsrMatrix.from_dense(dense), labels, n, n_features, name=name)


def dense_adjacency(g):
    return g.adjacency.to_dense()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy8():
    from glr.dataset_io import load_dataset

    return load_dataset(DATA / "toy8")[0]


def real_dataset_dir(name):
    """Directory of a real benchmark dataset, from $GLR_DATA_DIR or ./data."""
    for root in (os.environ.get("GLR_DATA_DIR"), DATA):
        if root and (Path(root) / name / "meta.json").exists():
            return Path(root) / name
    return None
