#!/usr/bin/env python3
"""Download Cora, Citeseer, Cornell and Wisconsin and write them in canonical form.

    python scripts/fetch_datasets.py --out data

Cora and Citeseer come from the Planetoid release (pickled scipy/numpy
objects), Cornell and Wisconsin from the Geom-GCN split of WebKB (tab
separated text).  Licenses differ per dataset; check the upstream pages
before redistributing.  Needs network access; nothing in the ``glr``
package itself downloads anything.
"""
from __future__ import annotations

import argparse
import pickle
import sys
import urllib.request
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from glr.dataset_io import write_dataset
from glr.graph_core import CsrMatrix, build_graph

PLANETOID = "https://raw.githubusercontent.com/kimiyoung/planetoid/master/data/ind.{name}.{part}"
WEBKB = "https://raw.githubusercontent.com/graphdml-uiuc-jlu/geom-gcn/master/new_data/{name}/{file}"
PLANETOID_PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph", "test.index")
WEBKB_FILES = ("out1_node_feature_label.txt", "out1_graph_edges.txt")


def _get(url: str, dest: Path) -> Path:
    if not dest.exists():
        dest.parent.mkdir(parents=True, exist_ok=True)
        print(f"fetching {url}")
        with urllib.request.urlopen(url, timeout=120) as resp:
            dest.write_bytes(resp.read())
    return dest


def _unpickle(path: Path):
    with path.open("rb") as fh:
        return pickle.load(fh, encoding="latin1")


def read_planetoid(raw: Path, name: str):
    """Assemble the full transductive graph from the Planetoid pieces.

    Test rows are stored out of order and, for Citeseer, some test ids have
    no row at all; those nodes get zero features and class 0 (the argmax of
    an all-zero label row), matching the usual loaders.
    """
    part = {p: raw / f"ind.{name}.{p}" for p in PLANETOID_PARTS}
    allx, ally = _unpickle(part["allx"]), _unpickle(part["ally"])
    tx, ty = _unpickle(part["tx"]), _unpickle(part["ty"])
    graph = _unpickle(part["graph"])
    test_idx = np.loadtxt(part["test.index"], dtype=np.int64)
    lo, hi = test_idx.min(), test_idx.max()
    n = max(hi + 1, allx.shape[0] + tx.shape[0])
    n_test_range = hi - lo + 1
    tx_full = sp.lil_matrix((n_test_range, tx.shape[1]))
    ty_full = np.zeros((n_test_range, ty.shape[1]))
    tx_full[test_idx - lo, :] = tx
    ty_full[test_idx - lo, :] = ty
    x = sp.vstack([sp.csr_matrix(allx), tx_full.tocsr()]).tocsr()[:n]
    y = np.vstack([np.asarray(ally), ty_full])[:n].argmax(axis=1)
    edges = np.array([(u, v) for u, nbrs in graph.items() for v in nbrs], dtype=np.int64)
    edges = edges[(edges < n).all(axis=1)]
    return edges, CsrMatrix.from_scipy(x), y


def read_webkb(raw: Path):
    feat_file, edge_file = raw / WEBKB_FILES[0], raw / WEBKB_FILES[1]
    rows = [line.rstrip("\n").split("\t") for line in feat_file.read_text(encoding="utf-8").splitlines()[1:] if line]
    ids = np.array([int(r[0]) for r in rows])
    dense = np.array([[float(v) for v in r[1].split(",")] for r in rows])
    labels = np.array([int(r[2]) for r in rows])
    order = np.argsort(ids)
    if not np.array_equal(ids[order], np.arange(len(ids))):
        raise ValueError(f"{feat_file}: node ids are not 0..n-1")
    edges = np.loadtxt(edge_file, dtype=np.int64, skiprows=1, ndmin=2)
    return edges, CsrMatrix.from_dense(dense[order]), labels[order]


def fetch(name: str, out: Path, raw_root: Path) -> None:
    raw = raw_root / name
    if name in ("cora", "citeseer"):
        for p in PLANETOID_PARTS:
            _get(PLANETOID.format(name=name, part=p), raw / f"ind.{name}.{p}")
        edges, x, y = read_planetoid(raw, name)
        source = PLANETOID.format(name=name, part="*")
    else:
        for f in WEBKB_FILES:
            _get(WEBKB.format(name=name, file=f), raw / f)
        edges, x, y = read_webkb(raw)
        source = WEBKB.format(name=name, file="*")
    g = build_graph(edges, x, y, len(y), x.n_cols, name=name)
    manifest = write_dataset(g, out / name, source_url=source)
    print(f"{name}: n={manifest.n} m={manifest.m} L={manifest.L} C={manifest.C} -> {out / name}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data")
    parser.add_argument("--raw", default=None, help="cache for downloaded files (default: <out>/raw)")
    parser.add_argument("names", nargs="*", default=["cora", "citeseer", "cornell", "wisconsin"])
    args = parser.parse_args(argv)
    out = Path(args.out)
    raw = Path(args.raw) if args.raw else out / "raw"
    for name in args.names:
        try:
            fetch(name, out, raw)
        except OSError as err:
            print(f"error: {name}: {err}", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
