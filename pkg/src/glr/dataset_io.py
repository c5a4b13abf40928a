"""Canonical on-disk dataset format, its loader and a raw-file converter.

A dataset directory holds::

    meta.json     {"name", "n", "L", "C"} plus optional "m", "checksum", "source_url"
    edges.csv     src,dst          (0-based; each undirected edge at least once)
    features.csv  row,col,value    (sparse triplets)
    labels.csv    node,label       (dense class ids 0..C-1)

and optionally ``label_map.csv`` / ``node_map.csv`` written by the converter.
All files are UTF-8 with LF line endings.  ``checksum`` is the SHA-256 of
the bytes of edges.csv, features.csv and labels.csv, in that order.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .graph_core import CsrMatrix, GraphError, SparseGraph, build_graph

CANONICAL_FILES = ("meta.json", "edges.csv", "features.csv", "labels.csv")
DATA_ENV = "GLR_DATA_DIR"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    n: int
    m: int
    L: int
    C: int
    source_url: str | None = None
    checksum: str | None = None

    def as_dict(self) -> dict:
        d = {"name": self.name, "n": self.n, "m": self.m, "L": self.L, "C": self.C}
        if self.source_url:
            d["source_url"] = self.source_url
        if self.checksum:
            d["checksum"] = self.checksum
        return d


def resolve_dataset(path_or_name: str | os.PathLike) -> Path:
    """A directory path as given, or a dataset name looked up under ``$GLR_DATA_DIR``."""
    p = Path(path_or_name)
    if p.is_dir():
        return p
    root = os.environ.get(DATA_ENV)
    if root and (Path(root) / p).is_dir():
        return Path(root) / p
    raise DatasetError(f"dataset directory not found: {path_or_name}" + (f" (also looked in ${DATA_ENV}={root})" if root else ""))


def content_checksum(directory: Path) -> str:
    h = hashlib.sha256()
    for fname in ("edges.csv", "features.csv", "labels.csv"):
        h.update((directory / fname).read_bytes())
    return h.hexdigest()


def _read_csv(path: Path, header: Sequence[str], kinds: Sequence[type]) -> list[list]:
    if not path.exists():
        raise DatasetError(f"missing file: {path}")
    rows = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != list(header):
            raise DatasetError(f"{path}:1: expected header {','.join(header)!r}, got {','.join(first or [])!r}")
        for row in reader:
            lineno = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([k(v) for k, v in zip(kinds, row)])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: malformed row {','.join(row)!r}") from None
    return rows


def load_dataset(directory: str | os.PathLike) -> tuple[SparseGraph, DatasetManifest]:
    """Read and validate a canonical dataset directory."""
    directory = resolve_dataset(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise DatasetError(f"missing file: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        n, L, C = int(meta["n"]), int(meta["L"]), int(meta["C"])
    except (ValueError, KeyError, TypeError) as err:
        raise DatasetError(f"{meta_path}: invalid metadata ({err})") from None
    name = meta.get("name", directory.name)

    edges = _read_csv(directory / "edges.csv", ("src", "dst"), (int, int))
    feats = _read_csv(directory / "features.csv", ("row", "col", "value"), (int, int, float))
    labels = _read_csv(directory / "labels.csv", ("node", "label"), (int, int))

    if len(labels) != n:
        raise DatasetError(f"count mismatch: meta.json says n={n} but labels.csv has {len(labels)} rows")
    lab = np.full(n, -1, dtype=np.int64)
    for node, label in labels:
        if not 0 <= node < n:
            raise DatasetError(f"labels.csv: node {node} outside [0, {n})")
        if lab[node] != -1:
            raise DatasetError(f"labels.csv: node {node} labeled twice")
        lab[node] = label
    if lab.min() < 0 or lab.max() >= C:
        raise DatasetError(f"labels.csv: label outside [0, C={C})")
    present = len(np.unique(lab))
    if present != C:
        raise DatasetError(f"count mismatch: meta.json says C={C} but labels.csv uses {present} classes")

    try:
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        t = np.asarray(feats, dtype=np.float64).reshape(-1, 3)
        if len(t) and (t[:, 0].max() >= n or t[:, 1].max() >= L or t[:, :2].min() < 0):
            raise DatasetError(f"features.csv: triplet index outside ({n}, {L})")
        x = CsrMatrix.from_triplets(t[:, 0].astype(np.int64), t[:, 1].astype(np.int64), t[:, 2], (n, L))
        g = build_graph(e, x, lab, n, L, name=name)
    except GraphError as err:
        raise DatasetError(f"{directory}: {err}") from None
    # labels are already dense ids; keep them as they are
    g = SparseGraph(g.adjacency, g.features, lab, C, name, tuple(range(C)))

    m = g.adjacency.nnz
    if "m" in meta and int(meta["m"]) != m:
        raise DatasetError(f"count mismatch: meta.json says m={meta['m']} but the graph stores {m} entries")
    checksum = meta.get("checksum")
    if checksum:
        actual = content_checksum(directory)
        if actual != checksum:
            raise DatasetError(f"checksum mismatch: meta.json pins {checksum}, files hash to {actual}")
    return g, DatasetManifest(name, n, m, L, C, meta.get("source_url"), checksum)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_dataset(
    g: SparseGraph,
    directory: str | os.PathLike,
    source_url: str | None = None,
    label_names: Sequence | None = None,
    node_names: Sequence | None = None,
) -> DatasetManifest:
    """Write ``g`` in canonical form (edges once each, ``src < dst``) with a pinned checksum."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def write(fname: str, header: str, lines: Iterator[str]):
        with (directory / fname).open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(header + "\n")
            for line in lines:
                fh.write(line + "\n")

    write("edges.csv", "src,dst", (f"{u},{v}" for u, v in g.edge_list()))
    f = g.features
    rows = np.repeat(np.arange(f.n_rows), f.row_counts())
    write("features.csv", "row,col,value", (f"{r},{c},{_fmt(v)}" for r, c, v in zip(rows, f.col_idx, f.values)))
    write("labels.csv", "node,label", (f"{u},{y}" for u, y in enumerate(g.labels)))
    if label_names is not None:
        write("label_map.csv", "label,name", (f"{i},{_csv_field(s)}" for i, s in enumerate(label_names)))
    if node_names is not None:
        write("node_map.csv", "node,name", (f"{i},{_csv_field(s)}" for i, s in enumerate(node_names)))
    manifest = DatasetManifest(g.name, g.n, g.adjacency.nnz, g.n_features, g.class_count, source_url,
                               content_checksum(directory))
    (directory / "meta.json").write_text(json.dumps(manifest.as_dict(), indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8", newline="\n")
    return manifest


def _csv_field(s) -> str:
    s = str(s)
    if any(ch in s for ch in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


# -- raw conversion ----------------------------------------------------------

def _tokens(path: Path, delimiter: str | None) -> Iterator[tuple[int, list[str]]]:
    splitter = re.compile(r"[,\s]+") if delimiter is None else None
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = splitter.split(line) if splitter else [p.strip() for p in line.split(delimiter)]
            yield lineno, parts


def _sort_key(values: Sequence[str]):
    try:
        return sorted(values, key=int)
    except ValueError:
        return sorted(values)


def convert_edgelist(
    edge_file: str | os.PathLike,
    feature_file: str | os.PathLike,
    label_file: str | os.PathLike,
    out_dir: str | os.PathLike,
    name: str | None = None,
    delimiter: str | None = None,
    string_ids: bool = False,
    dense_features: bool = False,
    source_url: str | None = None,
    n_features: int | None = None,
) -> DatasetManifest:
    """Convert raw edge / feature / label files to the canonical format.

    * label file: ``node label`` per line; the node set is taken from it.
    * edge file: ``u v`` per line.
    * feature file: ``node col value`` triplets, or with ``dense_features``
      ``node v0 v1 ...`` rows.

    Fields are split on commas or whitespace unless ``delimiter`` is given;
    lines starting with ``#`` are skipped.  Without ``string_ids`` node
    tokens must be integers; nodes are densified in numeric order (string
    ids: lexicographic order).  Class names are mapped to ids in sorted
    order and written to ``label_map.csv``.  ``n_features`` fixes the
    feature width when trailing columns are all zero.
    """
    label_file, edge_file, feature_file = Path(label_file), Path(edge_file), Path(feature_file)

    def node_token(tok: str, where: str) -> str:
        if not string_ids:
            try:
                int(tok)
            except ValueError:
                raise DatasetError(f"{where}: non-integer node id {tok!r} (use string ids)") from None
        return tok

    raw_labels: dict[str, str] = {}
    for lineno, parts in _tokens(label_file, delimiter):
        if len(parts) != 2:
            raise DatasetError(f"{label_file}:{lineno}: expected 'node label'")
        raw_labels[node_token(parts[0], f"{label_file}:{lineno}")] = parts[1]
    if not raw_labels:
        raise DatasetError(f"{label_file}: no labeled nodes")
    node_names = sorted(raw_labels) if string_ids else sorted(raw_labels, key=int)
    index = {tok: i for i, tok in enumerate(node_names)}
    n = len(node_names)

    edges = []
    for lineno, parts in _tokens(edge_file, delimiter):
        if len(parts) < 2:
            raise DatasetError(f"{edge_file}:{lineno}: expected 'u v'")
        ends = [node_token(p, f"{edge_file}:{lineno}") for p in parts[:2]]
        for tok in ends:
            if tok not in index:
                raise DatasetError(f"{edge_file}:{lineno}: node {tok!r} has no label")
        edges.append((index[ends[0]], index[ends[1]]))

    rows, cols, vals = [], [], []
    L = 0
    for lineno, parts in _tokens(feature_file, delimiter):
        tok = node_token(parts[0], f"{feature_file}:{lineno}")
        if tok not in index:
            raise DatasetError(f"{feature_file}:{lineno}: dangling feature row {tok!r}")
        r = index[tok]
        try:
            if dense_features:
                v = np.asarray(parts[1:], dtype=np.float64)
                nz = np.flatnonzero(v)
                rows.extend([r] * len(nz)), cols.extend(nz.tolist()), vals.extend(v[nz].tolist())
                L = max(L, len(v))
            else:
                if len(parts) != 3:
                    raise ValueError
                c = int(parts[1])
                if c < 0:
                    raise ValueError
                rows.append(r), cols.append(c), vals.append(float(parts[2]))
                L = max(L, c + 1)
        except ValueError:
            raise DatasetError(f"{feature_file}:{lineno}: malformed feature line") from None

    if n_features is not None:
        if n_features < L:
            raise DatasetError(f"{feature_file}: column {L - 1} exceeds n_features={n_features}")
        L = n_features
    x = CsrMatrix.from_triplets(rows, cols, vals, (n, L))
    class_names = _sort_key(sorted(set(raw_labels.values())))
    class_id = {s: i for i, s in enumerate(class_names)}
    labels = np.array([class_id[raw_labels[tok]] for tok in node_names], dtype=np.int64)
    g = build_graph(np.asarray(edges, dtype=np.int64).reshape(-1, 2), x, labels, n, L,
                    name=name or Path(out_dir).name)
    return write_dataset(g, out_dir, source_url=source_url, label_names=class_names, node_names=node_names)


def dump_raw(g: SparseGraph, directory: str | os.PathLike) -> tuple[Path, Path, Path]:
    """Write ``g`` back out as whitespace-separated raw files accepted by :func:`convert_edgelist`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    e, f, l = directory / "edges.txt", directory / "features.txt", directory / "labels.txt"
    e.write_text("".join(f"{u} {v}\n" for u, v in g.edge_list()), encoding="utf-8")
    x = g.features
    rows = np.repeat(np.arange(x.n_rows), x.row_counts())
    f.write_text("".join(f"{r} {c} {_fmt(v)}\n" for r, c, v in zip(rows, x.col_idx, x.values)), encoding="utf-8")
    l.write_text("".join(f"{u} {y}\n" for u, y in enumerate(g.labels)), encoding="utf-8")
    return e, f, l
