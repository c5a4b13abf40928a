"""Attributed-graph data model and the sparse kernels every model runs on.

``CsrMatrix`` is a thin, immutable, canonical CSR container (sorted unique
column indices per row, float64 values).  Products are delegated to
``scipy.sparse`` which shares the exact same memory layout; structural
operations (concatenation, row slicing, canonicalization) are done here so
the canonical-form invariants are owned locally.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    """Invalid graph or matrix construction input."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "row_ptr", _frozen(row_ptr))
        object.__setattr__(self, "col_idx", _frozen(col_idx))
        object.__setattr__(self, "values", _frozen(values))
        self.check()

    def check(self) -> None:
        """Raise ``GraphError`` unless every canonical-form invariant holds."""
        rp, ci = self.row_ptr, self.col_idx
        if self.n_rows < 0 or self.n_cols < 0:
            raise GraphError("negative matrix dimension")
        if len(rp) != self.n_rows + 1 or rp[0] != 0:
            raise GraphError("row_ptr must have length n_rows+1 and start at 0")
        if rp[-1] != len(ci) or len(ci) != len(self.values):
            raise GraphError("row_ptr[-1], len(col_idx) and len(values) disagree")
        if np.any(np.diff(rp) < 0):
            raise GraphError("row_ptr must be non-decreasing")
        if len(ci):
            if ci.min() < 0 or ci.max() >= self.n_cols:
                raise GraphError("column index out of range")
            # strictly increasing inside a row; row starts may go down
            step = np.diff(ci)
            row_start = np.zeros(len(ci), dtype=bool)
            row_start[rp[1:-1][rp[1:-1] < len(ci)]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise GraphError("column indices must be strictly increasing within rows")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    def row_counts(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def row(self, r: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.row_ptr[r], self.row_ptr[r + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]

    # -- constructors -----------------------------------------------------
    @classmethod
    def from_triplets(cls, rows, cols, vals, shape: tuple[int, int], sum_duplicates: bool = True) -> "CsrMatrix":
        """Build a canonical matrix from COO triplets.

        Duplicates are summed (or, with ``sum_duplicates=False``, the last
        value wins).  Explicit zeros are kept out of the structure.
        """
        n_rows, n_cols = shape
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.broadcast_to(np.asarray(vals, dtype=np.float64), rows.shape).ravel()
        if len(rows) != len(cols):
            raise GraphError("rows and cols must have the same length")
        if len(rows):
            if rows.min() < 0 or rows.max() >= n_rows:
                raise GraphError(f"row index out of range [0, {n_rows})")
            if cols.min() < 0 or cols.max() >= n_cols:
                raise GraphError(f"column index out of range [0, {n_cols})")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows):
            new = np.ones(len(rows), dtype=bool)
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            if sum_duplicates:
                group = np.cumsum(new) - 1
                vals = np.bincount(group, weights=vals, minlength=int(new.sum()))
            else:
                last = np.append(new[1:], True)
                vals = vals[last]
            rows, cols = rows[new], cols[new]
            keep = vals != 0.0
            rows, cols, vals = rows[keep], cols[keep], vals[keep]
        row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=row_ptr[1:])
        return cls(n_rows, n_cols, row_ptr, cols, vals)

    @classmethod
    def from_scipy(cls, m) -> "CsrMatrix":
        m = sp.csr_matrix(m, dtype=np.float64)
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        a = np.asarray(a, dtype=np.float64)
        r, c = np.nonzero(a)
        return cls.from_triplets(r, c, a[r, c], a.shape)

    @classmethod
    def empty(cls, n_rows: int, n_cols: int = 0) -> "CsrMatrix":
        return cls(n_rows, n_cols, np.zeros(n_rows + 1, dtype=np.int64), np.zeros(0, np.int64), np.zeros(0))

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n))

    # -- conversions ------------------------------------------------------
    def to_scipy(self) -> sp.csr_matrix:
        # read-only views; scipy never writes through them in the kernels used here
        return sp.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=self.shape, copy=False)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.n_rows), self.row_counts())
        out[rows, self.col_idx] = self.values
        return out

    def transpose(self) -> "CsrMatrix":
        rows = np.repeat(np.arange(self.n_rows), self.row_counts())
        return CsrMatrix.from_triplets(self.col_idx, rows, self.values, (self.n_cols, self.n_rows))

    def equals(self, other: "CsrMatrix") -> bool:
        """Exact structural and value equality."""
        return (
            self.shape == other.shape
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.values, other.values)
        )


def hconcat(a: CsrMatrix, b: CsrMatrix) -> CsrMatrix:
    """Place ``b`` to the right of ``a``; columns of ``b`` are shifted by ``a.n_cols``."""
    if a.n_rows != b.n_rows:
        raise GraphError(f"row-count mismatch: {a.n_rows} vs {b.n_rows}")
    counts_a, counts_b = a.row_counts(), b.row_counts()
    row_ptr = np.zeros(a.n_rows + 1, dtype=np.int64)
    np.cumsum(counts_a + counts_b, out=row_ptr[1:])
    nnz = a.nnz + b.nnz
    col_idx = np.empty(nnz, dtype=np.int64)
    values = np.empty(nnz)
    # destination offsets: a's entries go first in each row, then b's
    dest_a = np.repeat(row_ptr[:-1] - a.row_ptr[:-1], counts_a) + np.arange(a.nnz)
    dest_b = np.repeat(row_ptr[:-1] + counts_a - b.row_ptr[:-1], counts_b) + np.arange(b.nnz)
    col_idx[dest_a] = a.col_idx
    values[dest_a] = a.values
    col_idx[dest_b] = b.col_idx + a.n_cols
    values[dest_b] = b.values
    return CsrMatrix(a.n_rows, a.n_cols + b.n_cols, row_ptr, col_idx, values)


def row_submatrix(m: CsrMatrix, rows: Sequence[int]) -> CsrMatrix:
    """Rows of ``m`` in the order given by ``rows`` (repeats allowed)."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    if len(rows) and (rows.min() < 0 or rows.max() >= m.n_rows):
        raise GraphError(f"row index out of range [0, {m.n_rows})")
    counts = m.row_counts()[rows]
    row_ptr = np.zeros(len(rows) + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    src = np.repeat(m.row_ptr[rows] - row_ptr[:-1], counts) + np.arange(row_ptr[-1])
    return CsrMatrix(len(rows), m.n_cols, row_ptr, m.col_idx[src], m.values[src])


def spmv(m: CsrMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != m.n_cols:
        raise GraphError(f"dimension mismatch: matrix {m.shape} times vector {x.shape}")
    return np.asarray(m.to_scipy() @ x)


def spmm_dense(m: CsrMatrix, b) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] != m.n_cols:
        raise GraphError(f"dimension mismatch: matrix {m.shape} times matrix {b.shape}")
    return np.asarray(m.to_scipy() @ b)


def row_normalize(m: CsrMatrix, norm: str = "l1") -> CsrMatrix:
    """Scale each row to unit L1 (sum) or L2 norm; zero rows stay zero."""
    rows = np.repeat(np.arange(m.n_rows), m.row_counts())
    if norm == "l1":
        s = np.bincount(rows, weights=m.values, minlength=m.n_rows)
    elif norm == "l2":
        s = np.sqrt(np.bincount(rows, weights=m.values**2, minlength=m.n_rows))
    else:
        raise ValueError(f"unknown norm {norm!r}")
    inv = np.zeros(m.n_rows)
    np.divide(1.0, s, out=inv, where=s != 0)
    return CsrMatrix(m.n_rows, m.n_cols, m.row_ptr, m.col_idx, m.values * inv[rows])


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Undirected attributed graph with one class label per node."""

    adjacency: CsrMatrix
    features: CsrMatrix
    labels: np.ndarray
    class_count: int
    name: str = "graph"
    label_names: tuple = field(default=())

    def __post_init__(self):
        labels = _frozen(np.array(self.labels, dtype=np.int64))
        object.__setattr__(self, "labels", labels)
        n = self.adjacency.n_rows
        if n == 0:
            raise GraphError("graph must have at least one node")
        if self.adjacency.n_cols != n:
            raise GraphError("adjacency must be square")
        if self.features.n_rows != n:
            raise GraphError(f"features have {self.features.n_rows} rows, graph has {n} nodes")
        if labels.shape != (n,):
            raise GraphError(f"labels length {labels.shape[0]} != n={n}")
        if labels.min() < 0 or labels.max() >= self.class_count:
            raise GraphError("label outside [0, class_count)")
        if len(np.unique(labels)) != self.class_count:
            raise GraphError("every class id in [0, class_count) must occur")

    @property
    def n(self) -> int:
        return self.adjacency.n_rows

    @property
    def n_features(self) -> int:
        return self.features.n_cols

    def degrees(self) -> np.ndarray:
        return self.adjacency.row_counts()

    def edge_list(self) -> np.ndarray:
        """Canonical undirected edge dump: each edge once with ``u < v``."""
        rows = np.repeat(np.arange(self.n), self.degrees())
        keep = rows < self.adjacency.col_idx
        return np.column_stack([rows[keep], self.adjacency.col_idx[keep]])

    def is_symmetric(self) -> bool:
        return self.adjacency.equals(self.adjacency.transpose())


def densify_labels(labels) -> tuple[np.ndarray, list]:
    """Map arbitrary label values to ``0..C-1`` in sorted order of the originals."""
    uniques, dense = np.unique(np.asarray(labels), return_inverse=True)
    return dense.astype(np.int64), list(uniques.tolist())


def build_graph(
    edges: Iterable[tuple[int, int]],
    features,
    labels,
    n: int,
    L: int,
    name: str = "graph",
) -> SparseGraph:
    """Canonical graph from raw parts.

    Edges are symmetrized, self-loops and duplicates removed, all adjacency
    values set to 1.  ``features`` is an iterable of ``(row, col, value)``
    triplets or an existing ``CsrMatrix``.  Labels are remapped to a dense
    ``0..C-1`` range; the original values are kept in ``label_names``.
    """
    if n <= 0:
        raise GraphError("n must be positive")
    e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64).reshape(-1, 2)
    if len(e) and (e.min() < 0 or e.max() >= n):
        raise GraphError(f"edge endpoint out of range [0, {n})")
    e = e[e[:, 0] != e[:, 1]]
    src = np.concatenate([e[:, 0], e[:, 1]])
    dst = np.concatenate([e[:, 1], e[:, 0]])
    adjacency = CsrMatrix.from_triplets(src, dst, 1.0, (n, n), sum_duplicates=False)

    if isinstance(features, CsrMatrix):
        if features.shape != (n, L):
            raise GraphError(f"feature matrix shape {features.shape} != ({n}, {L})")
        x = features
    else:
        t = np.asarray(list(features) if not isinstance(features, np.ndarray) else features, dtype=np.float64)
        t = t.reshape(-1, 3)
        if len(t) and (np.any(t[:, :2] != np.round(t[:, :2]))):
            raise GraphError("feature triplet indices must be integers")
        x = CsrMatrix.from_triplets(t[:, 0].astype(np.int64), t[:, 1].astype(np.int64), t[:, 2], (n, L))

    raw = np.asarray(labels)
    if raw.shape != (n,):
        raise GraphError(f"labels length {raw.shape[0] if raw.ndim else 0} != n={n}")
    dense, names = densify_labels(raw)
    return SparseGraph(adjacency, x, dense, len(names), name, tuple(names))


@dataclass
class StatsReport:
    name: str
    n: int
    m: int
    L: int
    C: int
    density: float
    density_table: float
    degree_distribution: dict[int, int]
    cumulative_degree: list[tuple[int, int]]
    class_counts: list[int]
    isolated_nodes: int

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "m": self.m,
            "L": self.L,
            "C": self.C,
            "density": self.density,
            "density_table": self.density_table,
            "degree_distribution": {str(k): v for k, v in self.degree_distribution.items()},
            "cumulative_degree": self.cumulative_degree,
            "class_counts": self.class_counts,
            "isolated_nodes": self.isolated_nodes,
        }


def dataset_stats(g: SparseGraph) -> StatsReport:
    """Size, density and degree statistics of a graph.

    ``density`` is ``nnz(A) / (n (n-1))`` over stored directed entries;
    ``density_table`` is ``2 nnz(A) / n**2``, the convention under which the
    published benchmark statistics (e.g. Cora 2.88e-3) come out.
    ``cumulative_degree`` lists ``(d, #nodes with degree >= d)``.
    """
    n, nnz = g.n, g.adjacency.nnz
    deg = g.degrees()
    values, counts = np.unique(deg, return_counts=True)
    dist = {int(d): int(c) for d, c in zip(values, counts)}
    tail = np.cumsum(counts[::-1])[::-1]
    density = nnz / (n * (n - 1)) if n > 1 else 0.0
    return StatsReport(
        name=g.name,
        n=n,
        m=nnz,
        L=g.n_features,
        C=g.class_count,
        density=density,
        density_table=2 * nnz / n**2,
        degree_distribution=dist,
        cumulative_degree=[(int(d), int(c)) for d, c in zip(values, tail)],
        class_counts=np.bincount(g.labels, minlength=g.class_count).tolist(),
        isolated_nodes=int(np.sum(deg == 0)),
    )
