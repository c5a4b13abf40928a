"""GLR and the non-neural baselines behind one ``fit`` / ``predict`` pair.

Every model is transductive: the structure and features of all nodes are
visible at fit time, but only the labels of ``train_nodes`` are read.

Kinds
-----
glr               softmax regression on ``[A_u, X_u]``
lr_a, lr_x        softmax regression on ``A_u`` or ``X_u`` alone
diffusion_a       clamped label propagation over the random-walk matrix of A
diffusion_x       same, over the cosine-similarity operator ``Xn Xn^T``
knn_spectral_a    k-NN on the leading eigenvectors of A
knn_spectral_x    k-NN on the leading left singular vectors of X
"""
from __future__ import annotations

import enum
import json
import time
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import scipy.sparse.linalg as spla

from .graph_core import CsrMatrix, GraphError, SparseGraph, hconcat, row_normalize, row_submatrix
from .optimizer import FitConfig, SoftmaxParams, fit_softmax, predict_softmax


class ModelKind(str, enum.Enum):
    GLR = "glr"
    LR_A = "lr_a"
    LR_X = "lr_x"
    DIFFUSION_A = "diffusion_a"
    DIFFUSION_X = "diffusion_x"
    KNN_SPECTRAL_A = "knn_spectral_a"
    KNN_SPECTRAL_X = "knn_spectral_x"

    @property
    def family(self) -> str:
        return self.value.split("_")[0] if not self.value.startswith("lr") else "lr"


# display names used in reports
DISPLAY_NAMES = {
    ModelKind.GLR: "GLR",
    ModelKind.LR_A: "LR-A",
    ModelKind.LR_X: "LR-X",
    ModelKind.DIFFUSION_A: "Diffusion-A",
    ModelKind.DIFFUSION_X: "Diffusion-X",
    ModelKind.KNN_SPECTRAL_A: "KNN-A",
    ModelKind.KNN_SPECTRAL_X: "KNN-X",
}

_FIT_KEYS = {"l2_penalty": float, "max_iter": int, "grad_tol": float, "normalize_rows": bool}
_DEFAULTS = {
    "glr": {},
    "lr": {},
    "diffusion": {"diffusion_alpha": 0.9, "diffusion_iters": 50, "diffusion_tol": 1e-6},
    "knn": {"k_neighbors": 5, "embed_dim": 16},
}
_ALLOWED = {
    "glr": _FIT_KEYS,
    "lr": _FIT_KEYS,
    "diffusion": {"diffusion_alpha": float, "diffusion_iters": int, "diffusion_tol": float},
    "knn": {"k_neighbors": int, "embed_dim": int},
}


class DiffusionConvergenceWarning(RuntimeWarning):
    pass


def valid_kinds() -> list[str]:
    return [k.value for k in ModelKind]


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    hyperparams: dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            kind = ModelKind(self.kind)
        except ValueError:
            raise ValueError(f"unknown model kind {self.kind!r}; valid kinds: {', '.join(valid_kinds())}") from None
        object.__setattr__(self, "kind", kind)
        allowed = _ALLOWED[kind.family]
        params = dict(_DEFAULTS[kind.family])
        for key, value in dict(self.hyperparams).items():
            if key not in allowed:
                raise ValueError(f"hyperparameter {key!r} not valid for {kind.value}; allowed: {sorted(allowed)}")
            params[key] = allowed[key](value)
        if kind.family == "diffusion":
            if not 0.0 < params["diffusion_alpha"] < 1.0:
                raise ValueError("diffusion_alpha must lie in (0, 1)")
            if params["diffusion_iters"] < 1:
                raise ValueError("diffusion_iters must be >= 1")
        if kind.family == "knn" and (params["k_neighbors"] < 1 or params["embed_dim"] < 1):
            raise ValueError("k_neighbors and embed_dim must be >= 1")
        if kind.family in ("glr", "lr"):
            FitConfig(**{k: v for k, v in params.items() if k in _FIT_KEYS})
        object.__setattr__(self, "hyperparams", params)

    @property
    def name(self) -> str:
        return self.kind.value

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "hyperparams": dict(sorted(self.hyperparams.items()))}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj: dict | str) -> "ModelSpec":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(obj["kind"], obj.get("hyperparams", {}))

    def fit_config(self, seed: int = 0) -> FitConfig:
        return FitConfig(seed=seed, **{k: v for k, v in self.hyperparams.items() if k in _FIT_KEYS})

    def __hash__(self):
        return hash(self.dumps())


@dataclass(frozen=True, eq=False)
class SoftmaxState:
    params: SoftmaxParams
    layout: tuple  # ((block, width), ...)


@dataclass(frozen=True, eq=False)
class DiffusionState:
    scores: np.ndarray  # n x C
    n_iter: int
    converged: bool


@dataclass(frozen=True, eq=False)
class KnnState:
    embedding: np.ndarray  # n x dim
    train_nodes: np.ndarray
    train_labels: np.ndarray
    k: int


@dataclass(frozen=True, eq=False)
class TrainedModel:
    spec: ModelSpec
    state: SoftmaxState | DiffusionState | KnnState
    n_nodes: int
    n_classes: int
    fit_seconds: float


# -- design matrices ---------------------------------------------------------

def design_matrix(kind: ModelKind, g: SparseGraph) -> tuple[CsrMatrix, tuple]:
    """Full n-row input matrix of a regression model and its column layout."""
    if kind is ModelKind.GLR:
        return hconcat(g.adjacency, g.features), (("adjacency", g.n), ("features", g.n_features))
    if kind is ModelKind.LR_A:
        return g.adjacency, (("adjacency", g.n),)
    if kind is ModelKind.LR_X:
        return g.features, (("features", g.n_features),)
    raise ValueError(f"{kind.value} has no design matrix")


# -- diffusion ---------------------------------------------------------------

def adjacency_operator(g: SparseGraph) -> Callable[[np.ndarray], np.ndarray]:
    """``F -> P F`` with ``P`` the row-normalized adjacency (zero rows stay zero)."""
    p = row_normalize(g.adjacency, "l1").to_scipy()
    return lambda f: np.asarray(p @ f)


def feature_operator(g: SparseGraph) -> Callable[[np.ndarray], np.ndarray]:
    """``F -> P F`` with ``P`` the row-normalized ``Xn Xn^T`` (never materialized)."""
    xn = row_normalize(g.features, "l2").to_scipy()
    xt = xn.T.tocsr()
    sums = np.asarray(xn @ (xt @ np.ones(g.n))).ravel()
    inv = np.zeros(g.n)
    np.divide(1.0, sums, out=inv, where=sums > 0)
    return lambda f: inv[:, None] * np.asarray(xn @ np.asarray(xt @ f))


def diffuse(
    operator: Callable[[np.ndarray], np.ndarray],
    seeds: np.ndarray,
    clamp: np.ndarray,
    alpha: float,
    n_iter: int,
    tol: float = 0.0,
) -> tuple[np.ndarray, int, bool]:
    """Iterate ``F <- alpha P F + (1 - alpha) F0`` and re-clamp the labeled rows.

    ``seeds`` is the initial score matrix ``F0`` (one-hot on labeled rows,
    zero elsewhere) and ``clamp`` the indices of labeled rows.  Stops early
    once the max-abs update falls below ``tol`` (``tol=0`` runs every
    iteration).  Returns ``(F, iterations, converged)``.
    """
    f = seeds.copy()
    base = (1.0 - alpha) * seeds
    for it in range(1, n_iter + 1):
        nxt = alpha * operator(f) + base
        nxt[clamp] = seeds[clamp]
        delta = np.max(np.abs(nxt - f)) if f.size else 0.0
        f = nxt
        if delta < tol:
            return f, it, True
    return f, n_iter, tol == 0.0


# -- spectral embedding ------------------------------------------------------

def _fix_signs(v: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def spectral_embed(m: CsrMatrix, dim: int, seed: int = 0, mode: str = "auto") -> np.ndarray:
    """Leading eigenvectors (symmetric input) or left singular vectors.

    Columns are ordered by decreasing eigenvalue / singular value, are
    orthonormal, and each has its largest-magnitude entry positive.
    ``mode`` forces ``"eig"`` or ``"svd"``; ``"auto"`` picks ``eig`` for
    symmetric square input.  Lanczos (ARPACK) is started from a seeded
    random vector, so the result is reproducible.
    """
    n_rows, n_cols = m.shape
    if dim < 1 or dim >= n_rows:
        raise GraphError(f"embedding dimension must satisfy 1 <= dim < n (got dim={dim}, n={n_rows})")
    if mode == "auto":
        mode = "eig" if n_rows == n_cols and m.equals(m.transpose()) else "svd"
    rng = np.random.default_rng(seed)
    a = m.to_scipy()
    if mode == "eig":
        if n_rows != n_cols:
            raise GraphError("eigen-embedding needs a square matrix")
        if dim >= n_rows - 1:
            vals, vecs = np.linalg.eigh(m.to_dense())
        else:
            v0 = rng.uniform(-1.0, 1.0, n_rows)
            try:
                vals, vecs = spla.eigsh(a, k=dim, which="LA", v0=v0, tol=0.0)
            except spla.ArpackNoConvergence as err:
                raise GraphError(f"eigen-embedding did not converge: {err}") from err
        order = np.argsort(-vals, kind="stable")[:dim]
        vecs = vecs[:, order]
    elif mode == "svd":
        rank_cap = min(n_rows, n_cols)
        if dim > rank_cap:
            warnings.warn(f"embed_dim {dim} exceeds matrix rank bound {rank_cap}; truncating", RuntimeWarning, stacklevel=2)
            dim = rank_cap
        if dim >= rank_cap - 1:
            u, s, _ = np.linalg.svd(m.to_dense(), full_matrices=False)
        else:
            v0 = rng.uniform(-1.0, 1.0, rank_cap)
            try:
                u, s, _ = spla.svds(a, k=dim, v0=v0, tol=0.0, solver="arpack")
            except spla.ArpackNoConvergence as err:
                raise GraphError(f"singular-vector embedding did not converge: {err}") from err
        order = np.argsort(-s, kind="stable")[:dim]
        vecs = u[:, order]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return _fix_signs(np.ascontiguousarray(vecs))


# -- k-NN --------------------------------------------------------------------

def knn_vote(
    embedding: np.ndarray,
    train_nodes: np.ndarray,
    train_labels: np.ndarray,
    query_nodes: np.ndarray,
    k: int,
    n_classes: int,
    chunk: int = 512,
) -> np.ndarray:
    """Unweighted majority vote among the ``k`` nearest labeled points.

    Distance ties go to the smaller node id, vote ties to the smaller class id.
    """
    order = np.argsort(train_nodes, kind="stable")
    train_nodes, train_labels = train_nodes[order], train_labels[order]
    pts = embedding[train_nodes]
    k = min(k, len(train_nodes))
    out = np.empty(len(query_nodes), dtype=np.int64)
    for lo in range(0, len(query_nodes), chunk):
        q = embedding[query_nodes[lo : lo + chunk]]
        dist = np.sum((q[:, None, :] - pts[None, :, :]) ** 2, axis=2)
        # stable sort over node-id-ordered columns breaks distance ties toward smaller ids
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
        votes = np.zeros((len(q), n_classes), dtype=np.int64)
        np.add.at(votes, (np.repeat(np.arange(len(q)), k), train_labels[nearest].ravel()), 1)
        out[lo : lo + chunk] = np.argmax(votes, axis=1)
    return out


# -- fit / predict -----------------------------------------------------------

def _check_nodes(nodes, n: int, what: str, unique: bool) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=np.int64).ravel()
    if len(nodes) and (nodes.min() < 0 or nodes.max() >= n):
        raise GraphError(f"{what} index out of range [0, {n})")
    if unique and len(np.unique(nodes)) != len(nodes):
        raise GraphError(f"{what} contain duplicates")
    return nodes


def fit(spec: ModelSpec, g: SparseGraph, train_nodes, seed: int = 0) -> TrainedModel:
    """Train ``spec`` on ``g`` using the labels of ``train_nodes`` only."""
    train = _check_nodes(train_nodes, g.n, "train nodes", unique=True)
    if len(train) == 0:
        raise GraphError("empty training set")
    y_train = g.labels[train]
    hp = spec.hyperparams
    start = time.perf_counter()
    kind = spec.kind
    if kind.family in ("glr", "lr"):
        full, layout = design_matrix(kind, g)
        params = fit_softmax(row_submatrix(full, train), y_train, spec.fit_config(seed), n_classes=g.class_count)
        state = SoftmaxState(params, layout)
    elif kind.family == "diffusion":
        op = adjacency_operator(g) if kind is ModelKind.DIFFUSION_A else feature_operator(g)
        seeds = np.zeros((g.n, g.class_count))
        seeds[train, y_train] = 1.0
        scores, n_iter, ok = diffuse(op, seeds, train, hp["diffusion_alpha"], hp["diffusion_iters"], hp["diffusion_tol"])
        if not ok:
            warnings.warn(
                f"{kind.value}: no convergence to {hp['diffusion_tol']} within {n_iter} iterations; using last iterate",
                DiffusionConvergenceWarning,
                stacklevel=2,
            )
        state = DiffusionState(scores, n_iter, ok)
    else:
        if kind is ModelKind.KNN_SPECTRAL_A:
            emb = spectral_embed(g.adjacency, hp["embed_dim"], seed, mode="eig")
        else:
            emb = spectral_embed(g.features, min(hp["embed_dim"], g.n - 1), seed, mode="svd")
        state = KnnState(emb, train.copy(), y_train.copy(), hp["k_neighbors"])
    return TrainedModel(spec, state, g.n, g.class_count, time.perf_counter() - start)


def predict(model: TrainedModel, g: SparseGraph, test_nodes) -> np.ndarray:
    if g.n != model.n_nodes or g.class_count != model.n_classes:
        raise GraphError(
            f"model was fit on a graph with n={model.n_nodes}, C={model.n_classes}; got n={g.n}, C={g.class_count}"
        )
    test = _check_nodes(test_nodes, g.n, "test nodes", unique=False)
    state = model.state
    if isinstance(state, SoftmaxState):
        full, layout = design_matrix(model.spec.kind, g)
        if layout != state.layout:
            raise GraphError(f"design layout {layout} differs from the fitted layout {state.layout}")
        return predict_softmax(state.params, row_submatrix(full, test))[0]
    if isinstance(state, DiffusionState):
        return np.argmax(state.scores[test], axis=1)
    return knn_vote(state.embedding, state.train_nodes, state.train_labels, test, state.k, model.n_classes)


def scores(model: TrainedModel, g: SparseGraph, nodes) -> np.ndarray:
    """Per-class scores for ``nodes``: probabilities for softmax and diffusion models."""
    nodes = _check_nodes(nodes, g.n, "nodes", unique=False)
    state = model.state
    if isinstance(state, SoftmaxState):
        full, _ = design_matrix(model.spec.kind, g)
        return predict_softmax(state.params, row_submatrix(full, nodes))[1]
    if isinstance(state, DiffusionState):
        return state.scores[nodes]
    raise TypeError("k-NN models expose votes only; use predict()")


def parse_model_list(names: list[str], overrides: dict[str, Any] | None = None) -> list[ModelSpec]:
    """Build specs from kind names, applying each override only where it is valid."""
    overrides = overrides or {}
    specs = []
    for name in names:
        kind = ModelKind(name) if name in valid_kinds() else None
        if kind is None:
            raise ValueError(f"unknown model kind {name!r}; valid kinds: {', '.join(valid_kinds())}")
        allowed = _ALLOWED[kind.family]
        specs.append(ModelSpec(kind, {k: v for k, v in overrides.items() if k in allowed and v is not None}))
    return specs
