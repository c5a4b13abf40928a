"""Stratified k-fold benchmark harness.

Folds are fixed by a seed and shared by every model; each fold experiment is
repeated ``repeats`` times with a distinct model seed and the accuracy is
averaged over all folds and repeats.  Per dataset, models are ranked by mean
accuracy (ties share the averaged rank; timed-out or failed models share the
worst rank) and the overall rank is the mean over datasets.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import threading
import time
import traceback
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .graph_core import SparseGraph
from .models import ModelSpec, fit, predict

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class FoldError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    seed: int
    assignments: np.ndarray

    def test_nodes(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_nodes(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def counts(self, labels: np.ndarray) -> np.ndarray:
        """class x fold membership counts."""
        out = np.zeros((labels.max() + 1, self.k), dtype=np.int64)
        np.add.at(out, (labels, self.assignments), 1)
        return out


def make_folds(labels, k: int, seed: int, allow_small_classes: bool = False) -> FoldPlan:
    """Seeded stratified fold assignment.

    Nodes of each class are shuffled and dealt round-robin; the dealing
    position carries over from one class to the next so that overall fold
    sizes also differ by at most one.  A class with fewer than ``k`` members
    is an error unless ``allow_small_classes`` is set, in which case it is
    dealt the same way and some folds simply lack that class in test.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise FoldError("k must be >= 2")
    if len(labels) < k:
        raise FoldError(f"{len(labels)} nodes cannot fill {k} folds")
    classes, sizes = np.unique(labels, return_counts=True)
    small = classes[sizes < k]
    if len(small):
        msg = f"classes {small.tolist()} have fewer than k={k} members"
        if not allow_small_classes:
            raise FoldError(msg)
        warnings.warn(msg + "; their folds cannot all be stratified", RuntimeWarning, stacklevel=2)
    rng = np.random.default_rng(seed)
    assignments = np.empty(len(labels), dtype=np.int64)
    offset = 0
    for c in classes:
        members = rng.permutation(np.flatnonzero(labels == c))
        assignments[members] = (offset + np.arange(len(members))) % k
        offset += len(members)
    return FoldPlan(k, seed, assignments)


def stratified_holdout(labels, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """One stratified train/test split with about ``test_fraction`` of each class in test."""
    if not 0.0 < test_fraction < 1.0:
        raise FoldError("test fraction must lie in (0, 1)")
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    test = []
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        n_test = int(round(test_fraction * len(members)))
        if n_test >= len(members):
            raise FoldError(f"test fraction {test_fraction} leaves class {c} empty in train")
        test.append(members[:n_test])
    test = np.sort(np.concatenate(test))
    train = np.setdiff1d(np.arange(len(labels)), test)
    return train, test


def fold_seed(seed: int, fold: int, repeat: int) -> int:
    return int(np.random.SeedSequence([seed, fold, repeat]).generate_state(1, np.uint32)[0])


@dataclass
class RunRecord:
    dataset: str
    model: ModelSpec
    fold: int
    repeat: int
    seed: int
    accuracy: float | None = None
    fit_seconds: float | None = None
    predict_seconds: float | None = None
    timed_out: bool = False
    error: str | None = None
    n_train: int = 0
    n_test: int = 0
    test_fraction: float | None = None

    @property
    def ok(self) -> bool:
        return self.accuracy is not None

    @property
    def model_name(self) -> str:
        return self.model.name

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.model.dumps().encode()).hexdigest()[:12]

    def to_json(self, with_times: bool = True) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "dataset": self.dataset,
            "model": self.model.to_json(),
            "config_hash": self.config_hash,
            "fold": self.fold,
            "repeat": self.repeat,
            "seed": self.seed,
            "accuracy": self.accuracy,
            "fit_seconds": self.fit_seconds if with_times else None,
            "predict_seconds": self.predict_seconds if with_times else None,
            "timed_out": self.timed_out,
            "error": self.error,
            "n_train": self.n_train,
            "n_test": self.n_test,
        }
        if self.test_fraction is not None:
            d["test_fraction"] = self.test_fraction
        return d

    @classmethod
    def from_json(cls, d: dict) -> "RunRecord":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported record schema {d.get('schema_version')!r}")
        return cls(
            dataset=d["dataset"],
            model=ModelSpec.from_json(d["model"]),
            fold=d["fold"],
            repeat=d["repeat"],
            seed=d["seed"],
            accuracy=d["accuracy"],
            fit_seconds=d["fit_seconds"],
            predict_seconds=d["predict_seconds"],
            timed_out=d["timed_out"],
            error=d["error"],
            n_train=d.get("n_train", 0),
            n_test=d.get("n_test", 0),
            test_fraction=d.get("test_fraction"),
        )

    def key(self) -> tuple:
        return (self.dataset, self.model.dumps(), self.fold, self.repeat)


class JsonlSink:
    """Append-only JSON-lines record writer, safe for concurrent ``write`` calls.

    With ``with_times=False`` the wall-clock fields are written as null to
    the main file and kept in a ``timings.jsonl`` sidecar, so the main file
    is byte-reproducible.
    """

    def __init__(self, path: str | Path, with_times: bool = True):
        self.path = Path(path)
        self.with_times = with_times
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", encoding="utf-8", newline="\n")
        self._timings = None
        if not with_times:
            self._timings = (self.path.parent / "timings.jsonl").open("w", encoding="utf-8", newline="\n")

    def write(self, records: Iterable[RunRecord]) -> None:
        with self._lock:
            for r in records:
                self._fh.write(json.dumps(r.to_json(self.with_times), sort_keys=True) + "\n")
                if self._timings is not None:
                    t = {"dataset": r.dataset, "config_hash": r.config_hash, "fold": r.fold, "repeat": r.repeat,
                         "fit_seconds": r.fit_seconds, "predict_seconds": r.predict_seconds}
                    self._timings.write(json.dumps(t, sort_keys=True) + "\n")
            self._fh.flush()

    def close(self) -> None:
        self._fh.close()
        if self._timings is not None:
            self._timings.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_records(path: str | Path) -> list[RunRecord]:
    """Load ``runs.jsonl``; null timings are filled from a ``timings.jsonl`` sidecar if present."""
    path = Path(path)
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    records.append(RunRecord.from_json(json.loads(line)))
                except (KeyError, ValueError) as err:
                    raise ValueError(f"{path}:{lineno}: bad record: {err}") from err
    sidecar = path.parent / "timings.jsonl"
    if sidecar.exists():
        times = {}
        with sidecar.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    t = json.loads(line)
                    times[(t["dataset"], t["config_hash"], t["fold"], t["repeat"])] = t
        for r in records:
            t = times.get((r.dataset, r.config_hash, r.fold, r.repeat))
            if t is not None and r.fit_seconds is None:
                r.fit_seconds, r.predict_seconds = t["fit_seconds"], t["predict_seconds"]
    return records


def _run_cell(
    name: str,
    g: SparseGraph,
    spec: ModelSpec,
    plan: FoldPlan,
    repeats: int,
    seed: int,
    time_limit: float,
) -> list[RunRecord]:
    records = []
    elapsed = 0.0
    for fold in range(plan.k):
        train, test = plan.train_nodes(fold), plan.test_nodes(fold)
        for rep in range(repeats):
            s = fold_seed(seed, fold, rep)
            rec = RunRecord(name, spec, fold, rep, s, n_train=len(train), n_test=len(test))
            try:
                t0 = time.perf_counter()
                model = fit(spec, g, train, seed=s)
                t1 = time.perf_counter()
                pred = predict(model, g, test)
                t2 = time.perf_counter()
            except Exception as err:  # recorded, the benchmark goes on
                log.error("%s/%s fold %d repeat %d failed: %s", name, spec.name, fold, rep, err)
                log.debug("%s", traceback.format_exc())
                rec.error = f"{type(err).__name__}: {err}"
                records.append(rec)
                continue
            rec.fit_seconds, rec.predict_seconds = t1 - t0, t2 - t1
            rec.accuracy = float(np.mean(pred == g.labels[test]))
            records.append(rec)
            elapsed += t2 - t0
            if elapsed > time_limit:
                log.warning("%s/%s exceeded the %.0f s time limit", name, spec.name, time_limit)
                return [
                    RunRecord(name, spec, f, r, fold_seed(seed, f, r), timed_out=True,
                              n_train=len(plan.train_nodes(f)), n_test=len(plan.test_nodes(f)))
                    for f in range(plan.k)
                    for r in range(repeats)
                ]
    return records


def run_benchmark(
    datasets: Sequence[tuple[str, SparseGraph | Callable[[], SparseGraph]]],
    models: Sequence[ModelSpec],
    k: int = 4,
    repeats: int = 3,
    seed: int = 0,
    time_limit_seconds: float = 300.0,
    sink: JsonlSink | None = None,
    threads: int = 1,
) -> list[RunRecord]:
    """Run every (dataset, model, fold, repeat) experiment.

    ``datasets`` pairs a name with a graph or a zero-argument loader; a
    loader that raises produces one failure record per model and fold
    experiment.  Records of a (dataset, model) cell are emitted together
    once the cell finishes, in deterministic order when ``threads == 1``.
    """
    out: list[RunRecord] = []
    lock = threading.Lock()

    def emit(recs):
        with lock:
            out.extend(recs)
        if sink is not None:
            sink.write(recs)

    jobs = []
    for name, source in datasets:
        try:
            g = source() if callable(source) else source
            plan = make_folds(g.labels, k, seed, allow_small_classes=True)
        except Exception as err:
            log.error("dataset %s unusable: %s", name, err)
            emit([
                RunRecord(name, spec, f, r, fold_seed(seed, f, r), error=f"dataset: {type(err).__name__}: {err}")
                for spec in models
                for f in range(k)
                for r in range(repeats)
            ])
            continue
        for spec in models:
            jobs.append((name, g, spec, plan))

    def work(job):
        name, g, spec, plan = job
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            recs = _run_cell(name, g, spec, plan, repeats, seed, time_limit_seconds)
        emit(recs)

    if threads <= 1:
        for job in jobs:
            work(job)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, jobs))
    return out


def split_size_sweep(
    name: str,
    g: SparseGraph,
    spec: ModelSpec,
    test_fractions: Sequence[float],
    seed: int = 0,
) -> list[RunRecord]:
    """One stratified holdout per test fraction; ``fold`` indexes the fraction."""
    records = []
    for i, frac in enumerate(test_fractions):
        train, test = stratified_holdout(g.labels, frac, fold_seed(seed, i, 0))
        s = fold_seed(seed, i, 0)
        t0 = time.perf_counter()
        model = fit(spec, g, train, seed=s)
        t1 = time.perf_counter()
        pred = predict(model, g, test)
        t2 = time.perf_counter()
        records.append(RunRecord(
            name, spec, i, 0, s,
            accuracy=float(np.mean(pred == g.labels[test])),
            fit_seconds=t1 - t0, predict_seconds=t2 - t1,
            n_train=len(train), n_test=len(test), test_fraction=float(frac),
        ))
    return records


# -- summary -----------------------------------------------------------------

@dataclass
class CellSummary:
    mean: float | None
    std: float | None
    mean_fit_seconds: float | None
    mean_predict_seconds: float | None
    n_records: int
    timed_out: bool
    failed: int

    @property
    def mean_total_seconds(self) -> float | None:
        if self.mean_fit_seconds is None or self.mean_predict_seconds is None:
            return None
        return self.mean_fit_seconds + self.mean_predict_seconds


@dataclass
class BenchmarkSummary:
    cells: dict  # (dataset, model) -> CellSummary
    ranks: dict  # dataset -> model -> rank
    average_rank: dict  # model -> mean rank over datasets
    datasets: list = field(default_factory=list)
    models: list = field(default_factory=list)

    def table_rows(self) -> list[list[str]]:
        rows = [["model", *self.datasets, "avg_rank"]]
        for m in self.models:
            row = [m]
            for d in self.datasets:
                c = self.cells.get((d, m))
                if c is None:
                    row.append("")
                elif c.timed_out:
                    row.append("timeout")
                elif c.mean is None:
                    row.append("failed")
                else:
                    row.append(f"{c.mean:.4f} ± {c.std:.4f}")
            row.append(f"{self.average_rank[m]:.2f}")
            rows.append(row)
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.table_rows())
        return buf.getvalue()

    def to_text(self) -> str:
        rows = self.table_rows()
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def rank_models(means: dict[str, float | None]) -> dict[str, float]:
    """Rank by decreasing mean; ties share the averaged rank, ``None`` gets the worst rank."""
    names = sorted(means)
    ok = [m for m in names if means[m] is not None]
    ranks = {}
    if ok:
        for m, r in zip(ok, rankdata([-means[m] for m in ok], method="average")):
            ranks[m] = float(r)
    for m in names:
        if means[m] is None:
            ranks[m] = float(len(names))
    return ranks


def summarize(records: Sequence[RunRecord]) -> BenchmarkSummary:
    if not records:
        raise ValueError("no records to summarize")
    datasets = list(dict.fromkeys(r.dataset for r in records))
    models = list(dict.fromkeys(r.model_name for r in records))
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.dataset, r.model_name), []).append(r)
    cells = {}
    for key, recs in groups.items():
        acc = [r.accuracy for r in recs if r.ok]
        timed_out = any(r.timed_out for r in recs)
        failed = sum(1 for r in recs if not r.ok and not r.timed_out)
        complete = bool(acc) and not timed_out and failed == 0
        fits = [r.fit_seconds for r in recs if r.fit_seconds is not None]
        preds = [r.predict_seconds for r in recs if r.predict_seconds is not None]
        cells[key] = CellSummary(
            mean=float(np.mean(acc)) if complete else None,
            std=float(np.std(acc)) if complete else None,
            mean_fit_seconds=float(np.mean(fits)) if fits else None,
            mean_predict_seconds=float(np.mean(preds)) if preds else None,
            n_records=len(recs),
            timed_out=timed_out,
            failed=failed,
        )
    ranks = {}
    for d in datasets:
        means = {m: cells[(d, m)].mean for m in models if (d, m) in cells}
        ranks[d] = rank_models(means)
    average_rank = {m: float(np.mean([ranks[d][m] for d in datasets if m in ranks[d]])) for m in models}
    return BenchmarkSummary(cells, ranks, average_rank, datasets, models)
