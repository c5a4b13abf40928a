"""Command-line entry point: ``glr {convert,stats,homophily,evaluate,sweep,report}``.

Human-readable summaries go to stdout, machine-readable results to files.
Exit codes: 0 clean, 1 fatal error, 2 completed with recorded failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dataset_io, evaluation, homophily
from .graph_core import dataset_stats
from .models import ModelKind, parse_model_list, valid_kinds

log = logging.getLogger("glr")

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2


class CliError(Exception):
    pass


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    return format(float(v), ".17g")


def _load(path: str):
    g, manifest = dataset_io.load_dataset(path)
    return g, manifest


# -- subcommands -------------------------------------------------------------

def cmd_convert(args) -> int:
    manifest = dataset_io.convert_edgelist(
        args.edges, args.features, args.labels, args.out,
        name=args.name, delimiter=args.delimiter, string_ids=args.string_ids,
        dense_features=args.dense_features, source_url=args.source_url, n_features=args.n_features,
    )
    print(f"wrote {args.out}: n={manifest.n} m={manifest.m} (symmetrized entries) L={manifest.L} C={manifest.C}")
    return EXIT_OK


def cmd_stats(args) -> int:
    reports = []
    for path in args.datasets:
        g, _ = _load(path)
        st = dataset_stats(g)
        reports.append(st.as_dict())
        print(f"{st.name}: n={st.n} m={st.m} L={st.L} C={st.C} "
              f"density={st.density:.3e} (nnz/(n(n-1))) density_table={st.density_table:.3e} (2nnz/n^2) "
              f"isolated={st.isolated_nodes}")
        print(f"  class counts: {st.class_counts}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stats.json").write_text(json.dumps(reports, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        rows = [(r["name"], d, c) for r in reports for d, c in r["cumulative_degree"]]
        _write_csv(out / "cumulative_degree.csv", ["dataset", "degree", "nodes_with_degree_at_least"], rows)
    return EXIT_OK


def _homophily_files(g, out: Path) -> homophily.HomophilyProfile:
    prof = homophily.homophily_profile(g)
    rows = [(u, _num(a), _num(b), d) for u, a, b, d in homophily.distribution_rows(g, prof)]
    _write_csv(out / "homophily" / f"{g.name}.csv", ["node", "label_homophily", "feature_homophily", "degree"], rows)
    return prof


def _write_homophily_summary(out: Path, profiles: dict) -> None:
    _write_csv(
        out / "homophily_summary.csv",
        ["dataset", "label_homophily", "feature_homophily", "excluded_isolated"],
        [(d, _num(p.graph_label), _num(p.graph_feature), p.excluded_isolated) for d, p in profiles.items()],
    )


def cmd_homophily(args) -> int:
    out = Path(args.out) if args.out else None
    profiles = {}
    for path in args.datasets:
        g, _ = _load(path)
        prof = _homophily_files(g, out) if out else homophily.homophily_profile(g)
        profiles[g.name] = prof
        print(f"{g.name}: label homophily {prof.graph_label:.4f}  feature homophily {prof.graph_feature:.4f}  "
              f"(isolated nodes excluded: {prof.excluded_isolated})")
    if out:
        _write_homophily_summary(out, profiles)
    return EXIT_OK


def _hyper_overrides(args) -> dict:
    return {
        "l2_penalty": args.l2_penalty,
        "max_iter": args.max_iter,
        "grad_tol": args.grad_tol,
        "normalize_rows": True if args.normalize_rows else None,
        "k_neighbors": args.k_neighbors,
        "embed_dim": args.embed_dim,
        "diffusion_alpha": args.diffusion_alpha,
        "diffusion_iters": args.diffusion_iters,
    }


def cmd_evaluate(args) -> int:
    specs = parse_model_list(args.model, _hyper_overrides(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    threads = 1 if args.deterministic else (args.threads or os.cpu_count() or 1)
    graphs, profiles, datasets = {}, {}, []
    for path in args.dataset:
        try:
            g, _ = _load(path)
        except Exception as err:
            log.error("cannot load %s: %s", path, err)
            datasets.append((Path(path).name, _raiser(err)))
            continue
        graphs[g.name] = g
        datasets.append((g.name, g))
        profiles[g.name] = _homophily_files(g, out)
    if profiles:
        _write_homophily_summary(out, profiles)
    with evaluation.JsonlSink(out / "runs.jsonl", with_times=not args.deterministic) as sink:
        records = evaluation.run_benchmark(
            datasets, specs, k=args.k, repeats=args.repeats, seed=args.seed,
            time_limit_seconds=args.time_limit, sink=sink, threads=threads,
        )
    summary = evaluation.summarize(records)
    (out / "summary.csv").write_text(summary.to_csv(), encoding="utf-8")
    print(summary.to_text())
    failures = [r for r in records if r.error]
    for r in failures[:10]:
        print(f"failure: dataset={r.dataset} model={r.model_name} fold={r.fold} repeat={r.repeat}: {r.error}", file=sys.stderr)
    print(f"{len(records)} records written to {out / 'runs.jsonl'}")
    return EXIT_PARTIAL if failures else EXIT_OK


def _raiser(err):
    def load():
        raise err
    return load


def cmd_sweep(args) -> int:
    try:
        fractions = [float(x) for x in args.fractions.split(",") if x.strip()]
    except ValueError:
        raise CliError(f"--fractions must be comma-separated floats, got {args.fractions!r}") from None
    (spec,) = parse_model_list([args.model], _hyper_overrides(args))
    g, _ = _load(args.dataset)
    records = evaluation.split_size_sweep(g.name, g, spec, fractions, seed=args.seed)
    out = Path(args.out)
    rows = [
        (r.dataset, r.model_name, _num(r.test_fraction), r.n_train, r.n_test, _num(r.accuracy),
         "" if args.deterministic else _num(r.fit_seconds + r.predict_seconds))
        for r in records
    ]
    _write_csv(out / "sweep.csv", ["dataset", "model", "test_fraction", "n_train", "n_test", "accuracy", "total_seconds"], rows)
    for r in records:
        print(f"test fraction {r.test_fraction:.2f}: accuracy {r.accuracy:.4f} ({r.n_test} test nodes)")
    return EXIT_OK


def cmd_report(args) -> int:
    run = Path(args.run_dir)
    runs = run / "runs.jsonl"
    hsum = run / "homophily_summary.csv"
    missing = [str(p) for p in (runs, hsum) if not p.exists()]
    if missing:
        raise CliError(f"missing report inputs: {', '.join(missing)}")
    records = evaluation.read_records(runs)
    summary = evaluation.summarize(records)

    rows = []
    for d in summary.datasets:
        for m in summary.models:
            c = summary.cells.get((d, m))
            if c is not None:
                rows.append((m, d, _num(c.mean), _num(c.mean_total_seconds)))
    _write_csv(run / "tradeoff.csv", ["model", "dataset", "mean_accuracy", "mean_total_seconds"], rows)

    hf = {}
    with hsum.open(encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["feature_homophily"]:
                hf[row["dataset"]] = float(row["feature_homophily"])
    avg, qualifying, threshold = homophily.average_rank_over_high_feature_homophily(summary.ranks, hf)
    _write_csv(run / "ranking_high_feature_homophily.csv", ["model", "average_rank", "qualifying_datasets", "median_feature_homophily"],
               [(m, _num(r), ";".join(qualifying), _num(threshold)) for m, r in homophily.ranked_models(avg)])

    dist_rows = []
    for d in summary.datasets:
        p = run / "homophily" / f"{d}.csv"
        if not p.exists():
            raise CliError(f"missing report input: {p}")
        with p.open(encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                dist_rows.append((d, row["node"], row["label_homophily"], row["feature_homophily"], row["degree"]))
    _write_csv(run / "homophily_distributions.csv", ["dataset", "node", "label_homophily", "feature_homophily", "degree"], dist_rows)

    print(f"high feature homophily subset (H_f >= {threshold:.4f}): {', '.join(qualifying)}")
    for m, r in homophily.ranked_models(avg):
        print(f"  {m:16s} average rank {r:.2f}")
    glr = ModelKind.GLR.value
    for d in summary.datasets:
        c_glr = summary.cells.get((d, glr))
        times = {m: summary.cells[(d, m)].mean_total_seconds for m in summary.models
                 if (d, m) in summary.cells and summary.cells[(d, m)].mean_total_seconds}
        if c_glr is None or not c_glr.mean_total_seconds or len(times) < 2:
            continue
        slowest = max(times, key=times.get)
        print(f"  {d}: slowest model {slowest} takes {times[slowest] / c_glr.mean_total_seconds:.1f}x GLR's time")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def _add_model_flags(p) -> None:
    p.add_argument("--l2-penalty", type=float, help="L2 strength per training sample (default 1.0)")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--grad-tol", type=float)
    p.add_argument("--normalize-rows", action="store_true", help="L2-normalize design rows before regression")
    p.add_argument("--k-neighbors", type=int)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--diffusion-alpha", type=float)
    p.add_argument("--diffusion-iters", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glr", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert raw edge/feature/label files to the canonical format")
    p.add_argument("--edges", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name")
    p.add_argument("--delimiter", help="field separator (default: commas or whitespace)")
    p.add_argument("--string-ids", action="store_true", help="node ids are strings, densified lexicographically")
    p.add_argument("--dense-features", action="store_true", help="feature file rows are 'node v0 v1 ...'")
    p.add_argument("--n-features", type=int)
    p.add_argument("--source-url")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("datasets", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("homophily", help="label and feature homophily")
    p.add_argument("datasets", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_homophily)

    p = sub.add_parser("evaluate", help="stratified k-fold benchmark")
    p.add_argument("--dataset", nargs="+", required=True)
    p.add_argument("--model", nargs="+", default=valid_kinds(), help=f"any of: {', '.join(valid_kinds())}")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--time-limit", type=float, default=300.0, help="seconds per (dataset, model)")
    p.add_argument("--threads", type=int, help="parallel (dataset, model) cells (default: CPU count)")
    p.add_argument("--deterministic", action="store_true", help="serial run with byte-identical runs.jsonl")
    p.add_argument("--out", default="results")
    _add_model_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="accuracy against test-set proportion")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", default="glr")
    p.add_argument("--fractions", default="0.1,0.25,0.5,0.75")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--deterministic", action="store_true", help="leave timings out of sweep.csv")
    p.add_argument("--out", default="results")
    _add_model_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="plot-ready CSVs from an evaluate run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_FATAL if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
