"""Command-line entry point for every offline workflow.

Subcommands: ingest, split, train, cartography, simulate, report,
serve, kappa, synth, select.  Flags override values from an optional
``--config`` JSON file; every run with an output directory writes the
fully resolved configuration next to its artifacts, so a run is
reproducible from that file alone.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import acquisition, cartography, reporting, synth
from .classifier import (
    FeatureHasher,
    TrainConfig,
    featurize_matrix,
    load_checkpoint,
    predict_proba_matrix,
    save_checkpoint,
)
from .corpus import (
    CorpusError,
    cohens_kappa,
    export_corpus,
    ingest_corpus,
    label_frequency,
    load_scheme,
    save_scheme,
    split_sessions,
)
from .experiment import (
    ExperimentConfig,
    aggregate_over_seeds,
    cumulative_sampling_frequency,
    prepare_data,
    run_simulation,
)
from .service import create_app


def _resolved(args: argparse.Namespace) -> dict:
    skip = {"func", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _emit_config(args: argparse.Namespace, out: Path) -> str:
    out.mkdir(parents=True, exist_ok=True)
    resolved = _resolved(args)
    (out / "resolved_config.json").write_text(
        json.dumps(resolved, indent=2, default=str) + "\n", encoding="utf-8"
    )
    return reporting.config_hash(resolved)


def _hasher(args: argparse.Namespace) -> FeatureHasher:
    return FeatureHasher(
        ngram_min=1, ngram_max=args.ngram_max, dim=args.dim, salt=args.salt
    )


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.train_batch,
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        seed=args.train_seed,
    )


def _load_split(args, corpus):
    if getattr(args, "split", None):
        spec = json.loads(Path(args.split).read_text(encoding="utf-8"))
        train_sessions = frozenset(spec["train_sessions"])
        test_sessions = frozenset(spec["test_sessions"])
    else:
        split = split_sessions(corpus, args.test_fraction, args.split_seed)
        train_sessions, test_sessions = split.train_sessions, split.test_sessions
    return corpus.subset(train_sessions), corpus.subset(test_sessions)


# ------------------------------------------------------------- subcommands

def cmd_ingest(args) -> int:
    scheme = load_scheme(args.scheme)
    corpus = ingest_corpus(args.corpus, scheme)
    labeled = corpus.labeled_sentences()
    print(
        f"sessions={len(corpus.session_ids())} utterances={len(corpus.utterances)} "
        f"sentences={len(corpus.sentences)} labeled={len(labeled)}"
    )
    if args.out:
        out = Path(args.out)
        cfg_hash = _emit_config(args, out)
        export_corpus(corpus, out / "corpus.jsonl")
        summary = {
            "sessions": len(corpus.session_ids()),
            "utterances": len(corpus.utterances),
            "sentences": len(corpus.sentences),
            "labeled": len(labeled),
            "label_frequency": label_frequency(corpus) if labeled else {},
            "config_hash": cfg_hash,
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    return 0


def cmd_split(args) -> int:
    scheme = load_scheme(args.scheme)
    corpus = ingest_corpus(args.corpus, scheme)
    split = split_sessions(corpus, args.test_fraction, args.split_seed)
    out = Path(args.out)
    _emit_config(args, out)
    payload = {
        "train_sessions": sorted(split.train_sessions),
        "test_sessions": sorted(split.test_sessions),
        "seed": split.seed,
    }
    (out / "split.json").write_text(json.dumps(payload, indent=2), encoding="utf-8")
    print(f"train={len(split.train_sessions)} test={len(split.test_sessions)}")
    return 0


def cmd_train(args) -> int:
    scheme = load_scheme(args.scheme)
    corpus = ingest_corpus(args.corpus, scheme)
    hasher = _hasher(args)
    out = Path(args.out)
    _emit_config(args, out)
    if args.test_fraction > 0:
        train_corpus, test_corpus = _load_split(args, corpus)
    else:
        train_corpus, test_corpus = corpus, None
    _, result = cartography.run_cartography(
        train_corpus.labeled_sentences(), scheme, hasher, _train_config(args)
    )
    save_checkpoint(out / "checkpoint.json", result.params, hasher)
    if test_corpus is not None and test_corpus.labeled_sentences():
        from .experiment import accuracy, macro_f1

        test = test_corpus.labeled_sentences()
        probs = predict_proba_matrix(
            result.params, featurize_matrix([s.text for s in test], hasher)
        )
        tags = scheme.names()
        preds = [tags[i] for i in probs.argmax(axis=1)]
        golds = [s.gold_label for s in test]
        metrics = {
            "accuracy": accuracy(preds, golds),
            "macro_f1": macro_f1(preds, golds, scheme),
        }
        (out / "metrics.json").write_text(json.dumps(metrics, indent=2), encoding="utf-8")
        print(f"accuracy={metrics['accuracy']:.4f} macro_f1={metrics['macro_f1']:.4f}")
    return 0


def cmd_cartography(args) -> int:
    scheme = load_scheme(args.scheme)
    corpus = ingest_corpus(args.corpus, scheme)
    out = Path(args.out)
    cfg_hash = _emit_config(args, out)
    sentences = corpus.labeled_sentences()
    points, _ = cartography.run_cartography(
        sentences, scheme, _hasher(args), _train_config(args)
    )
    tags = {s.id: s.gold_label for s in sentences}
    roles = {s.id: s.role for s in sentences}
    header, rows = reporting.data_map_table(points, tags, roles)
    reporting.write_table(out / "data_map.csv", header, rows, cfg_hash)
    (out / "data_map.svg").write_text(reporting.svg_data_map(points), encoding="utf-8")
    dist = cartography.per_label_bucket_distribution(points, tags)
    dist_rows = [
        [tag, *(reporting._fmt(frac[bk]) for bk in cartography.BUCKETS)]
        for tag, frac in dist.items()
    ]
    reporting.write_table(
        out / "bucket_distribution.csv",
        ["tag", *cartography.BUCKETS],
        dist_rows,
        cfg_hash,
    )
    reporting.write_manifest(out)
    print(f"mapped {len(points)} instances -> {out}")
    return 0


def cmd_simulate(args) -> int:
    scheme = load_scheme(args.scheme)
    corpus = ingest_corpus(args.corpus, scheme)
    out = Path(args.out)
    cfg_hash = _emit_config(args, out)
    train_corpus, test_corpus = _load_split(args, corpus)
    pool = train_corpus.labeled_sentences()
    test = test_corpus.labeled_sentences()
    seeds = _parse_seeds(args.seeds)
    config = ExperimentConfig(
        initial_labeled=args.initial,
        batch_size=args.batch,
        rounds=args.rounds,
        seeds=tuple(seeds),
        train=_train_config(args),
        hasher=_hasher(args),
    )
    strategies = [
        acquisition.StrategyConfig(kind=kind, batch_size=args.batch, seed=0)
        for kind in args.strategy
    ]
    prepared = prepare_data(pool, test, scheme, config.hasher)
    cells = {}

    def _cell(job):
        strategy, seed = job
        return (strategy.kind, seed), run_simulation(
            pool, test, scheme, strategy, config, seed, _prepared=prepared
        )

    jobs = [(s, seed) for s in strategies for seed in seeds]
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool_exec:
            for key, results in pool_exec.map(_cell, jobs):
                cells[key] = results
    else:
        for job in jobs:
            key, results = _cell(job)
            cells[key] = results

    tag_names = scheme.names()
    for (kind, seed), results in sorted(cells.items()):
        header = [
            "round",
            "labeled_count",
            "accuracy",
            "macro_f1",
            "partial",
            "acquired_ids",
            *(f"cum_{t}" for t in tag_names),
            *(f"f1_{t}" for t in tag_names),
        ]
        rows = [
            [
                r.round,
                r.labeled_count,
                reporting._fmt(r.accuracy),
                reporting._fmt(r.macro_f1),
                int(r.partial),
                ";".join(r.acquired_ids),
                *(r.cumulative_label_counts.get(t, 0) for t in tag_names),
                *(reporting._fmt(r.per_label_f1.get(t, 0.0)) for t in tag_names),
            ]
            for r in results
        ]
        reporting.write_table(out / f"rounds_{kind}_seed{seed}.csv", header, rows, cfg_hash)
        rounds, counts = cumulative_sampling_frequency(results)
        sf_header, sf_rows = reporting.sampling_frequency_table(rounds, counts)
        reporting.write_table(
            out / f"sampling_{kind}_seed{seed}.csv", sf_header, sf_rows, cfg_hash
        )
        (out / f"sampling_{kind}_seed{seed}.svg").write_text(
            reporting.svg_sampling_frequency(rounds, counts), encoding="utf-8"
        )
    curves = [
        aggregate_over_seeds([cells[(kind, seed)] for seed in seeds], kind)
        for kind in sorted({k for k, _ in cells})
    ]
    for metric in ("accuracy", "macro_f1"):
        header, rows = reporting.learning_curve_table(curves, metric)
        reporting.write_table(out / f"curve_{metric}.csv", header, rows, cfg_hash)
        (out / f"curve_{metric}.svg").write_text(
            reporting.svg_learning_curves(curves, metric), encoding="utf-8"
        )
    reporting.write_manifest(out)
    for curve in curves:
        print(
            f"{curve.strategy}: final macro_f1={curve.macro_f1_mean[-1]:.4f} "
            f"accuracy={curve.accuracy_mean[-1]:.4f} over {curve.n_seeds} seeds"
        )
    return 0


def cmd_report(args) -> int:
    results = Path(args.results)
    out = Path(args.out)
    _emit_config(args, out)
    from .experiment import LearningCurve

    for metric in ("accuracy", "macro_f1"):
        table = results / f"curve_{metric}.csv"
        if not table.exists():
            continue
        _, rows, _ = reporting.read_table(table)
        by_strategy: dict[str, list] = {}
        for strategy, n, mean, std in rows:
            by_strategy.setdefault(strategy, []).append((int(n), float(mean), float(std)))
        curves = []
        for strategy, pts in sorted(by_strategy.items()):
            curves.append(
                LearningCurve(
                    strategy=strategy,
                    labeled_counts=[p[0] for p in pts],
                    accuracy_mean=[p[1] for p in pts],
                    accuracy_std=[p[2] for p in pts],
                    macro_f1_mean=[p[1] for p in pts],
                    macro_f1_std=[p[2] for p in pts],
                    n_seeds=0,
                )
            )
        (out / f"curve_{metric}.svg").write_text(
            reporting.svg_learning_curves(curves, metric), encoding="utf-8"
        )
    datamap = results / "data_map.csv"
    if datamap.exists():
        _, rows, _ = reporting.read_table(datamap)
        points = [
            cartography.DataMapPoint(r[0], float(r[3]), float(r[4]), float(r[5]), r[6])
            for r in rows
        ]
        (out / "data_map.svg").write_text(reporting.svg_data_map(points), encoding="utf-8")
    for table in sorted(results.glob("sampling_*.csv")):
        header, rows, _ = reporting.read_table(table)
        tags = header[1:]
        rounds = [int(r[0]) for r in rows]
        counts = {t: [int(r[1 + i]) for r in rows] for i, t in enumerate(tags)}
        (out / f"{table.stem}.svg").write_text(
            reporting.svg_sampling_frequency(rounds, counts), encoding="utf-8"
        )
    reporting.write_manifest(out)
    print(f"re-rendered plots -> {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    app = create_app(args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _read_label_file(path: str) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if rows and rows[0][:2] == ["id", "tag"]:
        rows = rows[1:]
    return {r[0]: r[1] for r in rows if r}


def cmd_kappa(args) -> int:
    a = _read_label_file(args.a)
    b = _read_label_file(args.b)
    common = sorted(set(a) & set(b))
    if not common:
        print("no overlapping ids", file=sys.stderr)
        return 1
    kappa = cohens_kappa([a[i] for i in common], [b[i] for i in common])
    print(f"items={len(common)} kappa={kappa:.4f}")
    return 0


def cmd_synth(args) -> int:
    corpus, scheme, flipped = synth.generate_corpus(
        n_sessions=args.sessions,
        sentences_per_session=(args.min_sentences, args.max_sentences),
        profile=args.imbalance,
        n_classes=args.classes,
        filler_ratio=args.filler,
        noise=args.noise,
        seed=args.gen_seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _emit_config(args, out)
    export_corpus(corpus, out / "corpus.jsonl")
    save_scheme(scheme, out / "scheme.json")
    if flipped:
        (out / "flipped_ids.json").write_text(json.dumps(flipped), encoding="utf-8")
    print(
        f"wrote {len(corpus.sentences)} sentences over {len(corpus.session_ids())} "
        f"sessions -> {out}"
    )
    return 0


def cmd_select(args) -> int:
    """Recompute a proposal batch offline from an exported project state."""
    export = json.loads(Path(args.export).read_text(encoding="utf-8"))
    strategy = acquisition.StrategyConfig(**export["strategy"])
    pool_ids = export["pool_ids"]
    size = min(args.size, len(pool_ids))
    if export["model_generation"] == 0 or not export.get("checkpoint_path"):
        batch = acquisition.random_select(pool_ids, size, strategy.seed)
    else:
        from .corpus import LabelScheme

        params, hasher, snapshots = load_checkpoint(export["checkpoint_path"])
        corpus = ingest_corpus(
            export["corpus_path"], LabelScheme.from_dict(export["scheme"])
        )
        sentences = {s.id: s for s in corpus.sentences}
        x = featurize_matrix([sentences[sid].text for sid in pool_ids], hasher)
        probs = predict_proba_matrix(params, x)
        ensembles = None
        if strategy.kind == "coremse":
            members = snapshots or [params]
            ensembles = np.stack([predict_proba_matrix(p, x) for p in members], axis=1)
        candidates = [
            acquisition.Candidate(
                id=sid,
                predictive_dist=probs[i],
                features=x[i],
                ensemble_dists=None if ensembles is None else ensembles[i],
            )
            for i, sid in enumerate(pool_ids)
        ]
        batch = acquisition.select_batch(candidates, replace(strategy, batch_size=size))
    print("\n".join(batch))
    return 0


# ------------------------------------------------------------------ parser

def _parse_seeds(raw: str) -> list[int]:
    if "," in raw:
        return [int(s) for s in raw.split(",") if s.strip()]
    return list(range(int(raw)))


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--train-batch", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--train-seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=2048)
    p.add_argument("--ngram-max", type=int, default=2)
    p.add_argument("--salt", type=int, default=0)


def _add_split_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--split", help="existing split.json; overrides fraction/seed")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--split-seed", type=int, default=0)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="dialcart", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    registry: dict[str, argparse.ArgumentParser] = {}

    def add(name: str, func, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file of flag defaults")
        p.set_defaults(func=func)
        registry[name] = p
        return p

    p = add("ingest", cmd_ingest, "validate and summarize a corpus file")
    p.add_argument("--corpus"), p.add_argument("--scheme"), p.add_argument("--out")

    p = add("split", cmd_split, "session-level train/test split")
    p.add_argument("--corpus"), p.add_argument("--scheme"), p.add_argument("--out")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--split-seed", type=int, default=0)

    p = add("train", cmd_train, "train the reference classifier")
    p.add_argument("--corpus"), p.add_argument("--scheme"), p.add_argument("--out")
    _add_train_flags(p)
    _add_split_flags(p)

    p = add("cartography", cmd_cartography, "data map of the labeled corpus")
    p.add_argument("--corpus"), p.add_argument("--scheme"), p.add_argument("--out")
    _add_train_flags(p)

    p = add("simulate", cmd_simulate, "pool-based active-learning simulation")
    p.add_argument("--corpus"), p.add_argument("--scheme"), p.add_argument("--out")
    p.add_argument(
        "--strategy",
        action="append",
        choices=list(acquisition.STRATEGIES),
        help="repeatable; default: all four",
    )
    p.add_argument("--seeds", default="6", help="count (N -> 0..N-1) or comma list")
    p.add_argument("--initial", type=int, default=50)
    p.add_argument("--batch", type=int, default=50)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    _add_train_flags(p)
    _add_split_flags(p)

    p = add("report", cmd_report, "re-render plots from result tables")
    p.add_argument("--results"), p.add_argument("--out")

    p = add("serve", cmd_serve, "run the annotation HTTP service")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    p = add("kappa", cmd_kappa, "inter-annotator agreement from two label CSVs")
    p.add_argument("--a"), p.add_argument("--b")

    p = add("synth", cmd_synth, "generate a synthetic labeled corpus")
    p.add_argument("--out")
    p.add_argument("--sessions", type=int, default=50)
    p.add_argument("--min-sentences", type=int, default=30)
    p.add_argument("--max-sentences", type=int, default=50)
    p.add_argument("--imbalance", choices=list(synth.PROFILES), default="longtail")
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--filler", type=float, default=0.25)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--gen-seed", type=int, default=0)

    p = add("select", cmd_select, "offline batch selection from a project export")
    p.add_argument("--export"), p.add_argument("--size", type=int, default=50)

    return parser, registry


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) in (None, [])]
    if missing:
        raise SystemExit(
            f"error: missing required argument(s): {', '.join('--' + n for n in missing)}"
        )


_REQUIRED = {
    "ingest": ("corpus", "scheme"),
    "split": ("corpus", "scheme", "out"),
    "train": ("corpus", "scheme", "out"),
    "cartography": ("corpus", "scheme", "out"),
    "simulate": ("corpus", "scheme", "out"),
    "report": ("results", "out"),
    "kappa": ("a", "b"),
    "synth": ("out",),
    "select": ("export",),
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, registry = build_parser()
    if "--config" in argv and argv and argv[0] in registry:
        cfg_path = argv[argv.index("--config") + 1]
        config = json.loads(Path(cfg_path).read_text(encoding="utf-8"))
        config.pop("subcommand", None)
        registry[argv[0]].set_defaults(**config)
    args = parser.parse_args(argv)
    if not getattr(args, "subcommand", None):
        parser.print_help()
        return 2
    if args.subcommand == "simulate" and not getattr(args, "strategy", None):
        args.strategy = list(acquisition.STRATEGIES)
    _require(args, *_REQUIRED.get(args.subcommand, ()))
    try:
        return args.func(args)
    except (CorpusError, acquisition.AcquisitionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
