"""Command-line interface.

Subcommands cover the whole pipeline: ingest raw dumps, split and segment,
build graphs, dump user weights, predict, evaluate, grid-search, explain
predictions, and generate synthetic experiment directories. Failures exit
nonzero with a machine-readable JSON error on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .corpus import (
    FORMATS,
    Dataset,
    chrono_split,
    kcore_filter,
    load_dataset,
    parse_reviews,
    read_manifest,
    save_dataset,
    segment_sentences,
    write_manifest,
)
from .embeddings import load_embeddings, write_embeddings
from .graph import aggregate_match_heatmap, build_knn_graph, dump_edges_tsv, write_heatmap_csv
from .harness import (
    PRESETS,
    ExperimentConfig,
    ExperimentRunner,
    GridSpec,
    emit_grid_reports,
    run_experiment,
    write_explanations_tsv,
)
from .synth import make_synthetic_dataset, make_synthetic_embeddings
from .usersim import dump_weights_tsv


def _add_ingest(sub):
    p = sub.add_parser("ingest", help="parse a raw review dump into the canonical dataset file")
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="generic-tsv", choices=FORMATS)
    p.add_argument("--kcore", type=int, default=0, help="apply k-core filtering (0 = off)")
    p.add_argument("--out", required=True)


def _add_split(sub):
    p = sub.add_parser("split", help="chronological split plus the train sentence manifest")
    p.add_argument("--dataset", required=True)
    p.add_argument("--outdir", required=True)


def _add_graph(sub):
    p = sub.add_parser("graph", help="build the sentence k-NN graph(s) and dump the edges")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--scope", default="global", choices=("global", "per_item"))
    p.add_argument("--out", required=True)
    p.add_argument("--heatmap-by", choices=("item", "user"), default=None,
                   help="also aggregate matches by group and write a sqrt-normalized CSV")
    p.add_argument("--heatmap-out", default=None)
    p.add_argument("--drop-same-item", action="store_true",
                   help="discard same-item matches from the heatmap")


def _add_weights(sub):
    p = sub.add_parser("weights", help="compute and dump user-user weights for a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)


def _add_predict(sub):
    p = sub.add_parser("predict", help="emit predictions for validation and test targets")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate one config on validation and test")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="report JSON path")


def _add_grid(sub):
    p = sub.add_parser("grid", help="grid search on validation; test scores for the winner only")
    p.add_argument("--grid", required=True, help="grid spec JSON (base config + axes)")
    p.add_argument("--outdir", required=True)
    p.add_argument("--selection", choices=("rmse", "tfcp"), default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--explain-limit", type=int, default=20)


def _add_explain(sub):
    p = sub.add_parser("explain", help="dump matched sentence evidence for test predictions")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int, default=20)


def _add_synth(sub):
    p = sub.add_parser("synth", help="generate a synthetic experiment directory")
    p.add_argument("--outdir", required=True)
    p.add_argument("--users", type=int, default=500)
    p.add_argument("--items", type=int, default=100)
    p.add_argument("--clusters", type=int, default=5)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--noise", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)


def _add_preset(sub):
    p = sub.add_parser("preset", help="write one of the tuned preset configs")
    p.add_argument("name", choices=sorted(PRESETS))
    p.add_argument("--dataset", required=True)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="textknn", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for add in (
        _add_ingest,
        _add_split,
        _add_graph,
        _add_weights,
        _add_predict,
        _add_eval,
        _add_grid,
        _add_explain,
        _add_synth,
        _add_preset,
    ):
        add(sub)
    return parser


def cmd_ingest(args) -> None:
    dataset = parse_reviews(args.input, args.format)
    if args.kcore > 0:
        before = len(dataset)
        dataset = kcore_filter(dataset, args.kcore)
        print(f"k-core (k={args.kcore}): {before} -> {len(dataset)} interactions")
    save_dataset(dataset, args.out)
    print(
        f"wrote {args.out}: {len(dataset)} interactions, "
        f"{len(dataset.by_user)} users, {len(dataset.by_item)} items, "
        f"{dataset.skipped} skipped lines"
    )


def cmd_split(args) -> None:
    dataset = load_dataset(args.dataset)
    split = chrono_split(dataset)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_dataset(split.train, outdir / "train.jsonl")
    save_dataset(Dataset(split.validation), outdir / "validation.jsonl")
    save_dataset(Dataset(split.test), outdir / "test.jsonl")
    sentences = segment_sentences(split.train)
    write_manifest(sentences, outdir / "train_sentences.tsv")
    print(
        f"split {args.dataset}: train={len(split.train)} "
        f"validation={len(split.validation)} test={len(split.test)}; "
        f"{len(sentences)} train sentences -> {outdir / 'train_sentences.tsv'}"
    )


def cmd_graph(args) -> None:
    table = load_embeddings(args.embeddings)
    sentences = read_manifest(args.manifest)
    if table.n != len(sentences):
        raise ValueError(
            f"embeddings have {table.n} rows, manifest has {len(sentences)} sentences"
        )
    graphs = build_knn_graph(table, sentences, k=args.k, scope=args.scope)
    if args.scope == "global":
        dump_edges_tsv(graphs, args.out)
        n_edges = graphs.n_edges
    else:
        # concatenate the per-item edge dumps; ids are global sentence ids
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("head_id\ttail_id\tcosine\n")
            n_edges = 0
            for item in sorted(graphs):
                g = graphs[item]
                heads, tails, cos = g.edge_arrays()
                for h, t, c in zip(g.vertex_ids[heads], g.vertex_ids[tails], cos):
                    fh.write(f"{h}\t{t}\t{c:.12g}\n")
                n_edges += g.n_edges
    print(f"wrote {args.out}: {n_edges} edges (k={args.k}, scope={args.scope})")
    if args.heatmap_by:
        if args.scope != "global":
            raise ValueError("--heatmap-by aggregates the global graph; use --scope global")
        if not args.heatmap_out:
            raise ValueError("--heatmap-by needs --heatmap-out")
        groups = {
            s.sentence_id: (s.item_id if args.heatmap_by == "item" else s.user_id)
            for s in sentences
        }
        items = {s.sentence_id: s.item_id for s in sentences}
        labels, _, normalized = aggregate_match_heatmap(
            graphs, groups, drop_same_item=args.drop_same_item, items=items
        )
        write_heatmap_csv(labels, normalized, args.heatmap_out)
        print(f"wrote {args.heatmap_out}: {len(labels)}x{len(labels)} heatmap")


def cmd_weights(args) -> None:
    cfg = ExperimentConfig.from_json(args.config)
    runner = ExperimentRunner(cfg.dataset, cfg.embeddings)
    if cfg.predictor in ("cooccur_knn", "cooccur_bknn"):
        weights = runner.cooccur(cfg.cooccur_variant)
    else:
        weights = runner.text_weights(cfg)
    dump_weights_tsv(weights, args.out)
    print(f"wrote {args.out}: {weights.nnz} user pairs")


def cmd_predict(args) -> None:
    cfg = ExperimentConfig.from_json(args.config)
    runner = ExperimentRunner(cfg.dataset, cfg.embeddings)
    predict = runner.predictor(cfg)
    name = cfg.name()
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("split\tuser\titem\ttrue\testimate\tfallback\tmodel\n")
        for split_name, targets in (("validation", runner.split.validation), ("test", runner.split.test)):
            for t in sorted(targets, key=lambda t: t.user_id):
                out = predict(t.user_id, t.item_id)
                fh.write(
                    f"{split_name}\t{t.user_id}\t{t.item_id}\t{t.rating:g}\t"
                    f"{out.estimate:.12g}\t{int(out.fallback_used)}\t{name}\n"
                )
    print(f"wrote {args.out}")


def cmd_eval(args) -> None:
    cfg = ExperimentConfig.from_json(args.config)
    report = run_experiment(cfg)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    val, test = report["validation"], report["test"]
    print(f"{report['name']}")
    print(f"  validation: rmse={val['rmse']:.4f} tfcp={val['tfcp_macro']}")
    print(f"  test:       rmse={test['rmse']:.4f} tfcp={test['tfcp_macro']}")
    print(f"wrote {args.out}")


def cmd_grid(args) -> None:
    spec = GridSpec.from_json(args.grid)
    final = emit_grid_reports(
        spec,
        args.outdir,
        selection=args.selection,
        workers=args.workers,
        explain_limit=args.explain_limit,
    )
    print(f"trials: {final['trials']}")
    print(f"selected: {final['name']}")
    test = final["test"]
    print(f"test: rmse={test['rmse']:.4f} tfcp={test['tfcp_macro']}")
    print(f"reports in {args.outdir}")


def cmd_explain(args) -> None:
    cfg = ExperimentConfig.from_json(args.config)
    runner = ExperimentRunner(cfg.dataset, cfg.embeddings)
    rows = runner.explain(cfg, limit=args.limit)
    write_explanations_tsv(rows, args.out)
    print(f"wrote {args.out}: {len(rows)} match-evidence rows")


def cmd_synth(args) -> None:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    dataset, clusters = make_synthetic_dataset(
        n_users=args.users, n_items=args.items, n_clusters=args.clusters, seed=args.seed
    )
    save_dataset(dataset, outdir / "dataset.jsonl")
    split = chrono_split(dataset)
    sentences = segment_sentences(split.train)
    write_manifest(sentences, outdir / "train_sentences.tsv")
    vectors = make_synthetic_embeddings(
        sentences, clusters, n_clusters=args.clusters, dim=args.dim, noise=args.noise, seed=args.seed
    )
    write_embeddings(outdir / "embeddings.semb", vectors)
    print(
        f"synthetic corpus in {outdir}: {len(dataset)} interactions, "
        f"{len(sentences)} train sentences, dim={args.dim}"
    )


def cmd_preset(args) -> None:
    cfg = ExperimentConfig(
        dataset=args.dataset, embeddings=args.embeddings, **PRESETS[args.name]
    )
    cfg.to_json(args.out)
    print(f"wrote {args.out} ({args.name})")


_COMMANDS = {
    "ingest": cmd_ingest,
    "split": cmd_split,
    "graph": cmd_graph,
    "weights": cmd_weights,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "grid": cmd_grid,
    "explain": cmd_explain,
    "synth": cmd_synth,
    "preset": cmd_preset,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        _COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
