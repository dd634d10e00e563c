"""Experiment harness: configs, the pipeline runner, grid search, and
report emission.

A run is reproducible from (config, data) alone: the dataset is split
chronologically, train sentences are segmented, graphs and weights are
built as the predictor requires, and the model is scored on the
validation and test targets. Grid search evaluates every valid cell on
validation only; test scores are computed once, for the selected config.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import pickle
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .corpus import (
    Dataset,
    Interaction,
    chrono_split,
    escape_field,
    load_dataset,
    segment_sentences,
)
from .embeddings import load_embeddings
from .evaluation import EvalReport, evaluate, rank_correlation
from .graph import EdgeWeightConfig, SentenceGraph, build_knn_graph, edge_weight_matrix
from .predictors import (
    BaselineModel,
    PredictionOutcome,
    RatingTable,
    baseline_predict,
    bknn_predict,
    clamp_rating,
    fit_baseline,
    fit_normal,
    fit_svd,
    knn_predict,
    msd_similarity,
    normal_predict,
    svd_predict,
    uniform_predict,
)
from .usersim import UserSimConfig, build_sentence_index, compute_user_weights, cooccurrence_weights

PREDICTORS = (
    "oracle",
    "uniform",
    "normal",
    "baseline",
    "knn_msd",
    "bknn_msd",
    "svd",
    "text_knn",
    "text_bknn",
    "cooccur_knn",
    "cooccur_bknn",
)

CACHE_ENV = "TEXTKNN_CACHE_DIR"

_TEXT = ("text_knn", "text_bknn")
_COOCCUR = ("cooccur_knn", "cooccur_bknn")
_NEEDS_BASELINE = ("baseline", "bknn_msd", "text_bknn", "cooccur_bknn")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    predictor: str
    embeddings: str | None = None
    k: int = 10
    kprime: int = 40
    matching: str = "many_to_many"
    scheme: str = "continuous"
    polarized: bool = False
    min_cos: float | None = None
    graph_scope: str = "global"
    user_norm: str = "none"
    match_norm: str = "none"
    cooccur_variant: str = "product"
    min_support: int = 1
    reg_u: float = 15.0
    reg_i: float = 10.0
    baseline_epochs: int = 10
    svd_factors: int = 100
    svd_lr: float = 0.005
    svd_reg: float = 0.02
    svd_epochs: int = 20
    seed: int = 0
    selection_metric: str = "rmse"

    def validate(self) -> None:
        if self.predictor not in PREDICTORS:
            raise ValueError(f"unknown predictor {self.predictor!r}; expected one of {PREDICTORS}")
        if self.selection_metric not in ("rmse", "tfcp"):
            raise ValueError(f"unknown selection metric {self.selection_metric!r}")
        if self.predictor in _TEXT:
            self.user_sim_config().validate()
        if self.predictor in _COOCCUR and self.cooccur_variant not in ("indicator", "u_count", "product"):
            raise ValueError(f"unknown co-occurrence variant {self.cooccur_variant!r}")

    def is_valid(self) -> bool:
        try:
            self.validate()
        except ValueError:
            return False
        return True

    def user_sim_config(self) -> UserSimConfig:
        return UserSimConfig(
            matching=self.matching,
            edge_weight=EdgeWeightConfig(
                scheme=self.scheme, polarized=self.polarized, min_cos=self.min_cos
            ),
            graph_scope=self.graph_scope,
            user_norm=self.user_norm,
            match_norm=self.match_norm,
        )

    def name(self) -> str:
        """Stable label covering exactly the fields this predictor reads,
        so grid cells differing only in irrelevant axes share a name."""
        p = self.predictor
        if p == "oracle":
            return p
        if p in ("uniform", "normal"):
            return f"{p}[seed={self.seed}]"
        if p == "baseline":
            return f"{p}[reg_u={self.reg_u:g},reg_i={self.reg_i:g},epochs={self.baseline_epochs}]"
        if p == "svd":
            return (
                f"{p}[f={self.svd_factors},lr={self.svd_lr:g},reg={self.svd_reg:g},"
                f"epochs={self.svd_epochs},seed={self.seed}]"
            )
        if p in ("knn_msd", "bknn_msd"):
            return f"{p}[min_support={self.min_support},kp={self.kprime}]"
        if p in _COOCCUR:
            return f"{p}[{self.cooccur_variant},kp={self.kprime}]"
        pol = "polarized" if self.polarized else "unpolarized"
        thresh = f",min_cos={self.min_cos:g}" if self.min_cos is not None else ""
        return (
            f"{p}[{self.matching},{self.scheme},{pol},{self.graph_scope},"
            f"unorm={self.user_norm},mnorm={self.match_norm},k={self.k},kp={self.kprime}{thresh}]"
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


# Preset configurations matching the two tuned setups shipped with the
# harness: one optimized for error, one for pair ordering.
PRESETS = {
    "text-bknn-r": dict(
        predictor="text_bknn",
        matching="one_to_one",
        scheme="binary",
        polarized=False,
        graph_scope="global",
        user_norm="none",
        match_norm="none",
    ),
    "text-knn-f": dict(
        predictor="text_knn",
        matching="many_to_many",
        scheme="continuous",
        polarized=True,
        graph_scope="per_item",
        user_norm="s_v",
        match_norm="in_degree",
    ),
    "text-bknn-f": dict(
        predictor="text_bknn",
        matching="many_to_many",
        scheme="continuous",
        polarized=True,
        graph_scope="per_item",
        user_norm="s_v",
        match_norm="in_degree",
    ),
}


def _file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class ExperimentRunner:
    """Loads the data once and caches graphs, weights, and models across
    configs, so a grid rebuilds only what a config actually changes."""

    def __init__(self, dataset_path: str | Path, embeddings_path: str | Path | None = None):
        self.dataset_path = str(dataset_path)
        self.embeddings_path = str(embeddings_path) if embeddings_path else None
        self.dataset = load_dataset(dataset_path)
        if len(self.dataset) == 0:
            raise ValueError(f"{dataset_path}: empty dataset")
        self.split = chrono_split(self.dataset)
        self.table = RatingTable(self.split.train)
        self._sentences = None
        self._embeddings = None
        self._emb_sha = None
        self._graphs: dict = {}
        self._weights: dict = {}
        self._msd: dict = {}
        self._baseline: dict = {}
        self._svd: dict = {}
        self._cooccur: dict = {}
        self._evidence: dict = {}
        self._truth = None

    # ---------------------------------------------------------- ingredients

    @property
    def sentences(self):
        if self._sentences is None:
            self._sentences = segment_sentences(self.split.train)
        return self._sentences

    def embeddings(self):
        if self._embeddings is None:
            if not self.embeddings_path:
                raise FileNotFoundError(
                    "text predictors need an embeddings file: run `textknn split` "
                    "to produce the train sentence manifest, encode it (encoder "
                    "bridge or synthetic), and pass its path as `embeddings`"
                )
            table = load_embeddings(self.embeddings_path)
            if table.n != len(self.sentences):
                raise ValueError(
                    f"embeddings file has {table.n} rows but the train corpus "
                    f"segments into {len(self.sentences)} sentences; re-encode "
                    "the manifest produced by `textknn split` for this dataset"
                )
            self._embeddings = table
        return self._embeddings

    def _emb_hash(self) -> str:
        if self._emb_sha is None:
            self._emb_sha = _file_sha256(self.embeddings_path)
        return self._emb_sha

    def graphs(self, k: int, scope: str):
        key = (k, scope)
        if key not in self._graphs:
            cache_dir = os.environ.get(CACHE_ENV)
            cache_file = None
            if cache_dir:
                tag = hashlib.sha256(f"{self._emb_hash()}:{k}:{scope}:v1".encode()).hexdigest()[:32]
                cache_file = Path(cache_dir) / f"graph-{tag}.pkl"
                if cache_file.exists():
                    with open(cache_file, "rb") as fh:
                        self._graphs[key] = pickle.load(fh)
                    return self._graphs[key]
            built = build_knn_graph(self.embeddings(), self.sentences, k=k, scope=scope)
            self._graphs[key] = built
            if cache_file is not None:
                cache_file.parent.mkdir(parents=True, exist_ok=True)
                tmp = cache_file.with_suffix(".tmp")
                with open(tmp, "wb") as fh:
                    pickle.dump(built, fh, protocol=4)
                os.replace(tmp, cache_file)
        return self._graphs[key]

    def text_weights(self, cfg: ExperimentConfig):
        sim = cfg.user_sim_config()
        key = (cfg.k, sim)
        if key not in self._weights:
            graphs = self.graphs(cfg.k, sim.graph_scope)
            self._weights[key] = compute_user_weights(graphs, self.sentences, sim)
        return self._weights[key]

    def msd(self, min_support: int):
        if min_support not in self._msd:
            self._msd[min_support] = msd_similarity(self.split.train, min_support)
        return self._msd[min_support]

    def baseline(self, cfg: ExperimentConfig) -> BaselineModel:
        key = (cfg.reg_u, cfg.reg_i, cfg.baseline_epochs)
        if key not in self._baseline:
            self._baseline[key] = fit_baseline(
                self.split.train, reg_u=cfg.reg_u, reg_i=cfg.reg_i, epochs=cfg.baseline_epochs
            )
        return self._baseline[key]

    def svd(self, cfg: ExperimentConfig):
        key = (cfg.svd_factors, cfg.svd_lr, cfg.svd_reg, cfg.svd_epochs, cfg.seed)
        if key not in self._svd:
            self._svd[key] = fit_svd(
                self.split.train,
                factors=cfg.svd_factors,
                lr=cfg.svd_lr,
                reg=cfg.svd_reg,
                epochs=cfg.svd_epochs,
                seed=cfg.seed,
            )
        return self._svd[key]

    def cooccur(self, variant: str):
        if variant not in self._cooccur:
            self._cooccur[variant] = cooccurrence_weights(self.sentences, variant)
        return self._cooccur[variant]

    def truth(self):
        if self._truth is None:
            truth = {}
            for it in self.dataset.interactions:
                truth[(it.user_id, it.item_id)] = it.rating
            self._truth = truth
        return self._truth

    # ------------------------------------------------------------ predictor

    def predictor(self, cfg: ExperimentConfig) -> Callable[[str, str], PredictionOutcome]:
        """Build a fresh prediction callable. Random predictors get a fresh
        seeded generator, so two evaluations of the same config draw the
        same sequence."""
        cfg.validate()
        p = cfg.predictor
        table = self.table
        if p == "oracle":
            truth = self.truth()
            mu = table.mu
            return lambda u, i: PredictionOutcome(estimate=clamp_rating(truth.get((u, i), mu)))
        if p == "uniform":
            rng = np.random.default_rng(cfg.seed)
            return lambda u, i: uniform_predict(u, i, rng)
        if p == "normal":
            model = fit_normal(self.split.train)
            rng = np.random.default_rng(cfg.seed)
            return lambda u, i: normal_predict(u, i, model, rng)
        if p == "baseline":
            model = self.baseline(cfg)
            return lambda u, i: baseline_predict(model, u, i)
        if p == "svd":
            model = self.svd(cfg)
            return lambda u, i: svd_predict(model, u, i)
        if p in ("knn_msd", "cooccur_knn", "text_knn"):
            weights = (
                self.msd(cfg.min_support)
                if p == "knn_msd"
                else self.cooccur(cfg.cooccur_variant)
                if p == "cooccur_knn"
                else self.text_weights(cfg)
            )
            return lambda u, i: knn_predict(u, i, weights, table, kprime=cfg.kprime)
        if p in ("bknn_msd", "cooccur_bknn", "text_bknn"):
            weights = (
                self.msd(cfg.min_support)
                if p == "bknn_msd"
                else self.cooccur(cfg.cooccur_variant)
                if p == "cooccur_bknn"
                else self.text_weights(cfg)
            )
            model = self.baseline(cfg)
            return lambda u, i: bknn_predict(u, i, weights, table, model, kprime=cfg.kprime)
        raise ValueError(f"unhandled predictor {p!r}")

    def evaluate(self, cfg: ExperimentConfig, targets: Sequence[Interaction]) -> EvalReport:
        return evaluate(targets, self.table, self.predictor(cfg))

    def evaluate_validation(self, cfg: ExperimentConfig) -> EvalReport:
        return self.evaluate(cfg, self.split.validation)

    def evaluate_test(self, cfg: ExperimentConfig) -> EvalReport:
        return self.evaluate(cfg, self.split.test)

    # ----------------------------------------------------------- evidence

    def _evidence_index(self, cfg: ExperimentConfig):
        """Edges sorted by (head user, tail user, -weight) for match lookups."""
        sim = cfg.user_sim_config()
        key = (cfg.k, sim)
        if key not in self._evidence:
            graphs = self.graphs(cfg.k, sim.graph_scope)
            graph_list = [graphs] if isinstance(graphs, SentenceGraph) else list(graphs.values())
            sidx = build_sentence_index(self.sentences)
            hu_all, tv_all, hs_all, ts_all, w_all = [], [], [], [], []
            for g in graph_list:
                if g.n_edges == 0:
                    continue
                heads, tails, _ = g.edge_arrays()
                w = edge_weight_matrix(g, sim.edge_weight, sidx.polarity).ravel()
                hs = g.vertex_ids[heads]
                ts = g.vertex_ids[tails]
                hu = sidx.user_idx[hs]
                tv = sidx.user_idx[ts]
                keep = (hu != tv) & (w > 0)
                hu_all.append(hu[keep])
                tv_all.append(tv[keep])
                hs_all.append(hs[keep])
                ts_all.append(ts[keep])
                w_all.append(w[keep])
            if hu_all:
                hu = np.concatenate(hu_all)
                tv = np.concatenate(tv_all)
                hs = np.concatenate(hs_all)
                ts = np.concatenate(ts_all)
                w = np.concatenate(w_all)
                order = np.lexsort((-w, tv, hu))
                hu, tv, hs, ts, w = hu[order], tv[order], hs[order], ts[order], w[order]
                pair_key = hu * np.int64(sidx.n_users) + tv
            else:
                hs = ts = pair_key = np.empty(0, np.int64)
                w = np.empty(0, np.float64)
            uindex = {u: j for j, u in enumerate(sidx.users)}
            text_of = {s.sentence_id: s.text for s in self.sentences}
            self._evidence[key] = (sidx.n_users, uindex, text_of, pair_key, hs, ts, w)
        return self._evidence[key]

    def matched_pairs(self, cfg: ExperimentConfig, u: str, v: str, limit: int = 3):
        """Top positive-weight sentence matches (head of u, tail of v)."""
        n_users, uindex, text_of, pair_key, hs, ts, w = self._evidence_index(cfg)
        if u not in uindex or v not in uindex:
            return []
        key = uindex[u] * np.int64(n_users) + uindex[v]
        lo = int(np.searchsorted(pair_key, key, side="left"))
        hi = int(np.searchsorted(pair_key, key, side="right"))
        out = []
        for pos in range(lo, min(hi, lo + limit)):
            out.append(
                (
                    int(hs[pos]),
                    int(ts[pos]),
                    float(w[pos]),
                    text_of[int(hs[pos])],
                    text_of[int(ts[pos])],
                )
            )
        return out

    def explain(self, cfg: ExperimentConfig, limit: int = 20, pairs_per_neighbor: int = 2):
        """Match-evidence rows for the first `limit` test predictions of a
        text config. Only train sentences can appear, by construction."""
        if cfg.predictor not in _TEXT:
            raise ValueError("explanations need a text predictor")
        predict = self.predictor(cfg)
        rows = []
        for target in sorted(self.split.test, key=lambda t: t.user_id)[:limit]:
            out = predict(target.user_id, target.item_id)
            for v, w_uv, r_vi in out.neighbors[:3]:
                for hs, ts, s, htext, ttext in self.matched_pairs(
                    cfg, target.user_id, v, limit=pairs_per_neighbor
                ):
                    rows.append(
                        {
                            "user": target.user_id,
                            "item": target.item_id,
                            "true_rating": target.rating,
                            "estimate": out.estimate,
                            "neighbor": v,
                            "neighbor_weight": w_uv,
                            "neighbor_rating": r_vi,
                            "head_sentence_id": hs,
                            "tail_sentence_id": ts,
                            "match_weight": s,
                            "head_text": htext,
                            "tail_text": ttext,
                        }
                    )
        return rows


def run_experiment(cfg: ExperimentConfig, runner: ExperimentRunner | None = None) -> dict:
    """Full single-config run: validation and test reports plus the config
    echo, as a JSON-serializable dict."""
    cfg.validate()
    if runner is None:
        runner = ExperimentRunner(cfg.dataset, cfg.embeddings)
    val = runner.evaluate_validation(cfg)
    test = runner.evaluate_test(cfg)
    return {
        "config": cfg.to_dict(),
        "name": cfg.name(),
        "validation": val.to_dict(),
        "test": test.to_dict(),
    }


@dataclass
class GridSpec:
    """Cartesian product over config fields; invalid combinations are
    pruned and cells whose names collide (the predictor ignores the
    differing axes) are deduplicated."""

    base: ExperimentConfig
    axes: dict[str, list] = field(default_factory=dict)

    def cells(self) -> list[ExperimentConfig]:
        names = list(self.axes)
        cells: list[ExperimentConfig] = []
        seen: set[str] = set()
        for combo in product(*(self.axes[n] for n in names)):
            cfg = dataclasses.replace(self.base, **dict(zip(names, combo)))
            if not cfg.is_valid():
                continue
            label = cfg.name()
            if label in seen:
                continue
            seen.add(label)
            cells.append(cfg)
        return cells

    @classmethod
    def from_json(cls, path: str | Path) -> "GridSpec":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        base = ExperimentConfig.from_dict(data["base"])
        return cls(base=base, axes=dict(data.get("axes", {})))


def _score_key(report: EvalReport, metric: str):
    if metric == "rmse":
        return report.rmse
    return -(report.tfcp_macro if report.tfcp_macro is not None else -np.inf)


def grid_search(
    spec: GridSpec,
    selection: str | None = None,
    runner: ExperimentRunner | None = None,
    workers: int = 1,
):
    """Evaluate every valid cell on the validation split.

    Returns (best config, leaderboard rows, runner). The leaderboard is
    sorted by the selection metric with ties kept in grid order; it holds
    validation scores only.
    """
    selection = selection or spec.base.selection_metric
    if selection not in ("rmse", "tfcp"):
        raise ValueError(f"unknown selection metric {selection!r}")
    cells = spec.cells()
    if not cells:
        raise ValueError("grid is empty after pruning invalid combinations")
    if runner is None:
        runner = ExperimentRunner(spec.base.dataset, spec.base.embeddings)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(runner.evaluate_validation, cells))
    else:
        reports = [runner.evaluate_validation(cfg) for cfg in cells]
    order = sorted(range(len(cells)), key=lambda j: _score_key(reports[j], selection))
    rows = []
    for rank, j in enumerate(order, start=1):
        cfg, rep = cells[j], reports[j]
        rows.append(
            {
                "rank": rank,
                "name": cfg.name(),
                "predictor": cfg.predictor,
                "val_rmse": rep.rmse,
                "val_tfcp": rep.tfcp_macro,
                "val_fallback_rate": rep.fallback_rate,
                "val_users_excluded": rep.users_excluded,
                "config": cfg,
            }
        )
    best = rows[0]["config"]
    return best, rows, runner


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


LEADERBOARD_COLUMNS = (
    "rank",
    "name",
    "predictor",
    "val_rmse",
    "val_tfcp",
    "val_fallback_rate",
    "val_users_excluded",
)


def write_leaderboard_csv(rows: Sequence[Mapping], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(LEADERBOARD_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in LEADERBOARD_COLUMNS) + "\n")


def write_barchart_csv(reports: Mapping[str, EvalReport], path: str | Path) -> None:
    """Per-model score table (bar-chart data): model, rmse, tfcp."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("model,rmse,tfcp\n")
        for name in sorted(reports):
            rep = reports[name]
            fh.write(f"{name},{_fmt(rep.rmse)},{_fmt(rep.tfcp_macro)}\n")


def metric_correlation(reports: Mapping[str, EvalReport]) -> dict:
    """Rank correlation between the two metrics' quality orderings
    (negated rmse so that larger = better on both sides)."""
    quality_rmse = {m: -r.rmse for m, r in reports.items()}
    quality_tfcp = {
        m: (r.tfcp_macro if r.tfcp_macro is not None else float("-inf")) for m, r in reports.items()
    }
    rho, tau = rank_correlation(quality_rmse, quality_tfcp)
    return {"spearman_rho": rho, "kendall_tau": tau, "n_models": len(reports)}


def write_explanations_tsv(rows: Sequence[Mapping], path: str | Path) -> None:
    cols = (
        "user",
        "item",
        "true_rating",
        "estimate",
        "neighbor",
        "neighbor_weight",
        "neighbor_rating",
        "head_sentence_id",
        "tail_sentence_id",
        "match_weight",
        "head_text",
        "tail_text",
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(cols) + "\n")
        for row in rows:
            fh.write("\t".join(escape_field(_fmt(row[c])) for c in cols) + "\n")


def emit_grid_reports(
    spec: GridSpec,
    outdir: str | Path,
    selection: str | None = None,
    workers: int = 1,
    explain_limit: int = 20,
) -> dict:
    """Run a grid and write every report artifact into outdir.

    Writes leaderboard.csv (validation scores, all cells), barchart.csv,
    correlation.json (when >= 2 models), best_config.json, and
    final_report.json carrying the selected config's test scores. Text
    configs additionally get explanations.tsv."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    best, rows, runner = grid_search(spec, selection=selection, workers=workers)
    write_leaderboard_csv(rows, outdir / "leaderboard.csv")
    val_reports = {
        row["name"]: EvalReport(rmse=row["val_rmse"], tfcp_macro=row["val_tfcp"]) for row in rows
    }
    write_barchart_csv(val_reports, outdir / "barchart.csv")
    if len(val_reports) >= 2:
        with open(outdir / "correlation.json", "w", encoding="utf-8") as fh:
            json.dump(metric_correlation(val_reports), fh, indent=2, sort_keys=True)
            fh.write("\n")
    best.to_json(outdir / "best_config.json")
    final = run_experiment(best, runner=runner)
    final["trials"] = len(rows)
    with open(outdir / "final_report.json", "w", encoding="utf-8") as fh:
        json.dump(final, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if best.predictor in _TEXT:
        write_explanations_tsv(
            runner.explain(best, limit=explain_limit), outdir / "explanations.tsv"
        )
    return final
