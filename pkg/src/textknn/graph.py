"""Directed k-NN graphs over sentence embeddings.

A graph's vertex set is either every train sentence (global scope) or the
sentences of a single item (per-item scope). Each vertex points at its k
nearest neighbors by cosine distance, exactly (no approximation), with a
deterministic tie rule: descending similarity, then ascending sentence id.
Edge weights on top of the raw cosines come in binary / continuous flavors,
optionally polarized by a rating-derived sentiment."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._kernels import knn_topk
from .corpus import SentenceRecord
from .embeddings import EmbeddingTable

SCHEMES = ("binary", "continuous")


@dataclass(frozen=True)
class EdgeWeightConfig:
    """Edge weight scheme: binary counts or rescaled cosines, with an
    optional sentiment polarization sign.

    min_cos, when set, zeroes out graph edges whose raw cosine falls below
    the threshold (the edge stays in the graph; its matches just stop
    counting). Off by default: threshold filtering showed no benefit in
    early experiments but stays available as a knob.
    """

    scheme: str = "continuous"
    polarized: bool = False
    min_cos: float | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.min_cos is not None and not -1.0 <= self.min_cos <= 1.0:
            raise ValueError(f"min_cos must lie in [-1, 1], got {self.min_cos}")


@dataclass
class SentenceGraph:
    """Exact directed k-NN graph over a set of sentences.

    neighbors/sims rows are aligned: row h lists the local indices and raw
    cosine similarities of vertex h's out-edges, sorted by descending
    similarity (ties by ascending sentence id). vertex_ids maps local
    indices to global sentence ids and is strictly ascending.
    """

    vertex_ids: np.ndarray
    neighbors: np.ndarray
    sims: np.ndarray
    k: int
    item_id: str | None = None

    @property
    def n_vertices(self) -> int:
        return int(self.vertex_ids.size)

    @property
    def out_degree_cap(self) -> int:
        return int(self.neighbors.shape[1])

    @property
    def n_edges(self) -> int:
        return int(self.neighbors.size)

    def edge_arrays(self):
        """Flattened (head_local, tail_local, cos) views of all edges."""
        kk = self.out_degree_cap
        heads = np.repeat(np.arange(self.n_vertices, dtype=np.int64), kk)
        return heads, self.neighbors.ravel(), self.sims.ravel()


def sentiment(review_rating: float) -> int:
    """Rating-derived sentiment: +1 for >= 4, -1 for <= 2, else 0."""
    if review_rating >= 4:
        return 1
    if review_rating <= 2:
        return -1
    return 0


def rating_polarity(ratings: np.ndarray) -> np.ndarray:
    """Vectorized sentiment over an array of review ratings."""
    r = np.asarray(ratings)
    return (np.where(r >= 4, 1, 0) + np.where(r <= 2, -1, 0)).astype(np.int8)


def polarity_sign(pi_head: np.ndarray, pi_tail: np.ndarray) -> np.ndarray:
    """+1 where the sentiments differ by at most 1, otherwise -1."""
    return np.where(np.abs(pi_head.astype(np.int16) - pi_tail.astype(np.int16)) <= 1, 1.0, -1.0)


def edge_weight(
    head: SentenceRecord, tail: SentenceRecord, raw_cos: float, cfg: EdgeWeightConfig
) -> float:
    """Weight of one graph edge under cfg (edges only; non-edges weigh 0)."""
    if cfg.min_cos is not None and raw_cos < cfg.min_cos:
        return 0.0
    w = 1.0 if cfg.scheme == "binary" else (1.0 + raw_cos) / 2.0
    if cfg.polarized:
        if abs(sentiment(head.review_rating) - sentiment(tail.review_rating)) > 1:
            w = -w
    return w


def edge_weight_matrix(
    graph: SentenceGraph, cfg: EdgeWeightConfig, polarity: np.ndarray | None = None
) -> np.ndarray:
    """Per-edge weights aligned with graph.neighbors.

    polarity maps global sentence id -> sentiment and is required when
    cfg.polarized is set.
    """
    if cfg.scheme == "binary":
        w = np.ones_like(graph.sims)
    else:
        w = (1.0 + graph.sims) / 2.0
    if cfg.polarized:
        if polarity is None:
            raise ValueError("polarized weights need a sentence polarity array")
        pi_head = polarity[graph.vertex_ids][:, None]
        pi_tail = polarity[graph.vertex_ids[graph.neighbors]]
        w = w * polarity_sign(pi_head, pi_tail)
    if cfg.min_cos is not None:
        w = np.where(graph.sims >= cfg.min_cos, w, 0.0)
    return w


def weighted_degrees(
    graph: SentenceGraph, cfg: EdgeWeightConfig, polarity: np.ndarray | None = None
):
    """Weighted in/out degrees: sums of |weight| over incident edges.

    Returned arrays are indexed by local vertex index (graph.vertex_ids
    maps back to sentence ids); isolated vertices get 0.
    """
    n = graph.n_vertices
    if graph.n_edges == 0:
        return np.zeros(n), np.zeros(n)
    w = np.abs(edge_weight_matrix(graph, cfg, polarity))
    d_out = w.sum(axis=1)
    d_in = np.bincount(graph.neighbors.ravel(), weights=w.ravel(), minlength=n)
    return d_in, d_out


def build_knn_graph(
    table: EmbeddingTable,
    sentences: Sequence[SentenceRecord],
    k: int,
    scope: str = "global",
):
    """Build the exact k-NN graph(s) for the given scope.

    Global scope returns one SentenceGraph over all sentences; per-item
    scope returns {item_id: SentenceGraph} over each item's sentences.
    Scopes with a single sentence yield a graph with no edges.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if scope == "global":
        return _build_one(table, [s.sentence_id for s in sentences], k, None)
    if scope == "per_item":
        groups: dict[str, list[int]] = {}
        for s in sentences:
            groups.setdefault(s.item_id, []).append(s.sentence_id)
        return {item: _build_one(table, ids, k, item) for item, ids in sorted(groups.items())}
    raise ValueError(f"unknown scope {scope!r}; expected 'global' or 'per_item'")


def _build_one(table: EmbeddingTable, ids: list[int], k: int, item_id: str | None) -> SentenceGraph:
    vertex_ids = np.array(sorted(ids), dtype=np.int64)
    if vertex_ids.size and (vertex_ids[0] < 0 or vertex_ids[-1] >= table.n):
        raise ValueError("sentence id outside the embedding table")
    if np.unique(vertex_ids).size != vertex_ids.size:
        raise ValueError("duplicate sentence ids in graph scope")
    vectors = table.vectors[vertex_ids].astype(np.float64)
    neighbors, sims = knn_topk(np.ascontiguousarray(vectors), k)
    return SentenceGraph(vertex_ids=vertex_ids, neighbors=neighbors, sims=sims, k=k, item_id=item_id)


def aggregate_match_heatmap(
    graph: SentenceGraph,
    groups: Mapping[int, object] | Sequence[object] | np.ndarray,
    drop_same_item: bool = False,
    items: Mapping[int, object] | Sequence[object] | np.ndarray | None = None,
):
    """Aggregate edge counts by group and sqrt-normalize.

    groups maps global sentence id -> group label (dict or indexable).
    With drop_same_item, edges whose head and tail sentences review the
    same item are discarded first (items maps sentence id -> item).
    Returns (labels, counts, normalized) where normalized[a, b] =
    counts[a, b] / sqrt(rowsum_a * colsum_b), zero where a row or column
    sum is zero.
    """
    heads, tails, _ = graph.edge_arrays()
    head_sid = graph.vertex_ids[heads]
    tail_sid = graph.vertex_ids[tails]
    if drop_same_item:
        if items is None:
            raise ValueError("drop_same_item needs a sentence id -> item mapping")
        keep = np.array(
            [items[int(h)] != items[int(t)] for h, t in zip(head_sid, tail_sid)], dtype=bool
        )
        head_sid, tail_sid = head_sid[keep], tail_sid[keep]
    labels = sorted({groups[int(s)] for s in graph.vertex_ids}, key=str)
    index = {g: i for i, g in enumerate(labels)}
    m = len(labels)
    counts = np.zeros((m, m))
    for h, t in zip(head_sid, tail_sid):
        counts[index[groups[int(h)]], index[groups[int(t)]]] += 1.0
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)
    denom = np.sqrt(np.outer(row, col))
    normalized = np.divide(counts, denom, out=np.zeros_like(counts), where=denom > 0)
    return labels, counts, normalized


def dump_edges_tsv(graph: SentenceGraph, path: str | Path) -> None:
    """Write edges as TSV rows (head sentence id, tail sentence id, cosine)."""
    heads, tails, cos = graph.edge_arrays()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("head_id\ttail_id\tcosine\n")
        for h, t, c in zip(graph.vertex_ids[heads], graph.vertex_ids[tails], cos):
            fh.write(f"{h}\t{t}\t{c:.12g}\n")


def write_heatmap_csv(labels: Iterable, matrix: np.ndarray, path: str | Path) -> None:
    labels = list(labels)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group"] + [str(l) for l in labels])
        for name, row in zip(labels, matrix):
            writer.writerow([str(name)] + [f"{x:.12g}" for x in row])
