"""User-user similarity weights from sentence-graph matches.

Three match-counting schemes turn graph edges into weights w(u, v):

- one_to_one: 1 if any sentence of v sits in the neighborhood of any
  sentence of u;
- many_to_one: how many of u's sentences have some sentence of v in their
  neighborhood;
- many_to_many: the (clamped) sum of edge weights over all sentence pairs
  of u and v.

Weights are computed per graph (one graph globally, or one per item with
per-item results summed), with optional match-level and user-level
normalizations. A sentence of v counts as matched only when its edge
weight is strictly positive, so polarization can veto matches. Matches
between two sentences of the same user never contribute.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import SentenceRecord
from .graph import EdgeWeightConfig, SentenceGraph, edge_weight_matrix, rating_polarity, weighted_degrees

MATCHINGS = ("one_to_one", "many_to_one", "many_to_many")
USER_NORMS = ("none", "s_v", "s_i", "s_ui")
MATCH_NORMS = ("none", "n_u", "n_sigma", "in_degree", "out_degree")

_MATCH_NORM_FOR = {
    "n_u": "one_to_one",
    "n_sigma": "many_to_one",
    "in_degree": "many_to_many",
    "out_degree": "many_to_many",
}


@dataclass(frozen=True)
class UserSimConfig:
    matching: str = "many_to_many"
    edge_weight: EdgeWeightConfig = EdgeWeightConfig()
    graph_scope: str = "global"
    user_norm: str = "none"
    match_norm: str = "none"

    def validate(self) -> None:
        if self.matching not in MATCHINGS:
            raise ValueError(f"unknown matching {self.matching!r}")
        if self.graph_scope not in ("global", "per_item"):
            raise ValueError(f"unknown graph scope {self.graph_scope!r}")
        if self.user_norm not in USER_NORMS:
            raise ValueError(f"unknown user norm {self.user_norm!r}")
        if self.match_norm not in MATCH_NORMS:
            raise ValueError(f"unknown match norm {self.match_norm!r}")
        if self.user_norm in ("s_i", "s_ui") and self.graph_scope != "per_item":
            raise ValueError(f"user norm {self.user_norm!r} needs per_item graphs")
        required = _MATCH_NORM_FOR.get(self.match_norm)
        if required is not None and self.matching != required:
            raise ValueError(f"match norm {self.match_norm!r} only valid with {required}")

    def is_valid(self) -> bool:
        try:
            self.validate()
        except ValueError:
            return False
        return True


class UserWeightMatrix:
    """Sparse nonnegative user-to-user weights, row = target user u.

    Stored as CSR over the sorted user vocabulary; only strictly positive
    weights are kept and the diagonal is always empty.
    """

    def __init__(self, users: Sequence[str], indptr: np.ndarray, cols: np.ndarray, weights: np.ndarray):
        self.users = list(users)
        self._index = {u: i for i, u in enumerate(self.users)}
        self._indptr = indptr
        self._cols = cols
        self._weights = weights

    @classmethod
    def from_coo(cls, users: Sequence[str], uu: np.ndarray, vv: np.ndarray, ww: np.ndarray):
        keep = ww > 0
        uu, vv, ww = uu[keep], vv[keep], ww[keep]
        if np.any(uu == vv):
            raise ValueError("diagonal user weight")
        order = np.lexsort((vv, uu))
        uu, vv, ww = uu[order], vv[order], ww[order]
        indptr = np.zeros(len(users) + 1, dtype=np.int64)
        np.add.at(indptr, uu + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(users, indptr, vv.astype(np.int64), ww.astype(np.float64))

    @property
    def nnz(self) -> int:
        return int(self._cols.size)

    def row(self, user: str) -> list[tuple[str, float]]:
        i = self._index.get(user)
        if i is None:
            return []
        lo, hi = self._indptr[i], self._indptr[i + 1]
        return [(self.users[int(v)], float(w)) for v, w in zip(self._cols[lo:hi], self._weights[lo:hi])]

    def get(self, u: str, v: str) -> float:
        i = self._index.get(u)
        j = self._index.get(v)
        if i is None or j is None:
            return 0.0
        lo, hi = self._indptr[i], self._indptr[i + 1]
        pos = lo + np.searchsorted(self._cols[lo:hi], j)
        if pos < hi and self._cols[pos] == j:
            return float(self._weights[pos])
        return 0.0

    def pairs(self) -> Iterable[tuple[str, str, float]]:
        for i, u in enumerate(self.users):
            lo, hi = self._indptr[i], self._indptr[i + 1]
            for v, w in zip(self._cols[lo:hi], self._weights[lo:hi]):
                yield u, self.users[int(v)], float(w)


@dataclass
class SentenceIndex:
    """Dense per-sentence arrays shared by the weight computations."""

    users: list[str]
    items: list[str]
    user_idx: np.ndarray
    item_idx: np.ndarray
    polarity: np.ndarray
    user_sentence_counts: np.ndarray

    @property
    def n_users(self) -> int:
        return len(self.users)


def build_sentence_index(sentences: Sequence[SentenceRecord]) -> SentenceIndex:
    users = sorted({s.user_id for s in sentences})
    items = sorted({s.item_id for s in sentences})
    uindex = {u: i for i, u in enumerate(users)}
    iindex = {i: j for j, i in enumerate(items)}
    n = 1 + max((s.sentence_id for s in sentences), default=-1)
    user_idx = np.full(n, -1, dtype=np.int64)
    item_idx = np.full(n, -1, dtype=np.int64)
    ratings = np.zeros(n)
    for s in sentences:
        user_idx[s.sentence_id] = uindex[s.user_id]
        item_idx[s.sentence_id] = iindex[s.item_id]
        ratings[s.sentence_id] = s.review_rating
    counts = np.bincount(user_idx[user_idx >= 0], minlength=len(users)).astype(np.float64)
    return SentenceIndex(
        users=users,
        items=items,
        user_idx=user_idx,
        item_idx=item_idx,
        polarity=rating_polarity(ratings),
        user_sentence_counts=counts,
    )


def _accumulate(uu: np.ndarray, vv: np.ndarray, ww: np.ndarray, n_users: int):
    """Sum ww per (uu, vv) pair; returns sorted unique pairs with sums."""
    if uu.size == 0:
        e = np.empty(0, np.int64)
        return e, e.copy(), np.empty(0, np.float64)
    key = uu * np.int64(n_users) + vv
    uniq, inv = np.unique(key, return_inverse=True)
    sums = np.bincount(inv, weights=ww)
    return uniq // n_users, uniq % n_users, sums


def _dedup_pairs(a: np.ndarray, b: np.ndarray, span: int):
    """Unique (a, b) pairs, b in [0, span)."""
    if a.size == 0:
        e = np.empty(0, np.int64)
        return e, e.copy()
    key = a * np.int64(span) + b
    uniq = np.unique(key)
    return uniq // span, uniq % span


def _graph_pair_weights(graph: SentenceGraph, sidx: SentenceIndex, cfg: UserSimConfig):
    """(u_idx, v_idx, w) for one graph: match norm applied, many-to-many
    sums clamped at zero, user norm left to the caller."""
    U = sidx.n_users
    empty = (np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.float64))
    if graph.n_edges == 0:
        return empty
    heads, tails, _ = graph.edge_arrays()
    w = edge_weight_matrix(graph, cfg.edge_weight, sidx.polarity).ravel()
    head_sid = graph.vertex_ids[heads]
    tail_sid = graph.vertex_ids[tails]
    hu = sidx.user_idx[head_sid]
    tv = sidx.user_idx[tail_sid]
    cross = hu != tv

    if cfg.matching == "many_to_many":
        terms = w
        if cfg.match_norm in ("in_degree", "out_degree"):
            d_in, d_out = weighted_degrees(graph, cfg.edge_weight, sidx.polarity)
            d = d_in[tails] if cfg.match_norm == "in_degree" else d_out[heads]
            terms = np.where(d > 0, w / np.where(d > 0, d, 1.0), 0.0)
        uu, vv, ww = _accumulate(hu[cross], tv[cross], terms[cross], U)
        ww = np.maximum(ww, 0.0)
        return uu, vv, ww

    pos = cross & (w > 0)
    if cfg.matching == "one_to_one":
        uu, vv = _dedup_pairs(hu[pos], tv[pos], U)
        ww = np.ones(uu.size)
        if cfg.match_norm == "n_u":
            sizes = np.bincount(uu, minlength=U).astype(np.float64)
            ww = 1.0 / sizes[uu]
        return uu, vv, ww

    # many_to_one: one term per (head sentence, tail user) match
    hs_p, tv_p = _dedup_pairs(head_sid[pos], tv[pos], U)
    terms = np.ones(hs_p.size)
    if cfg.match_norm == "n_sigma":
        span = int(head_sid.max()) + 1 if head_sid.size else 0
        sizes = np.bincount(hs_p, minlength=span).astype(np.float64)
        terms = 1.0 / sizes[hs_p]
    return _accumulate(sidx.user_idx[hs_p], tv_p, terms, U)


def compute_user_weights(
    graphs: SentenceGraph | Mapping[str, SentenceGraph],
    sentences: Sequence[SentenceRecord],
    cfg: UserSimConfig,
) -> UserWeightMatrix:
    """Aggregate per-graph match weights into the sparse user matrix.

    For per-item scope, w(u, v) is the sum of the per-item weights. Only
    strictly positive final weights are stored.
    """
    cfg.validate()
    sidx = build_sentence_index(sentences)
    if isinstance(graphs, SentenceGraph):
        graph_list = [graphs]
        if cfg.graph_scope != "global":
            raise ValueError("per_item scope expects one graph per item")
    else:
        graph_list = [graphs[key] for key in sorted(graphs)]
        if cfg.graph_scope != "per_item":
            raise ValueError("global scope expects a single graph")
    parts_u, parts_v, parts_w = [], [], []
    for g in graph_list:
        uu, vv, ww = _graph_pair_weights(g, sidx, cfg)
        if ww.size == 0:
            continue
        if cfg.user_norm == "s_i":
            ww = ww / float(g.n_vertices)
        elif cfg.user_norm == "s_ui":
            in_graph = np.bincount(sidx.user_idx[g.vertex_ids], minlength=sidx.n_users)
            ww = ww / in_graph[uu].astype(np.float64)
        parts_u.append(uu)
        parts_v.append(vv)
        parts_w.append(ww)
    if parts_u:
        uu, vv, ww = _accumulate(
            np.concatenate(parts_u), np.concatenate(parts_v), np.concatenate(parts_w), sidx.n_users
        )
    else:
        uu = vv = np.empty(0, np.int64)
        ww = np.empty(0, np.float64)
    if cfg.user_norm == "s_v" and ww.size:
        ww = ww / sidx.user_sentence_counts[vv]
    return UserWeightMatrix.from_coo(sidx.users, uu, vv, ww)


@dataclass
class NeighborhoodSets:
    """Matched-user sets for one graph: per head sentence and per user."""

    per_sentence: dict[int, frozenset[str]]
    per_user: dict[str, frozenset[str]]
    owner: dict[int, str]
    sentence_counts: dict[str, int]


def build_neighborhood_sets(
    graph: SentenceGraph, sentences: Sequence[SentenceRecord], cfg: UserSimConfig
) -> NeighborhoodSets:
    """Users whose sentences appear with positive weight in each head
    sentence's neighborhood (the head's own user excluded)."""
    sidx = build_sentence_index(sentences)
    user_of = {s.sentence_id: s.user_id for s in sentences}
    per_sentence: dict[int, set[str]] = {int(s): set() for s in graph.vertex_ids}
    if graph.n_edges:
        heads, tails, _ = graph.edge_arrays()
        w = edge_weight_matrix(graph, cfg.edge_weight, sidx.polarity).ravel()
        for h, t, wt in zip(graph.vertex_ids[heads], graph.vertex_ids[tails], w):
            if wt <= 0:
                continue
            hu, tu = user_of[int(h)], user_of[int(t)]
            if hu != tu:
                per_sentence[int(h)].add(tu)
    per_user: dict[str, set[str]] = {}
    for sid, matched in per_sentence.items():
        per_user.setdefault(user_of[sid], set()).update(matched)
    return NeighborhoodSets(
        per_sentence={k: frozenset(v) for k, v in per_sentence.items()},
        per_user={k: frozenset(v) for k, v in per_user.items()},
        owner={int(s): user_of[int(s)] for s in graph.vertex_ids},
        sentence_counts=dict(Counter(s.user_id for s in sentences)),
    )


def _user_norm_divisor(v: str, sets: NeighborhoodSets, cfg: UserSimConfig) -> float:
    if cfg.user_norm == "none":
        return 1.0
    if cfg.user_norm == "s_v":
        return float(sets.sentence_counts.get(v, 0)) or 1.0
    raise ValueError(f"user norm {cfg.user_norm!r} is per-item; use compute_user_weights")


def one_to_one(u: str, v: str, sets: NeighborhoodSets, cfg: UserSimConfig) -> float:
    """1 if v matched any of u's sentences, optionally divided by |N(u)|."""
    if u == v:
        raise ValueError("u and v must differ")
    matched = sets.per_user.get(u, frozenset())
    w = 1.0 if v in matched else 0.0
    if cfg.match_norm == "n_u" and w:
        w /= len(matched)
    return w / _user_norm_divisor(v, sets, cfg) if w else 0.0


def many_to_one(u: str, v: str, sets: NeighborhoodSets, cfg: UserSimConfig) -> float:
    """Number of u's sentences whose neighborhood contains v, each term
    optionally divided by |N(sentence)|."""
    if u == v:
        raise ValueError("u and v must differ")
    total = 0.0
    for sid, matched in sorted(sets.per_sentence.items()):
        if sets.owner[sid] != u or v not in matched:
            continue
        total += 1.0 / len(matched) if cfg.match_norm == "n_sigma" else 1.0
    return total / _user_norm_divisor(v, sets, cfg) if total else 0.0


def many_to_many(
    u: str,
    v: str,
    graphs: SentenceGraph | Mapping[str, SentenceGraph],
    sentences: Sequence[SentenceRecord],
    cfg: UserSimConfig,
) -> float:
    """Clamped sum of edge weights over all (sentence of u, sentence of v)
    pairs, per graph, summed across graphs."""
    if u == v:
        raise ValueError("u and v must differ")
    sidx = build_sentence_index(sentences)
    user_of = {s.sentence_id: s.user_id for s in sentences}
    graph_list = [graphs] if isinstance(graphs, SentenceGraph) else [graphs[k] for k in sorted(graphs)]
    total = 0.0
    for g in graph_list:
        if g.n_edges == 0:
            continue
        heads, tails, _ = g.edge_arrays()
        w = edge_weight_matrix(g, cfg.edge_weight, sidx.polarity).ravel()
        d_in, d_out = weighted_degrees(g, cfg.edge_weight, sidx.polarity)
        acc = 0.0
        for pos in range(heads.size):
            h, t = int(heads[pos]), int(tails[pos])
            hs, ts = int(g.vertex_ids[h]), int(g.vertex_ids[t])
            if user_of[hs] != u or user_of[ts] != v:
                continue
            term = float(w[pos])
            if cfg.match_norm == "in_degree":
                term = term / d_in[t] if d_in[t] > 0 else 0.0
            elif cfg.match_norm == "out_degree":
                term = term / d_out[h] if d_out[h] > 0 else 0.0
            acc += term
        total += max(acc, 0.0)
    return total


def cooccurrence_weights(sentences: Sequence[SentenceRecord], variant: str) -> UserWeightMatrix:
    """Similarity-agnostic ablation weights from per-item sentence counts.

    Per item i with c_u = |sentences u wrote on i|:
      indicator: 1 if both wrote on i;  u_count: c_u;  product: c_u * c_v.
    Summed over items.
    """
    if variant not in ("indicator", "u_count", "product"):
        raise ValueError(f"unknown co-occurrence variant {variant!r}")
    sidx = build_sentence_index(sentences)
    U = sidx.n_users
    item_user = Counter((s.item_id, s.user_id) for s in sentences)
    by_item: dict[str, list[tuple[int, float]]] = {}
    uindex = {u: i for i, u in enumerate(sidx.users)}
    for (item, user), c in item_user.items():
        by_item.setdefault(item, []).append((uindex[user], float(c)))
    parts_u, parts_v, parts_w = [], [], []
    for item in sorted(by_item):
        writers = sorted(by_item[item])
        idx = np.array([w[0] for w in writers], dtype=np.int64)
        cnt = np.array([w[1] for w in writers])
        m = idx.size
        if m < 2:
            continue
        uu = np.repeat(idx, m)
        vv = np.tile(idx, m)
        cu = np.repeat(cnt, m)
        cv = np.tile(cnt, m)
        keep = uu != vv
        if variant == "indicator":
            w = np.ones(uu.size)
        elif variant == "u_count":
            w = cu
        else:
            w = cu * cv
        parts_u.append(uu[keep])
        parts_v.append(vv[keep])
        parts_w.append(w[keep])
    if parts_u:
        uu, vv, ww = _accumulate(
            np.concatenate(parts_u), np.concatenate(parts_v), np.concatenate(parts_w), U
        )
    else:
        uu = vv = np.empty(0, np.int64)
        ww = np.empty(0, np.float64)
    return UserWeightMatrix.from_coo(sidx.users, uu, vv, ww)


def top_neighbors(user: str, raters: Iterable[str], weights, kprime: int) -> list[tuple[str, float]]:
    """The <= k' raters with the largest positive weight for `user`,
    ranked by descending weight then ascending user id."""
    if kprime < 1:
        raise ValueError("k' must be >= 1")
    scored = []
    for v in raters:
        if v == user:
            continue
        w = weights.get(user, v)
        if w > 0:
            scored.append((v, float(w)))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:kprime]


def dump_weights_tsv(weights: UserWeightMatrix, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("user\tneighbor\tweight\n")
        for u, v, w in weights.pairs():
            fh.write(f"{u}\t{v}\t{w:.12g}\n")
