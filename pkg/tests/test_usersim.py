import numpy as np
import pytest

from textknn.corpus import SentenceRecord
from textknn.embeddings import EmbeddingTable
from textknn.graph import EdgeWeightConfig, SentenceGraph, build_knn_graph
from textknn.usersim import (
    MATCH_NORMS,
    MATCHINGS,
    USER_NORMS,
    NeighborhoodSets,
    UserSimConfig,
    UserWeightMatrix,
    build_neighborhood_sets,
    compute_user_weights,
    cooccurrence_weights,
    dump_weights_tsv,
    many_to_many,
    many_to_one,
    one_to_one,
    top_neighbors,
)

from oracles import GraphRef, brute_user_weights


def sent(sid, user, item="i0", rating=4.0):
    return SentenceRecord(
        sentence_id=sid, user_id=user, item_id=item, review_rating=rating, ordinal=0, text=f"s{sid}."
    )


def random_corpus(rng, n_sentences, n_users, n_items, dim=6):
    sents = []
    for sid in range(n_sentences):
        sents.append(
            sent(
                sid,
                user=f"u{rng.integers(n_users)}",
                item=f"i{rng.integers(n_items)}",
                rating=float(rng.integers(1, 6)),
            )
        )
    x = rng.normal(size=(n_sentences, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return sents, EmbeddingTable(vectors=x.astype(np.float32))


def all_valid_configs():
    out = []
    for scope in ("global", "per_item"):
        for matching in MATCHINGS:
            for scheme in ("binary", "continuous"):
                for polarized in (False, True):
                    for unorm in USER_NORMS:
                        for mnorm in MATCH_NORMS:
                            cfg = UserSimConfig(
                                matching=matching,
                                edge_weight=EdgeWeightConfig(scheme=scheme, polarized=polarized),
                                graph_scope=scope,
                                user_norm=unorm,
                                match_norm=mnorm,
                            )
                            if cfg.is_valid():
                                out.append(cfg)
    return out


# ----------------------------------------------------------- config rules


def test_config_validity_rules():
    assert UserSimConfig().is_valid()
    assert not UserSimConfig(user_norm="s_i").is_valid()  # needs per_item
    assert not UserSimConfig(user_norm="s_ui").is_valid()
    assert UserSimConfig(user_norm="s_i", graph_scope="per_item").is_valid()
    assert not UserSimConfig(matching="one_to_one", match_norm="n_sigma").is_valid()
    assert not UserSimConfig(matching="many_to_one", match_norm="n_u").is_valid()
    assert not UserSimConfig(matching="many_to_many", match_norm="n_u").is_valid()
    assert UserSimConfig(matching="many_to_many", match_norm="in_degree").is_valid()
    assert not UserSimConfig(matching="one_to_one", match_norm="out_degree").is_valid()
    with pytest.raises(ValueError):
        UserSimConfig(matching="some_to_some").validate()


def test_all_valid_configs_count():
    # 7 matching/match-norm combos x 2 schemes x 2 polarizations, with
    # 2 user norms globally and 4 per item
    assert len(all_valid_configs()) == 7 * 2 * 2 * 2 + 7 * 2 * 2 * 4


# ------------------------------------------------------- weight matrix API


def test_weight_matrix_basics():
    users = ["a", "b", "c"]
    uu = np.array([0, 0, 2])
    vv = np.array([1, 2, 0])
    ww = np.array([2.0, 0.5, 1.0])
    m = UserWeightMatrix.from_coo(users, uu, vv, ww)
    assert m.nnz == 3
    assert m.get("a", "b") == 2.0
    assert m.get("a", "c") == 0.5
    assert m.get("b", "a") == 0.0
    assert m.get("missing", "a") == 0.0
    assert m.row("a") == [("b", 2.0), ("c", 0.5)]
    assert list(m.pairs()) == [("a", "b", 2.0), ("a", "c", 0.5), ("c", "a", 1.0)]


def test_weight_matrix_drops_zeros_and_rejects_diagonal():
    users = ["a", "b"]
    m = UserWeightMatrix.from_coo(users, np.array([0]), np.array([1]), np.array([0.0]))
    assert m.nnz == 0
    with pytest.raises(ValueError):
        UserWeightMatrix.from_coo(users, np.array([1]), np.array([1]), np.array([1.0]))


# -------------------------------------------------------------- scalar ops


def hand_sets(per_sentence, owner, counts):
    per_user: dict[str, set] = {}
    for sid, matched in per_sentence.items():
        per_user.setdefault(owner[sid], set()).update(matched)
    return NeighborhoodSets(
        per_sentence={k: frozenset(v) for k, v in per_sentence.items()},
        per_user={k: frozenset(v) for k, v in per_user.items()},
        owner=owner,
        sentence_counts=counts,
    )


def test_one_to_one_indicator_semantics():
    # v matched via several of u's sentences is still 1
    sets = hand_sets(
        per_sentence={0: {"v"}, 1: {"v"}, 2: {"v", "w"}, 3: set(), 4: set()},
        owner={i: "u" for i in range(5)},
        counts={"u": 5, "v": 7, "w": 1},
    )
    cfg = UserSimConfig(matching="one_to_one")
    assert one_to_one("u", "v", sets, cfg) == 1.0
    assert one_to_one("u", "missing", sets, cfg) == 0.0


def test_one_to_one_normalized_by_neighborhood_size():
    sets = hand_sets(
        per_sentence={0: {"a", "b", "c", "d"}},
        owner={0: "u"},
        counts={"u": 1, "a": 1, "b": 1, "c": 1, "d": 1},
    )
    cfg = UserSimConfig(matching="one_to_one", match_norm="n_u")
    assert one_to_one("u", "a", sets, cfg) == 0.25


def test_one_to_one_empty_neighborhood_no_division():
    sets = hand_sets(per_sentence={0: set()}, owner={0: "u"}, counts={"u": 1})
    cfg = UserSimConfig(matching="one_to_one", match_norm="n_u")
    assert one_to_one("u", "v", sets, cfg) == 0.0


def test_many_to_one_counts_matching_sentences():
    per_sentence = {0: {"v"}, 1: {"v", "w"}, 2: {"v"}, 3: {"w"}, 4: set()}
    sets = hand_sets(per_sentence, {i: "u" for i in range(5)}, {"u": 5, "v": 3, "w": 2})
    cfg = UserSimConfig(matching="many_to_one")
    assert many_to_one("u", "v", sets, cfg) == 3.0
    assert many_to_one("u", "missing", sets, cfg) == 0.0


def test_many_to_one_per_term_normalization():
    # three matching sentences, each with |N(sigma)| = 2 -> 3 * 1/2
    per_sentence = {0: {"v", "w"}, 1: {"v", "x"}, 2: {"v", "w"}}
    sets = hand_sets(per_sentence, {i: "u" for i in range(3)}, {"u": 3, "v": 1, "w": 1, "x": 1})
    cfg = UserSimConfig(matching="many_to_one", match_norm="n_sigma")
    assert many_to_one("u", "v", sets, cfg) == 1.5


def test_scalar_ops_reject_self_pairs():
    sets = hand_sets(per_sentence={}, owner={}, counts={})
    with pytest.raises(ValueError):
        one_to_one("u", "u", sets, UserSimConfig(matching="one_to_one"))
    with pytest.raises(ValueError):
        many_to_one("u", "u", sets, UserSimConfig(matching="many_to_one"))


def _hand_graph(vertex_ids, edges, n_slots):
    """Graph with exactly one out-edge per vertex, from an edge dict."""
    order = {sid: j for j, sid in enumerate(vertex_ids)}
    neighbors = np.array([[order[edges[sid][0]]] for sid in vertex_ids], dtype=np.int64)
    sims = np.array([[edges[sid][1]] for sid in vertex_ids])
    return SentenceGraph(
        vertex_ids=np.array(vertex_ids, dtype=np.int64), neighbors=neighbors, sims=sims, k=1
    )


def test_many_to_many_hand_sum():
    # u's sentences 0,1 point at v's sentences 2,3 with cosines .8 / .4
    sents = [sent(0, "u"), sent(1, "u"), sent(2, "v"), sent(3, "v")]
    g = _hand_graph([0, 1, 2, 3], {0: (2, 0.8), 1: (3, 0.4), 2: (0, 0.0), 3: (1, 0.0)}, 4)
    cfg = UserSimConfig(matching="many_to_many", edge_weight=EdgeWeightConfig("continuous"))
    assert many_to_many("u", "v", g, sents, cfg) == pytest.approx(0.9 + 0.7, abs=1e-12)


def test_many_to_many_polarized_negative_clamps_to_zero():
    sents = [sent(0, "u", rating=5.0), sent(1, "u", rating=5.0), sent(2, "v", rating=1.0), sent(3, "v", rating=1.0)]
    g = _hand_graph([0, 1, 2, 3], {0: (2, 0.8), 1: (3, 0.4), 2: (0, 0.0), 3: (1, 0.0)}, 4)
    cfg = UserSimConfig(
        matching="many_to_many", edge_weight=EdgeWeightConfig("continuous", polarized=True)
    )
    assert many_to_many("u", "v", g, sents, cfg) == 0.0


def test_many_to_many_in_degree_normalization():
    # tail sentence 3 has in-degree 0.8 + 0.6 + 0.6 = 2.0; u's single edge
    # carries weight 0.8 -> 0.4
    sents = [sent(0, "u"), sent(1, "w1"), sent(2, "w2"), sent(3, "v")]
    edges = {0: (3, 0.6), 1: (3, 0.2), 2: (3, 0.2), 3: (0, -1.0)}
    g = _hand_graph([0, 1, 2, 3], edges, 4)
    cfg = UserSimConfig(
        matching="many_to_many",
        edge_weight=EdgeWeightConfig("continuous"),
        match_norm="in_degree",
    )
    assert many_to_many("u", "v", g, sents, cfg) == pytest.approx(0.8 / 2.0, abs=1e-12)


# --------------------------------------------------------- pipeline weights


def test_user_with_no_sentences_has_no_row():
    sents = [sent(0, "a"), sent(1, "b")]
    g = _hand_graph([0, 1], {0: (1, 0.5), 1: (0, 0.5)}, 2)
    w = compute_user_weights(g, sents, UserSimConfig(matching="one_to_one"))
    assert w.row("zzz") == []
    assert w.get("a", "b") == 1.0


def test_per_item_weights_sum():
    # two items; in each, one u-sentence matches one v-sentence (binary)
    sents = [
        sent(0, "u", item="i1"),
        sent(1, "v", item="i1"),
        sent(2, "u", item="i2"),
        sent(3, "v", item="i2"),
        sent(4, "v", item="i2"),
    ]
    g1 = _hand_graph([0, 1], {0: (1, 0.5), 1: (0, 0.5)}, 2)
    g2 = _hand_graph([2, 3, 4], {2: (3, 0.5), 3: (2, 0.5), 4: (2, 0.5)}, 3)
    cfg = UserSimConfig(
        matching="many_to_many",
        edge_weight=EdgeWeightConfig("binary"),
        graph_scope="per_item",
    )
    w = compute_user_weights({"i1": g1, "i2": g2}, sents, cfg)
    # i1 contributes 1 edge, i2 contributes 1 edge (u->v only)
    assert w.get("u", "v") == 2.0
    assert w.get("v", "u") == 3.0


def test_same_user_matches_never_count():
    sents = [sent(0, "u"), sent(1, "u")]
    g = _hand_graph([0, 1], {0: (1, 1.0), 1: (0, 1.0)}, 2)
    for matching in MATCHINGS:
        w = compute_user_weights(g, sents, UserSimConfig(matching=matching))
        assert w.nnz == 0


def test_scope_mismatch_rejected():
    sents = [sent(0, "a"), sent(1, "b")]
    g = _hand_graph([0, 1], {0: (1, 0.5), 1: (0, 0.5)}, 2)
    with pytest.raises(ValueError):
        compute_user_weights(g, sents, UserSimConfig(graph_scope="per_item"))
    with pytest.raises(ValueError):
        compute_user_weights({"i0": g}, sents, UserSimConfig(graph_scope="global"))


def test_scheme_equivalence_single_sentence_users():
    # every user wrote exactly one sentence: many_to_one == one_to_one
    rng = np.random.default_rng(17)
    sents = [sent(i, f"u{i}", item=f"i{rng.integers(3)}", rating=float(rng.integers(1, 6))) for i in range(20)]
    x = rng.normal(size=(20, 5))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    table = EmbeddingTable(vectors=x.astype(np.float32))
    g = build_knn_graph(table, sents, k=4)
    base = dict(edge_weight=EdgeWeightConfig("binary"), graph_scope="global")
    w1 = compute_user_weights(g, sents, UserSimConfig(matching="one_to_one", **base))
    w2 = compute_user_weights(g, sents, UserSimConfig(matching="many_to_one", **base))
    assert sorted(w1.pairs()) == sorted(w2.pairs())


@pytest.mark.parametrize("seed", [0, 1])
def test_pipeline_matches_brute_force_all_configs(seed):
    rng = np.random.default_rng(seed)
    sents, table = random_corpus(rng, n_sentences=40, n_users=8, n_items=4)
    global_graph = build_knn_graph(table, sents, k=5)
    item_graphs = build_knn_graph(table, sents, k=3, scope="per_item")
    for cfg in all_valid_configs():
        graphs = global_graph if cfg.graph_scope == "global" else item_graphs
        ours = compute_user_weights(graphs, sents, cfg)
        refs = (
            [GraphRef.from_graph(global_graph)]
            if cfg.graph_scope == "global"
            else [GraphRef.from_graph(g) for g in item_graphs.values()]
        )
        expected = brute_user_weights(
            refs,
            sents,
            {
                "matching": cfg.matching,
                "scheme": cfg.edge_weight.scheme,
                "polarized": cfg.edge_weight.polarized,
                "user_norm": cfg.user_norm,
                "match_norm": cfg.match_norm,
            },
        )
        got = {(u, v): w for u, v, w in ours.pairs()}
        assert set(got) == set(expected), cfg
        for key in expected:
            assert got[key] == pytest.approx(expected[key], abs=1e-9), (cfg, key)


def test_nonnegativity_across_configs():
    rng = np.random.default_rng(23)
    sents, table = random_corpus(rng, n_sentences=30, n_users=6, n_items=3)
    global_graph = build_knn_graph(table, sents, k=4)
    item_graphs = build_knn_graph(table, sents, k=4, scope="per_item")
    for cfg in all_valid_configs():
        graphs = global_graph if cfg.graph_scope == "global" else item_graphs
        w = compute_user_weights(graphs, sents, cfg)
        assert all(weight > 0 for _, _, weight in w.pairs())


def test_neighborhood_sets_match_scalar_ops():
    rng = np.random.default_rng(31)
    sents, table = random_corpus(rng, n_sentences=25, n_users=5, n_items=2)
    g = build_knn_graph(table, sents, k=3)
    cfg = UserSimConfig(matching="one_to_one", edge_weight=EdgeWeightConfig("continuous"))
    sets = build_neighborhood_sets(g, sents, cfg)
    w = compute_user_weights(g, sents, cfg)
    users = sorted({s.user_id for s in sents})
    for u in users:
        for v in users:
            if u == v:
                continue
            assert one_to_one(u, v, sets, cfg) == w.get(u, v)


# ------------------------------------------------------------ co-occurrence


def co_sents():
    return [
        sent(0, "u", item="i1"),
        sent(1, "u", item="i1"),
        sent(2, "v", item="i1"),
        sent(3, "v", item="i1"),
        sent(4, "v", item="i1"),
    ]


def test_cooccurrence_product():
    w = cooccurrence_weights(co_sents(), "product")
    assert w.get("u", "v") == 6.0
    assert w.get("v", "u") == 6.0


def test_cooccurrence_u_count_is_asymmetric():
    w = cooccurrence_weights(co_sents(), "u_count")
    assert w.get("u", "v") == 2.0
    assert w.get("v", "u") == 3.0


def test_cooccurrence_indicator_counts_items():
    sents = []
    sid = 0
    for j in range(4):
        sents.append(sent(sid, "u", item=f"i{j}")); sid += 1
        sents.append(sent(sid, "v", item=f"i{j}")); sid += 1
    w = cooccurrence_weights(sents, "indicator")
    assert w.get("u", "v") == 4.0


def test_cooccurrence_no_shared_items():
    sents = [sent(0, "u", item="i1"), sent(1, "v", item="i2")]
    w = cooccurrence_weights(sents, "indicator")
    assert w.get("u", "v") == 0.0


def test_cooccurrence_unknown_variant():
    with pytest.raises(ValueError):
        cooccurrence_weights(co_sents(), "squared")


# ------------------------------------------------------------ top neighbors


class DictWeights:
    def __init__(self, entries):
        self.entries = entries

    def get(self, u, v):
        return self.entries.get((u, v), 0.0)


def test_top_neighbors_orders_by_weight():
    w = DictWeights({("u", "a"): 3.0, ("u", "b"): 5.0})
    got = top_neighbors("u", ["a", "b"], w, kprime=40)
    assert got == [("b", 5.0), ("a", 3.0)]


def test_top_neighbors_caps_at_kprime():
    entries = {("u", f"v{j:02d}"): 1.0 + j for j in range(50)}
    w = DictWeights(entries)
    got = top_neighbors("u", sorted(v for _, v in entries), w, kprime=40)
    assert len(got) == 40
    assert got[0] == ("v49", 50.0)


def test_top_neighbors_ties_by_ascending_id():
    w = DictWeights({("u", "b"): 1.0, ("u", "a"): 1.0, ("u", "c"): 1.0})
    got = top_neighbors("u", ["c", "b", "a"], w, kprime=2)
    assert got == [("a", 1.0), ("b", 1.0)]


def test_top_neighbors_filters_nonpositive_and_self():
    w = DictWeights({("u", "a"): 0.0, ("u", "u"): 9.0, ("u", "b"): 0.5})
    assert top_neighbors("u", ["a", "u", "b"], w, kprime=10) == [("b", 0.5)]
    with pytest.raises(ValueError):
        top_neighbors("u", [], w, kprime=0)


def test_dump_weights(tmp_path):
    sents = [sent(0, "a"), sent(1, "b")]
    g = _hand_graph([0, 1], {0: (1, 0.5), 1: (0, 0.5)}, 2)
    w = compute_user_weights(g, sents, UserSimConfig(matching="one_to_one"))
    path = tmp_path / "w.tsv"
    dump_weights_tsv(w, path)
    assert path.read_text().splitlines()[0] == "user\tneighbor\tweight"
