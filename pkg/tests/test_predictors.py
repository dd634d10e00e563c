import numpy as np
import pytest

from textknn.corpus import Dataset, Interaction
from textknn.predictors import (
    BaselineModel,
    MsdSimilarity,
    RatingTable,
    baseline_predict,
    bknn_predict,
    fit_baseline,
    fit_normal,
    fit_svd,
    knn_predict,
    msd_similarity,
    normal_predict,
    svd_predict,
    uniform_predict,
)

from oracles import baseline_normal_equations, brute_baseline_residual, brute_weighted_mean


def make(u, i, r, t=0):
    return Interaction(user_id=u, item_id=i, rating=r, timestamp=t)


class DictWeights:
    def __init__(self, entries):
        self.entries = entries

    def get(self, u, v):
        return self.entries.get((u, v), 0.0)


# ------------------------------------------------------------ rating table


def test_rating_table_latest_rating_wins():
    train = Dataset(
        [make("u", "i", 2.0, t=10), make("u", "i", 5.0, t=30), make("u", "i", 3.0, t=20)]
    )
    table = RatingTable(train)
    assert table.rating("u", "i") == 5.0
    assert table.raters("i") == [("u", 5.0)]


def test_rating_table_duplicate_timestamp_keeps_later_input():
    train = Dataset([make("u", "i", 2.0, t=10), make("u", "i", 4.0, t=10)])
    assert RatingTable(train).rating("u", "i") == 4.0


def test_rating_table_empty_train():
    with pytest.raises(ValueError):
        RatingTable(Dataset([]))


# --------------------------------------------------------------- baseline


def test_baseline_constant_ratings():
    train = Dataset([make(f"u{j}", f"i{k}", 4.0) for j in range(3) for k in range(3)])
    model = fit_baseline(train)
    assert model.mu == 4.0
    assert all(abs(b) < 1e-12 for b in model.b_u.values())
    assert all(abs(b) < 1e-12 for b in model.b_i.values())


def test_baseline_huge_regularization_kills_biases():
    train = Dataset([make("a", "x", 5.0), make("b", "x", 1.0), make("a", "y", 3.0)])
    model = fit_baseline(train, reg_u=1e12, reg_i=1e12, epochs=10)
    for b in list(model.b_u.values()) + list(model.b_i.values()):
        assert abs(b) < 1e-9
    assert model.predict("a", "x") == pytest.approx(model.mu, abs=1e-8)


def test_baseline_matches_normal_equations():
    train = Dataset(
        [
            make("a", "x", 5.0),
            make("a", "y", 3.0),
            make("b", "x", 4.0),
            make("b", "y", 1.0),
            make("c", "x", 2.0),
        ]
    )
    model = fit_baseline(train, reg_u=15.0, reg_i=10.0, epochs=50)
    mu, bu, bi = baseline_normal_equations(train, reg_u=15.0, reg_i=10.0)
    assert model.mu == mu
    for u in bu:
        assert model.b_u[u] == pytest.approx(bu[u], abs=1e-6)
    for i in bi:
        assert model.b_i[i] == pytest.approx(bi[i], abs=1e-6)


def test_baseline_unknown_keys_have_zero_bias():
    train = Dataset([make("a", "x", 5.0), make("b", "x", 1.0)])
    model = fit_baseline(train)
    assert model.predict("stranger", "x") == model.mu + model.b_i["x"]
    assert model.predict("a", "unknown") == model.mu + model.b_u["a"]


def test_baseline_predict_outcome_clamped():
    model = BaselineModel(mu=4.9, b_u={"u": 0.4}, b_i={"i": 0.4})
    assert baseline_predict(model, "u", "i").estimate == 5.0


def test_baseline_empty_train_fatal():
    with pytest.raises(ValueError):
        fit_baseline(Dataset([]))


# -------------------------------------------------------------------- knn


def rating_fixture():
    return RatingTable(
        Dataset(
            [
                make("a", "i", 4.0),
                make("b", "i", 2.0),
                make("c", "j", 5.0),
                make("u", "j", 1.0),
            ]
        )
    )


def test_knn_single_neighbor_returns_its_rating():
    table = rating_fixture()
    w = DictWeights({("u", "a"): 0.7})
    out = knn_predict("u", "i", w, table)
    assert out.estimate == 4.0
    assert not out.fallback_used
    assert out.neighbors == (("a", 0.7, 4.0),)


def test_knn_weighted_mean():
    table = rating_fixture()
    w = DictWeights({("u", "a"): 1.0, ("u", "b"): 3.0})
    out = knn_predict("u", "i", w, table)
    assert out.estimate == pytest.approx((1 * 4 + 3 * 2) / 4, abs=1e-12)


def test_knn_fallback_to_mu():
    table = rating_fixture()
    out = knn_predict("u", "i", DictWeights({}), table)
    assert out.fallback_used
    assert out.estimate == pytest.approx(table.mu, abs=1e-12)
    explicit = knn_predict("u", "nowhere", DictWeights({}), table, mu=3.3)
    assert explicit.estimate == 3.3


def test_knn_scale_invariance_and_convexity():
    rng = np.random.default_rng(0)
    for _ in range(25):
        raters = [(f"v{j}", float(rng.integers(1, 6))) for j in range(rng.integers(1, 8))]
        train = Dataset([make(v, "i", r) for v, r in raters])
        table = RatingTable(train)
        entries = {("u", v): float(rng.uniform(0.1, 3)) for v, _ in raters}
        out1 = knn_predict("u", "i", DictWeights(entries), table, kprime=5)
        scaled = {k: 17.5 * w for k, w in entries.items()}
        out2 = knn_predict("u", "i", DictWeights(scaled), table, kprime=5)
        assert out1.estimate == pytest.approx(out2.estimate, abs=1e-12)
        assert [v for v, _, _ in out1.neighbors] == [v for v, _, _ in out2.neighbors]
        ratings = [r for _, _, r in out1.neighbors]
        assert min(ratings) - 1e-12 <= out1.estimate <= max(ratings) + 1e-12


def test_knn_matches_direct_transcription():
    table = rating_fixture()
    w = DictWeights({("u", "a"): 0.9, ("u", "b"): 0.4})
    out = knn_predict("u", "i", w, table)
    assert out.estimate == pytest.approx(brute_weighted_mean([(0.9, 4.0), (0.4, 2.0)]), abs=1e-12)


# ------------------------------------------------------------------- bknn


def test_bknn_zero_residuals_give_baseline():
    table = rating_fixture()
    model = BaselineModel(mu=3.0, b_u={"a": 1.0, "b": -1.0, "u": 0.5}, b_i={"i": 0.0})
    # neighbors rate exactly their own baseline: r_a=4=3+1, r_b=2=3-1
    w = DictWeights({("u", "a"): 1.0, ("u", "b"): 2.0})
    out = bknn_predict("u", "i", w, table, model)
    assert out.estimate == pytest.approx(3.5, abs=1e-12)


def test_bknn_single_residual():
    table = RatingTable(Dataset([make("a", "i", 4.0)]))
    model = BaselineModel(mu=3.0, b_u={"a": 0.0, "u": 0.0}, b_i={"i": 0.0})
    out = bknn_predict("u", "i", DictWeights({("u", "a"): 2.0}), table, model)
    assert out.estimate == pytest.approx(3.0 + (4.0 - 3.0), abs=1e-12)


def test_bknn_fixture_matches_hand_evaluation():
    table = rating_fixture()
    model = BaselineModel(mu=3.1, b_u={"a": 0.2, "b": -0.3, "u": 0.1}, b_i={"i": -0.2})
    w = DictWeights({("u", "a"): 0.6, ("u", "b"): 1.1})
    out = bknn_predict("u", "i", w, table, model)
    b_ui = 3.1 + 0.1 - 0.2
    expected = brute_baseline_residual(
        b_ui, [(0.6, 4.0, 3.1 + 0.2 - 0.2), (1.1, 2.0, 3.1 - 0.3 - 0.2)]
    )
    assert out.estimate == pytest.approx(expected, abs=1e-9)


def test_bknn_empty_neighborhood_falls_back_to_bias():
    table = rating_fixture()
    model = BaselineModel(mu=3.0, b_u={"u": 0.4}, b_i={"i": 0.3})
    out = bknn_predict("u", "nowhere", DictWeights({}), table, model)
    assert out.fallback_used
    assert out.estimate == pytest.approx(3.4, abs=1e-12)


def test_bknn_with_zero_biases_equals_knn():
    # with mu and all biases at zero the residual form reduces to the
    # plain weighted mean
    table = rating_fixture()
    w = DictWeights({("u", "a"): 0.9, ("u", "b"): 0.4})
    knn = knn_predict("u", "i", w, table)
    bknn = bknn_predict("u", "i", w, table, BaselineModel(mu=0.0, b_u={}, b_i={}))
    assert bknn.estimate == pytest.approx(knn.estimate, abs=1e-12)


# -------------------------------------------------------------------- msd


def test_msd_identical_vectors():
    train = Dataset(
        [make("a", f"i{k}", r, t=k) for k, r in enumerate([5.0, 3.0, 1.0])]
        + [make("b", f"i{k}", r, t=k) for k, r in enumerate([5.0, 3.0, 1.0])]
    )
    sim = msd_similarity(train)
    assert sim.get("a", "b") == 1.0
    assert sim.get("b", "a") == 1.0


def test_msd_unit_differences():
    train = Dataset(
        [make("a", f"i{k}", r, t=k) for k, r in enumerate([4.0, 3.0, 2.0])]
        + [make("b", f"i{k}", r, t=k) for k, r in enumerate([5.0, 4.0, 3.0])]
    )
    sim = msd_similarity(train)
    assert sim.get("a", "b") == pytest.approx(0.5, abs=1e-12)


def test_msd_no_corated_items_absent():
    train = Dataset([make("a", "x", 4.0), make("b", "y", 4.0)])
    sim = msd_similarity(train)
    assert sim.nnz == 0
    assert sim.get("a", "b") == 0.0


def test_msd_min_support():
    train = Dataset([make("a", "x", 4.0), make("b", "x", 4.0)])
    assert msd_similarity(train, min_support=1).get("a", "b") == 1.0
    assert msd_similarity(train, min_support=2).get("a", "b") == 0.0


def test_msd_range_property():
    rng = np.random.default_rng(3)
    inter = []
    t = 0
    for u in range(8):
        for i in range(6):
            if rng.random() < 0.6:
                inter.append(make(f"u{u}", f"i{i}", float(rng.integers(1, 6)), t))
                t += 1
    sim = msd_similarity(Dataset(inter))
    for u, v, w in sim.pairs():
        assert 0.0 < w <= 1.0
        assert sim.get(u, v) == sim.get(v, u)


# ------------------------------------------------------------ random picks


def test_uniform_deterministic_per_seed():
    a = [uniform_predict("u", "i", np.random.default_rng(42)).estimate for _ in range(1)]
    b = [uniform_predict("u", "i", np.random.default_rng(42)).estimate for _ in range(1)]
    assert a == b
    rng = np.random.default_rng(1)
    seq1 = [uniform_predict("u", "i", rng).estimate for _ in range(5)]
    rng = np.random.default_rng(1)
    seq2 = [uniform_predict("u", "i", rng).estimate for _ in range(5)]
    assert seq1 == seq2


def test_uniform_monte_carlo_mean():
    rng = np.random.default_rng(7)
    draws = [uniform_predict("u", "i", rng).estimate for _ in range(100_000)]
    assert np.mean(draws) == pytest.approx(3.0, abs=0.02)
    assert min(draws) >= 1.0 and max(draws) <= 5.0


def test_normal_degenerate_sigma():
    train = Dataset([make("a", "x", 5.0), make("b", "y", 5.0)])
    model = fit_normal(train)
    assert model.sigma == 0.0
    rng = np.random.default_rng(0)
    assert normal_predict("u", "i", model, rng).estimate == 5.0


def test_normal_clamped_draws():
    train = Dataset([make("a", "x", 1.0), make("b", "y", 5.0)])
    model = fit_normal(train)
    rng = np.random.default_rng(5)
    draws = [normal_predict("u", "i", model, rng).estimate for _ in range(500)]
    assert all(1.0 <= d <= 5.0 for d in draws)


# -------------------------------------------------------------------- svd


def svd_fixture(seed=0, n=100):
    rng = np.random.default_rng(seed)
    inter = []
    for t in range(n):
        u = int(rng.integers(12))
        i = int(rng.integers(10))
        base = 1.0 + (u + i) % 5
        inter.append(make(f"u{u:02d}", f"i{i:02d}", float(base), t))
    return Dataset(inter)


def test_svd_beats_global_mean_on_train():
    train = svd_fixture()
    model = fit_svd(train, factors=8, epochs=20, seed=0)
    errs, base_errs = [], []
    for it in train.interactions:
        est = svd_predict(model, it.user_id, it.item_id).estimate
        errs.append((est - it.rating) ** 2)
        base_errs.append((model.mu - it.rating) ** 2)
    assert np.sqrt(np.mean(errs)) < np.sqrt(np.mean(base_errs))


def test_svd_zero_factors_reduces_to_bias_sgd():
    train = svd_fixture(seed=1, n=60)
    model = fit_svd(train, factors=0, epochs=20, seed=3)
    assert model.p.shape[1] == 0
    est = svd_predict(model, train.interactions[0].user_id, train.interactions[0].item_id)
    # prediction is exactly mu + b_u + b_i
    j = model._uindex[train.interactions[0].user_id]
    k = model._iindex[train.interactions[0].item_id]
    assert est.estimate == pytest.approx(
        min(5.0, max(1.0, model.mu + model.bu[j] + model.bi[k])), abs=1e-12
    )


def test_svd_unseen_user_predicts_mu():
    train = svd_fixture(seed=2, n=40)
    model = fit_svd(train, factors=4, epochs=5, seed=0)
    out = svd_predict(model, "stranger", train.interactions[0].item_id)
    assert out.estimate == pytest.approx(min(5.0, max(1.0, model.mu)), abs=1e-12)
    assert out.fallback_used


def test_svd_deterministic_given_seed():
    train = svd_fixture(seed=4, n=50)
    m1 = fit_svd(train, factors=6, epochs=5, seed=11)
    m2 = fit_svd(train, factors=6, epochs=5, seed=11)
    np.testing.assert_array_equal(m1.p, m2.p)
    np.testing.assert_array_equal(m1.bu, m2.bu)


def test_model_dumps(tmp_path):
    train = svd_fixture(seed=5, n=30)
    fit_baseline(train).to_json(tmp_path / "baseline.json")
    fit_svd(train, factors=2, epochs=2).to_json(tmp_path / "svd.json")
    assert (tmp_path / "baseline.json").exists()
    assert (tmp_path / "svd.json").exists()
