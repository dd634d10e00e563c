"""Rating predictors.

Covers the full comparison set: the bias baseline (mu + b_u + b_i fit by
alternating least squares), neighborhood regressors over any user-weight
source (plain weighted mean and the baseline-aware residual variant),
rating-based MSD similarity, the two random baselines, and Funk-style SVD.
All estimates are clamped to the rating scale; empty neighborhoods fall
back to the global mean (or the bias estimate for the baseline-aware
variant) and are flagged so evaluation can report fallback rates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import msd_pairs, sgd_epochs
from .corpus import Dataset
from .usersim import top_neighbors

RATING_MIN = 1.0
RATING_MAX = 5.0


def clamp_rating(x: float) -> float:
    return min(RATING_MAX, max(RATING_MIN, x))


@dataclass
class PredictionOutcome:
    """A clamped rating estimate plus the evidence that produced it."""

    estimate: float
    fallback_used: bool = False
    neighbors: tuple = ()


class RatingTable:
    """Train ratings indexed by item and by user.

    Duplicate (user, item) pairs collapse to the chronologically latest
    rating (input order breaks timestamp ties), which is what the
    neighborhood predictors and MSD similarity consume.
    """

    def __init__(self, train: Dataset):
        if len(train) == 0:
            raise ValueError("empty train dataset")
        self.mu = float(np.mean([it.rating for it in train.interactions]))
        latest: dict[tuple[str, str], tuple[int, int, float]] = {}
        for pos, it in enumerate(train.interactions):
            key = (it.user_id, it.item_id)
            stamp = (it.timestamp, pos)
            if key not in latest or stamp >= latest[key][:2]:
                latest[key] = (it.timestamp, pos, it.rating)
        self._rating = {key: r for key, (_, _, r) in latest.items()}
        self._item_raters: dict[str, list[tuple[str, float]]] = {}
        self._user_items: dict[str, list[tuple[str, float]]] = {}
        for (u, i), r in sorted(self._rating.items()):
            self._item_raters.setdefault(i, []).append((u, r))
            self._user_items.setdefault(u, []).append((i, r))

    def raters(self, item: str) -> list[tuple[str, float]]:
        return self._item_raters.get(item, [])

    def items_of(self, user: str) -> list[tuple[str, float]]:
        return self._user_items.get(user, [])

    def rating(self, user: str, item: str) -> float | None:
        return self._rating.get((user, item))


@dataclass
class BaselineModel:
    """mu + b_u + b_i with zero bias for unknown users/items."""

    mu: float
    b_u: dict[str, float]
    b_i: dict[str, float]

    def predict(self, user: str, item: str) -> float:
        return self.mu + self.b_u.get(user, 0.0) + self.b_i.get(item, 0.0)

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"mu": self.mu, "b_u": self.b_u, "b_i": self.b_i}, fh, sort_keys=True)


def fit_baseline(
    train: Dataset, reg_u: float = 15.0, reg_i: float = 10.0, epochs: int = 10
) -> BaselineModel:
    """Alternating least squares for the bias baseline.

    Each epoch refits item biases against current user biases, then user
    biases against the fresh item biases:
      b_i = sum_{u in R(i)} (r_ui - mu - b_u) / (reg_i + |R(i)|)
      b_u = sum_{i in R(u)} (r_ui - mu - b_i) / (reg_u + |R(u)|)
    """
    if len(train) == 0:
        raise ValueError("empty train dataset")
    users = sorted(train.by_user)
    items = sorted(train.by_item)
    uindex = {u: j for j, u in enumerate(users)}
    iindex = {i: j for j, i in enumerate(items)}
    uidx = np.array([uindex[it.user_id] for it in train.interactions], dtype=np.int64)
    iidx = np.array([iindex[it.item_id] for it in train.interactions], dtype=np.int64)
    r = np.array([it.rating for it in train.interactions])
    mu = float(r.mean())
    bu = np.zeros(len(users))
    bi = np.zeros(len(items))
    cnt_u = np.bincount(uidx, minlength=len(users))
    cnt_i = np.bincount(iidx, minlength=len(items))
    for _ in range(epochs):
        bi = np.bincount(iidx, weights=r - mu - bu[uidx], minlength=len(items)) / (reg_i + cnt_i)
        bu = np.bincount(uidx, weights=r - mu - bi[iidx], minlength=len(users)) / (reg_u + cnt_u)
    return BaselineModel(
        mu=mu,
        b_u={u: float(bu[j]) for u, j in uindex.items()},
        b_i={i: float(bi[j]) for i, j in iindex.items()},
    )


def baseline_predict(model: BaselineModel, user: str, item: str) -> PredictionOutcome:
    return PredictionOutcome(estimate=clamp_rating(model.predict(user, item)))


def knn_predict(
    user: str,
    item: str,
    weights,
    ratings: RatingTable,
    kprime: int = 40,
    mu: float | None = None,
) -> PredictionOutcome:
    """Weighted mean of the top-k' weighted raters of the item.

    Falls back to the global mean when no rater carries positive weight.
    `weights` is anything with .get(u, v) -> w (text weights, co-occurrence
    weights, or MSD similarity).
    """
    raters = ratings.raters(item)
    rating_of = dict(raters)
    neigh = top_neighbors(user, [v for v, _ in raters], weights, kprime)
    wsum = sum(w for _, w in neigh)
    if not neigh or wsum <= 0:
        return PredictionOutcome(
            estimate=clamp_rating(mu if mu is not None else ratings.mu), fallback_used=True
        )
    est = sum(w * rating_of[v] for v, w in neigh) / wsum
    evidence = tuple((v, w, rating_of[v]) for v, w in neigh)
    return PredictionOutcome(estimate=clamp_rating(est), neighbors=evidence)


def bknn_predict(
    user: str,
    item: str,
    weights,
    ratings: RatingTable,
    baseline: BaselineModel,
    kprime: int = 40,
) -> PredictionOutcome:
    """Baseline-aware neighborhood regressor on rating residuals."""
    raters = ratings.raters(item)
    rating_of = dict(raters)
    b_ui = baseline.predict(user, item)
    neigh = top_neighbors(user, [v for v, _ in raters], weights, kprime)
    wsum = sum(w for _, w in neigh)
    if not neigh or wsum <= 0:
        return PredictionOutcome(estimate=clamp_rating(b_ui), fallback_used=True)
    resid = sum(w * (rating_of[v] - baseline.predict(v, item)) for v, w in neigh) / wsum
    evidence = tuple((v, w, rating_of[v]) for v, w in neigh)
    return PredictionOutcome(estimate=clamp_rating(b_ui + resid), neighbors=evidence)


class MsdSimilarity:
    """Symmetric mean-squared-difference user similarity in (0, 1]."""

    def __init__(self, entries: dict[tuple[str, str], float]):
        self._entries = entries

    def get(self, u: str, v: str) -> float:
        key = (u, v) if u <= v else (v, u)
        return self._entries.get(key, 0.0)

    @property
    def nnz(self) -> int:
        return len(self._entries)

    def pairs(self):
        return ((u, v, w) for (u, v), w in sorted(self._entries.items()))


def msd_similarity(train: Dataset, min_support: int = 1) -> MsdSimilarity:
    """sim(u, v) = 1 / (mean squared rating difference over co-rated
    items + 1); pairs with fewer than min_support co-rated items are
    omitted."""
    table = RatingTable(train)
    users = sorted(train.by_user)
    uindex = {u: j for j, u in enumerate(users)}
    starts = [0]
    uarr: list[int] = []
    rarr: list[float] = []
    for item in sorted(table._item_raters):
        for u, r in table.raters(item):
            uarr.append(uindex[u])
            rarr.append(r)
        starts.append(len(uarr))
    us, vs, sq = msd_pairs(
        np.array(starts, dtype=np.int64),
        np.array(uarr, dtype=np.int64),
        np.array(rarr, dtype=np.float64),
    )
    entries: dict[tuple[str, str], float] = {}
    if us.size:
        key = us * np.int64(len(users)) + vs
        uniq, inv = np.unique(key, return_inverse=True)
        ssq = np.bincount(inv, weights=sq)
        cnt = np.bincount(inv)
        keep = cnt >= min_support
        for k, s, c in zip(uniq[keep], ssq[keep], cnt[keep]):
            u = users[int(k // len(users))]
            v = users[int(k % len(users))]
            entries[(u, v)] = 1.0 / (s / c + 1.0)
    return MsdSimilarity(entries)


def uniform_predict(user: str, item: str, rng: np.random.Generator) -> PredictionOutcome:
    """Uniform random rating in [1, 5]."""
    return PredictionOutcome(estimate=float(rng.uniform(RATING_MIN, RATING_MAX)))


@dataclass
class NormalModel:
    mu: float
    sigma: float


def fit_normal(train: Dataset) -> NormalModel:
    r = np.array([it.rating for it in train.interactions])
    if r.size == 0:
        raise ValueError("empty train dataset")
    return NormalModel(mu=float(r.mean()), sigma=float(r.std()))


def normal_predict(
    user: str, item: str, model: NormalModel, rng: np.random.Generator
) -> PredictionOutcome:
    """Draw from the max-likelihood normal fit of train ratings, clamped."""
    if model.sigma == 0.0:
        return PredictionOutcome(estimate=clamp_rating(model.mu))
    return PredictionOutcome(estimate=clamp_rating(float(rng.normal(model.mu, model.sigma))))


@dataclass
class MFModel:
    """Funk-style factor model: mu + b_u + b_i + p_u . q_i."""

    mu: float
    users: list[str]
    items: list[str]
    bu: np.ndarray
    bi: np.ndarray
    p: np.ndarray
    q: np.ndarray
    _uindex: dict = field(default_factory=dict, repr=False)
    _iindex: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._uindex = {u: j for j, u in enumerate(self.users)}
        self._iindex = {i: j for j, i in enumerate(self.items)}

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "mu": self.mu,
                    "users": self.users,
                    "items": self.items,
                    "bu": self.bu.tolist(),
                    "bi": self.bi.tolist(),
                    "p": self.p.tolist(),
                    "q": self.q.tolist(),
                },
                fh,
            )


def fit_svd(
    train: Dataset,
    factors: int = 100,
    lr: float = 0.005,
    reg: float = 0.02,
    epochs: int = 20,
    seed: int = 0,
) -> MFModel:
    """SGD on squared error with L2 regularization, fixed iteration order.

    Factors are initialized from a seeded normal (mean 0, std 0.1), biases
    from zero; iteration follows the train interaction order every epoch,
    so results are deterministic for a given (data, config, seed)."""
    if len(train) == 0:
        raise ValueError("empty train dataset")
    users = sorted(train.by_user)
    items = sorted(train.by_item)
    uindex = {u: j for j, u in enumerate(users)}
    iindex = {i: j for j, i in enumerate(items)}
    uidx = np.array([uindex[it.user_id] for it in train.interactions], dtype=np.int64)
    iidx = np.array([iindex[it.item_id] for it in train.interactions], dtype=np.int64)
    r = np.array([it.rating for it in train.interactions])
    mu = float(r.mean())
    rng = np.random.default_rng(seed)
    p = rng.normal(0.0, 0.1, size=(len(users), factors))
    q = rng.normal(0.0, 0.1, size=(len(items), factors))
    bu = np.zeros(len(users))
    bi = np.zeros(len(items))
    sgd_epochs(uidx, iidx, r, bu, bi, p, q, mu, lr, reg, epochs)
    return MFModel(mu=mu, users=users, items=items, bu=bu, bi=bi, p=p, q=q)


def svd_predict(model: MFModel, user: str, item: str) -> PredictionOutcome:
    """Full model for known (user, item); the global mean otherwise."""
    j = model._uindex.get(user)
    k = model._iindex.get(item)
    if j is None or k is None:
        return PredictionOutcome(estimate=clamp_rating(model.mu), fallback_used=True)
    est = model.mu + model.bu[j] + model.bi[k] + float(np.dot(model.p[j], model.q[k]))
    return PredictionOutcome(estimate=clamp_rating(est))
