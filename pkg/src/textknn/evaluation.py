"""Evaluation: RMSE, concordance classification, and the time-based
fraction of concordant pairs.

The time-based metric pairs each user's single held-out item against every
one of their train items and scores how often the predicted ordering
matches the true ordering. Pairs with equal true ratings are ignored;
pairs with tied predictions but distinct truths count as discordant. The
macro score averages n_c / (n_c + n_d) over users with at least one
scored pair; users whose pairs are all ignored are counted and excluded.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .corpus import Dataset, Interaction
from .predictors import PredictionOutcome, RatingTable


class PairClass(enum.Enum):
    CONCORDANT = "concordant"
    DISCORDANT = "discordant"
    IGNORED = "ignored"


def rmse(pairs: Sequence[tuple[float, float]]) -> float:
    """Root mean squared error over (true, predicted) pairs."""
    if len(pairs) == 0:
        raise ValueError("rmse of an empty pair list")
    arr = np.asarray(pairs, dtype=np.float64)
    return float(np.sqrt(np.mean((arr[:, 0] - arr[:, 1]) ** 2)))


def _sgn(x: float) -> int:
    return (x > 0) - (x < 0)


def classify_pair(r_a: float, rhat_a: float, r_b: float, rhat_b: float) -> PairClass:
    """Concordance of one pair: ignored on equal truths, concordant iff the
    prediction difference has the same sign as the truth difference. A
    prediction tie against unequal truths is discordant (sgn 0 != +-1)."""
    if r_a == r_b:
        return PairClass.IGNORED
    if _sgn(r_a - r_b) == _sgn(rhat_a - rhat_b):
        return PairClass.CONCORDANT
    return PairClass.DISCORDANT


def _estimate(prediction) -> float:
    if isinstance(prediction, PredictionOutcome):
        return prediction.estimate
    return float(prediction)


@dataclass
class EvalReport:
    rmse: float
    tfcp_macro: float | None
    per_user: dict[str, tuple[int, int]] = field(default_factory=dict)
    users_excluded: int = 0
    users_included: int = 0
    fallback_rate: float = 0.0
    n_targets: int = 0

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "tfcp_macro": self.tfcp_macro,
            "users_included": self.users_included,
            "users_excluded": self.users_excluded,
            "fallback_rate": self.fallback_rate,
            "n_targets": self.n_targets,
        }


def tfcp_macro(
    test: Sequence[Interaction],
    train: Dataset | RatingTable,
    predictor: Callable[[str, str], object],
):
    """Time-based concordant-pair fractions.

    For each test target (u, j), pairs (r_uj, rhat_uj) against
    (r_ui, rhat_ui) for every train item i of u. Returns
    (macro, per_user, users_excluded): macro is the mean of
    n_c / (n_c + n_d) over users with at least one scored pair, or None
    when no user has one.
    """
    table = train if isinstance(train, RatingTable) else RatingTable(train)
    per_user: dict[str, tuple[int, int]] = {}
    excluded = 0
    fractions = []
    for target in sorted(test, key=lambda t: t.user_id):
        u = target.user_id
        rhat_j = _estimate(predictor(u, target.item_id))
        n_c = n_d = 0
        for item, r_ui in table.items_of(u):
            rhat_i = _estimate(predictor(u, item))
            cls = classify_pair(target.rating, rhat_j, r_ui, rhat_i)
            if cls is PairClass.CONCORDANT:
                n_c += 1
            elif cls is PairClass.DISCORDANT:
                n_d += 1
        per_user[u] = (n_c, n_d)
        if n_c + n_d > 0:
            fractions.append(n_c / (n_c + n_d))
        else:
            excluded += 1
    macro = float(np.mean(fractions)) if fractions else None
    return macro, per_user, excluded


def evaluate(
    targets: Sequence[Interaction],
    train: Dataset | RatingTable,
    predictor: Callable[[str, str], object],
) -> EvalReport:
    """RMSE over the targets plus the time-based pair metric against train.

    Predictions are memoized per (user, item) for the duration of the
    report, so stochastic predictors score one coherent draw per pair."""
    table = train if isinstance(train, RatingTable) else RatingTable(train)
    memo: dict[tuple[str, str], object] = {}

    def cached(u: str, i: str):
        key = (u, i)
        if key not in memo:
            memo[key] = predictor(u, i)
        return memo[key]

    pairs = []
    fallbacks = 0
    for t in sorted(targets, key=lambda t: t.user_id):
        out = cached(t.user_id, t.item_id)
        pairs.append((t.rating, _estimate(out)))
        if isinstance(out, PredictionOutcome) and out.fallback_used:
            fallbacks += 1
    macro, per_user, excluded = tfcp_macro(targets, table, cached)
    return EvalReport(
        rmse=rmse(pairs),
        tfcp_macro=macro,
        per_user=per_user,
        users_excluded=excluded,
        users_included=len(per_user) - excluded,
        fallback_rate=fallbacks / len(pairs) if pairs else 0.0,
        n_targets=len(pairs),
    )


def rank_correlation(reports_a: dict[str, float], reports_b: dict[str, float]):
    """Spearman rho and Kendall tau between two score-induced rankings of
    the same model set."""
    if set(reports_a) != set(reports_b):
        raise ValueError("metric reports cover different model sets")
    if len(reports_a) < 2:
        raise ValueError("need at least 2 models to correlate rankings")
    names = sorted(reports_a)
    a = [reports_a[m] for m in names]
    b = [reports_b[m] for m in names]
    rho = float(stats.spearmanr(a, b).statistic)
    tau = float(stats.kendalltau(a, b).statistic)
    return rho, tau
