"""Seeded synthetic corpora for smoke tests and benchmarks.

Users belong to taste clusters; items belong to topic clusters. Ratings
are cluster-consistent: a user rates items of their own cluster high and
everything else low, with a little neutral noise. Sentence embeddings are
drawn from a per-taste-cluster Gaussian on the unit sphere, so users of
one cluster produce semantically close sentences and the text pipeline
has a recoverable signal, while the rating matrix alone stays sparse and
noisy enough to be nontrivial.
"""

from __future__ import annotations

import numpy as np

from .corpus import Dataset, Interaction, SentenceRecord


def make_synthetic_dataset(
    n_users: int = 500,
    n_items: int = 100,
    n_clusters: int = 5,
    reviews_per_user: tuple[int, int] = (8, 14),
    sentences_per_review: tuple[int, int] = (1, 3),
    neutral_prob: float = 0.05,
    seed: int = 0,
) -> tuple[Dataset, dict[str, int]]:
    """Build the interaction set; returns (dataset, user -> cluster)."""
    rng = np.random.default_rng(seed)
    users = [f"u{j:04d}" for j in range(n_users)]
    items = [f"i{j:04d}" for j in range(n_items)]
    user_cluster = {u: j % n_clusters for j, u in enumerate(users)}
    item_cluster = {i: j % n_clusters for j, i in enumerate(items)}
    own_items = {
        c: [i for i in items if item_cluster[i] == c] for c in range(n_clusters)
    }
    interactions = []
    for j, u in enumerate(users):
        c = user_cluster[u]
        m = int(rng.integers(reviews_per_user[0], reviews_per_user[1] + 1))
        others = [i for i in items if item_cluster[i] != c]
        # guarantee rating variance: at least two liked and two disliked items
        picks = list(rng.choice(own_items[c], size=2, replace=False))
        picks += list(rng.choice(others, size=2, replace=False))
        rest = [i for i in items if i not in picks]
        extra = max(0, m - len(picks))
        picks += list(rng.choice(rest, size=min(extra, len(rest)), replace=False))
        rng.shuffle(picks)
        for order, item in enumerate(picks):
            if rng.random() < neutral_prob:
                rating = 3.0
            elif item_cluster[item] == c:
                rating = float(rng.integers(4, 6))
            else:
                rating = float(rng.integers(1, 3))
            n_sent = int(rng.integers(sentences_per_review[0], sentences_per_review[1] + 1))
            text = " ".join(
                f"Taste {c} voice {j} on {item} part {s}." for s in range(n_sent)
            )
            interactions.append(
                Interaction(
                    user_id=u,
                    item_id=item,
                    rating=rating,
                    timestamp=j * 10_000 + order * 10,
                    text=text,
                )
            )
    return Dataset(interactions), user_cluster


def cluster_centers(n_clusters: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Orthonormal cluster directions via QR of a random Gaussian matrix."""
    if dim < n_clusters:
        raise ValueError("need dim >= n_clusters for orthonormal centers")
    g = rng.normal(size=(dim, dim))
    q, _ = np.linalg.qr(g)
    return q[:n_clusters]


def make_synthetic_embeddings(
    sentences: list[SentenceRecord],
    user_cluster: dict[str, int],
    n_clusters: int = 5,
    dim: int = 16,
    noise: float = 0.25,
    seed: int = 0,
) -> np.ndarray:
    """Unit vectors drawn from each author's taste-cluster Gaussian, in
    manifest (sentence id) order."""
    rng = np.random.default_rng(seed + 1)
    centers = cluster_centers(n_clusters, dim, rng)
    out = np.empty((len(sentences), dim), dtype=np.float32)
    for row, s in enumerate(sorted(sentences, key=lambda s: s.sentence_id)):
        c = user_cluster[s.user_id]
        v = centers[c] + noise * rng.normal(size=dim)
        out[row] = (v / np.linalg.norm(v)).astype(np.float32)
    return out
