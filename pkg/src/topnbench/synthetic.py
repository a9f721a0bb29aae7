"""Synthetic rating logs with low-rank structure and a popularity skew."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .corpus import RawDataset


def synthetic_ratings(
    n_users: int = 500,
    n_items: int = 300,
    per_user: float = 40.0,
    rank: int = 8,
    popularity_skew: float = 1.0,
    seed: int = 0,
) -> RawDataset:
    """Draw a MovieLens-like explicit rating log.

    Each user rates roughly ``per_user`` items, chosen with probability growing
    with a latent affinity and a Zipf-like item popularity; ratings in 1..5
    follow the affinity, so binarizing at 3 keeps the better-matched items.
    """
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(n_users, rank))
    v = rng.normal(size=(n_items, rank))
    pop = 1.0 / np.arange(1, n_items + 1) ** (popularity_skew * 0.8)
    pop = pop[rng.permutation(n_items)]
    users, items, ratings = [], [], []
    for a in range(n_users):
        aff = u[a] @ v.T / np.sqrt(rank)
        w = pop * np.exp(aff)
        w /= w.sum()
        n = int(np.clip(rng.poisson(per_user), 1, n_items))
        chosen = rng.choice(n_items, size=n, replace=False, p=w)
        score = aff[chosen] + rng.normal(scale=0.5, size=n)
        r = np.clip(np.round(3.0 + 1.2 * score), 1, 5)
        users += [f"u{a}"] * n
        items += [f"i{j}" for j in chosen]
        ratings.append(r)
    return RawDataset(np.array(users, dtype=object), np.array(items, dtype=object), np.concatenate(ratings))


def write_ratings(raw: RawDataset, path, sep: str = "\t") -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        for k in range(len(raw)):
            fh.write(f"{raw.users[k]}{sep}{raw.items[k]}{sep}{int(raw.ratings[k])}{sep}{k}\n")
    return path
