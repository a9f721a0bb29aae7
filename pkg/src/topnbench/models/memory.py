"""Non-personalized baselines and neighborhood / random-walk models."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..corpus import InteractionMatrix
from .base import ConfigurationError, Recommender

_log = logging.getLogger(__name__)

SIMILARITIES = ("cosine", "jaccard", "dice", "pearson", "euclidean")
_ALIASES = {"correlation": "pearson"}


def _canonical_kind(kind: str) -> str:
    kind = _ALIASES.get(kind, kind)
    if kind not in SIMILARITIES:
        raise ConfigurationError(f"unknown similarity {kind!r}; expected one of {SIMILARITIES}")
    return kind


class MostPop(Recommender):
    """Ranks every item by its number of training interactions."""

    name = "MostPop"

    def fit(self, train: InteractionMatrix) -> MostPop:
        self.train_ = train
        self.popularity_ = train.item_degrees().astype(np.float64)
        return self

    def score(self, users):
        self._check_fitted()
        return np.broadcast_to(self.popularity_, (len(users), len(self.popularity_)))


class RandomRec(Recommender):
    """Uniformly random unseen items; reproducible per (seed, user)."""

    name = "Random"

    def __init__(self, seed: int = 42):
        self.seed = seed

    def fit(self, train: InteractionMatrix) -> RandomRec:
        self.train_ = train
        return self

    def score(self, users):
        train = self._check_fitted()
        out = np.empty((len(users), train.n_items))
        for r, u in enumerate(users):
            out[r] = np.random.default_rng([self.seed, int(u)]).random(train.n_items)
        return out


def _sizes(x: sp.csr_matrix) -> np.ndarray:
    return np.asarray(x.sum(axis=1)).ravel()


def pairwise_similarity(profiles: sp.csr_matrix, kind: str, rows=None) -> np.ndarray:
    """Similarity between binary profiles (rows of ``profiles``).

    Returns the dense ``len(rows) x n`` block.  Pearson centers each row over the
    full dimension (zeros included); euclidean maps distance d to 1 / (1 + d).
    """
    kind = _canonical_kind(kind)
    profiles = sp.csr_matrix(profiles, dtype=np.float64)
    if rows is None:
        rows = np.arange(profiles.shape[0])
    size = _sizes(profiles)
    sa = size[rows][:, None]
    sb = size[None, :]
    inter = (profiles[rows] @ profiles.T).toarray()
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == "cosine":
            sim = inter / np.sqrt(sa * sb)
        elif kind == "jaccard":
            sim = inter / (sa + sb - inter)
        elif kind == "dice":
            sim = 2.0 * inter / (sa + sb)
        elif kind == "pearson":
            d = profiles.shape[1]
            cov = inter - sa * sb / d
            var_a = sa - sa * sa / d
            var_b = sb - sb * sb / d
            sim = cov / np.sqrt(var_a * var_b)
        else:
            dist = np.sqrt(np.maximum(sa + sb - 2.0 * inter, 0.0))
            sim = 1.0 / (1.0 + dist)
    sim[~np.isfinite(sim)] = 0.0
    return sim


def _topk_block(block: np.ndarray, k: int, row_offset: int, drop_self: bool = True):
    """Sparse (row, col, value) triplets of the k largest entries of each row."""
    block = np.array(block, dtype=np.float64)
    nrows, ncols = block.shape
    if drop_self:
        r = np.arange(nrows)
        c = r + row_offset
        ok = c < ncols
        block[r[ok], c[ok]] = -np.inf
    k = min(k, ncols)
    if k < ncols:
        # k-th largest value per row, then every entry at least that large;
        # stable argsort over the survivors keeps ties on the lower index
        kth = -np.partition(-block, k - 1, axis=1)[:, k - 1 : k]
        rows, cols, vals = [], [], []
        for i in range(nrows):
            idx = np.flatnonzero(block[i] >= kth[i])
            keep = idx[np.argsort(-block[i, idx], kind="stable")[:k]]
            rows.append(np.full(len(keep), i + row_offset))
            cols.append(keep)
            vals.append(block[i, keep])
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        rows, cols = np.nonzero(np.isfinite(block))
        vals = block[rows, cols]
        rows = rows + row_offset
    ok = np.isfinite(vals) & (vals != 0)
    return rows[ok], cols[ok], vals[ok]


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    kind: str
    k: int
    entries: sp.csr_matrix

    def neighbors(self, row: int) -> tuple[np.ndarray, np.ndarray]:
        e = self.entries
        sl = slice(e.indptr[row], e.indptr[row + 1])
        return e.indices[sl], e.data[sl]


def build_similarity(
    train: InteractionMatrix, axis: str, kind: str, k: int, block: int = 1024
) -> SimilarityMatrix:
    """Top-k neighborhoods of users (``axis="user"``) or items (``axis="item"``)."""
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    kind = _canonical_kind(kind)
    if axis == "user":
        profiles = train.csr
    elif axis == "item":
        profiles = train.csr.T.tocsr()
    else:
        raise ConfigurationError(f"axis must be 'user' or 'item', got {axis!r}")
    n = profiles.shape[0]
    parts = []
    for start in range(0, n, block):
        rows = np.arange(start, min(start + block, n))
        parts.append(_topk_block(pairwise_similarity(profiles, kind, rows), k, start))
    r = np.concatenate([p[0] for p in parts])
    c = np.concatenate([p[1] for p in parts])
    v = np.concatenate([p[2] for p in parts])
    entries = sp.csr_matrix((v, (r, c)), shape=(n, n))
    entries.sort_indices()
    return SimilarityMatrix(kind, k, entries)


class UserKNN(Recommender):
    """s(u, i) = sum over the k nearest users v of sim(u, v) * r(v, i)."""

    name = "UserKNN"

    def __init__(self, k: int = 100, similarity: str = "cosine"):
        self.k = k
        self.similarity = similarity

    def fit(self, train: InteractionMatrix) -> UserKNN:
        self.train_ = train
        self.sim_ = build_similarity(train, "user", self.similarity, self.k)
        return self

    def score(self, users):
        train = self._check_fitted()
        return (self.sim_.entries[users] @ train.csr).toarray()


class ItemKNN(Recommender):
    """s(u, i) = sum over j in the profile of u of sim(i, j), j restricted to the k nearest items of i."""

    name = "ItemKNN"

    def __init__(self, k: int = 100, similarity: str = "cosine"):
        self.k = k
        self.similarity = similarity

    def fit(self, train: InteractionMatrix) -> ItemKNN:
        self.train_ = train
        self.sim_ = build_similarity(train, "item", self.similarity, self.k)
        self._weights_t = self.sim_.entries.T.tocsr()
        return self

    def score(self, users):
        train = self._check_fitted()
        return (train.csr[users] @ self._weights_t).toarray()


def _row_normalize(x: sp.csr_matrix) -> sp.csr_matrix:
    s = _sizes(x)
    s[s == 0] = 1.0
    return sp.diags(1.0 / s) @ x


def rp3beta_weights(
    train: InteractionMatrix,
    alpha: float = 1.0,
    beta: float = 0.0,
    k: int | None = None,
    normalize: bool = False,
    block: int = 1024,
) -> sp.csr_matrix:
    """Item-to-item three-step random-walk weights with a popularity penalty.

    ``W[i, j]`` is the probability of walking item i -> user -> item j, where each
    transition probability is raised to ``alpha``; column j is divided by
    ``popularity(j) ** beta``.  Only the ``k`` largest entries of each row are kept
    (the diagonal never is), optionally rescaled to sum to one.
    """
    if alpha < 0 or beta < 0:
        raise ConfigurationError("alpha and beta must be non-negative")
    x = train.csr
    p_ui = _row_normalize(x).tocsr()
    p_iu = _row_normalize(x.T.tocsr()).tocsr()
    if alpha != 1.0:
        p_ui.data **= alpha
        p_iu.data **= alpha
    pop = train.item_degrees().astype(np.float64)
    penalty = np.ones_like(pop)
    nz = pop > 0
    penalty[nz] = pop[nz] ** -beta
    n = train.n_items
    k = n if k is None else k
    parts = []
    for start in range(0, n, block):
        rows = np.arange(start, min(start + block, n))
        w = (p_iu[rows] @ p_ui).toarray() * penalty[None, :]
        parts.append(_topk_block(w, k, start))
    r = np.concatenate([p[0] for p in parts])
    c = np.concatenate([p[1] for p in parts])
    v = np.concatenate([p[2] for p in parts])
    w = sp.csr_matrix((v, (r, c)), shape=(n, n))
    if normalize:
        w = _row_normalize(w).tocsr()
    w.sort_indices()
    return w


class RP3beta(Recommender):
    name = "RP3beta"

    def __init__(self, k: int = 100, alpha: float = 1.0, beta: float = 0.5, normalize: bool = False):
        self.k = k
        self.alpha = alpha
        self.beta = beta
        self.normalize = normalize

    def fit(self, train: InteractionMatrix) -> RP3beta:
        self.train_ = train
        self.weights_ = rp3beta_weights(train, self.alpha, self.beta, self.k, self.normalize)
        return self

    def score(self, users):
        train = self._check_fitted()
        return (train.csr[users] @ self.weights_).toarray()
