from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import ClassVar, Iterable

import numpy as np

from ..corpus import InteractionMatrix

_log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    pass


class NotFittedError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class RankedList:
    """Top-n items for one user, best first."""

    user: int
    items: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(zip(self.items.tolist(), self.scores.tolist()))


def top_n(scores: np.ndarray, n: int, exclude: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Indices and scores of the ``n`` best entries of a 2-d score block.

    Ties go to the lower item index.  Entries flagged in ``exclude`` (a boolean
    block of the same shape) are never returned; rows with fewer than ``n``
    eligible items are padded with index -1.
    """
    scores = np.array(scores, dtype=np.float64, copy=True)
    if exclude is not None:
        scores[exclude] = -np.inf
    n = min(n, scores.shape[1])
    if n < scores.shape[1] // 4:
        # partial selection first; widen to every tie of the n-th value so the
        # stable sort below still resolves ties by index
        kth = -np.partition(-scores, n - 1, axis=1)[:, n - 1 : n]
        cand = scores >= kth
        order = np.empty((scores.shape[0], n), dtype=np.int64)
        for r in range(scores.shape[0]):
            idx = np.flatnonzero(cand[r])
            sub = np.argsort(-scores[r, idx], kind="stable")[:n]
            order[r] = idx[sub]
    else:
        order = np.argsort(-scores, axis=1, kind="stable")[:, :n]
    top = np.take_along_axis(scores, order, axis=1)
    bad = ~np.isfinite(top)
    order[bad] = -1
    top[bad] = -np.inf
    return order, top


class Recommender(ABC):
    """Common fit/recommend surface.

    Subclasses take their hyperparameters in ``__init__`` and implement ``fit`` and
    ``score``; ranking, train-item exclusion and tie-breaking live here.
    """

    name: ClassVar[str] = "recommender"
    train_: InteractionMatrix | None = None

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.get_params()})"

    def get_params(self) -> dict:
        return {k: v for k, v in vars(self).items() if not k.endswith("_") and not k.startswith("_")}

    @abstractmethod
    def fit(self, train: InteractionMatrix) -> Recommender: ...

    @abstractmethod
    def score(self, users: np.ndarray) -> np.ndarray:
        """Dense ``len(users) x n_items`` score block."""

    def _check_fitted(self) -> InteractionMatrix:
        if self.train_ is None:
            raise NotFittedError(f"{type(self).__name__} is not fitted")
        return self.train_

    def _exclusion(self, users: np.ndarray) -> np.ndarray:
        return self.train_.csr[users].toarray() > 0

    def recommend_block(self, users, n: int, exclude_train: bool = True) -> tuple[np.ndarray, np.ndarray]:
        self._check_fitted()
        users = np.asarray(users, dtype=np.int64)
        s = self.score(users)
        return top_n(s, n, self._exclusion(users) if exclude_train else None)

    def recommend(self, user: int, n: int, exclude_train: bool = True) -> RankedList:
        items, scores = self.recommend_block([user], n, exclude_train)
        keep = items[0] >= 0
        return RankedList(int(user), items[0][keep], scores[0][keep])

    def recommend_all(
        self, users: Iterable[int] | None = None, n: int = 10, exclude_train: bool = True, block: int = 512
    ) -> dict[int, RankedList]:
        train = self._check_fitted()
        if users is None:
            users = np.flatnonzero(train.user_degrees() > 0)
        users = np.asarray(list(users), dtype=np.int64)
        out: dict[int, RankedList] = {}
        for start in range(0, len(users), block):
            chunk = users[start : start + block]
            items, scores = self.recommend_block(chunk, n, exclude_train)
            for row, u in enumerate(chunk):
                keep = items[row] >= 0
                out[int(u)] = RankedList(int(u), items[row][keep], scores[row][keep])
        return out


def as_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
