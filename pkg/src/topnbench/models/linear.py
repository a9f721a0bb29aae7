"""Item-item linear models: SLIM (ElasticNet, non-negative) and EASE."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from numba import njit

from ..corpus import InteractionMatrix
from .base import ConfigurationError, Recommender

_log = logging.getLogger(__name__)


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class ItemWeightMatrix:
    """``B`` with ``scores = X @ B``; dense for EASE, sparse for SLIM."""

    weights: np.ndarray | sp.csr_matrix

    @property
    def n_items(self) -> int:
        return self.weights.shape[0]

    def dense(self) -> np.ndarray:
        w = self.weights
        return w.toarray() if sp.issparse(w) else np.asarray(w)

    def diagonal(self) -> np.ndarray:
        return self.weights.diagonal()

    def save(self, path) -> None:
        """Write ``n_items`` then one ``row col weight`` line per non-zero."""
        coo = sp.coo_matrix(self.weights)
        with open(path, "w") as fh:
            fh.write(f"# item-weights {self.n_items}\n")
            for r, c, v in zip(coo.row, coo.col, coo.data):
                if v != 0:
                    fh.write(f"{r} {c} {float(v)!r}\n")

    @classmethod
    def load(cls, path) -> ItemWeightMatrix:
        lines = Path(path).read_text().splitlines()
        n = int(lines[0].split()[-1])
        rows, cols, vals = [], [], []
        for line in lines[1:]:
            r, c, v = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(v))
        return cls(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))


def ease_weights(x: sp.spmatrix, l2: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form EASE weights ``B`` and the ridge inverse ``P = (X'X + l2 I)^-1``."""
    if l2 <= 0:
        raise ConfigurationError("l2 must be positive")
    gram = np.asarray((x.T @ x).toarray(), dtype=np.float64)
    n = gram.shape[0]
    gram[np.diag_indices(n)] += l2
    with warnings.catch_warnings():
        warnings.simplefilter("error", la.LinAlgWarning)
        try:
            lu = la.lu_factor(gram, check_finite=True)
            p = la.lu_solve(lu, np.eye(n))
        except (la.LinAlgError, la.LinAlgWarning, ValueError) as e:
            raise np.linalg.LinAlgError(f"EASE ridge inverse failed: {e}") from e
    if not np.all(np.isfinite(p)):
        raise np.linalg.LinAlgError("EASE ridge inverse is not finite")
    b = -p / np.diag(p)[None, :]
    b[np.diag_indices(n)] = 0.0
    return b, p


class EASE(Recommender):
    name = "EASE"

    def __init__(self, l2: float = 500.0):
        self.l2 = l2

    def fit(self, train: InteractionMatrix) -> EASE:
        self.train_ = train
        b, _ = ease_weights(train.csr, self.l2)
        self.weights_ = ItemWeightMatrix(b)
        return self

    def score(self, users):
        train = self._check_fitted()
        return np.asarray(train.csr[users] @ self.weights_.weights)


@njit(cache=True)
def _column_objective(r, w, l1, l2):
    # 0.5 * ||x_j - X w||^2 + l1 * |w|_1 + 0.5 * l2 * ||w||^2, with r = x_j - X w
    pen1 = 0.0
    pen2 = 0.0
    for k in range(w.shape[0]):
        if w[k] != 0.0:
            pen1 += abs(w[k])
            pen2 += w[k] * w[k]
    return 0.5 * (r @ r) + l1 * pen1 + 0.5 * l2 * pen2


@njit(cache=True)
def _cd_column(c_ptr, c_idx, r_ptr, r_idx, j, l1, l2, max_sweeps, tol, w, r, count, history):
    """Cyclic non-negative coordinate descent for one target column.

    ``c_*`` is the CSC and ``r_*`` the CSR structure of the binary matrix X.  The
    residual ``r = x_j - X w`` is kept up to date, so a coordinate step costs the
    item's degree.  Only items co-occurring with ``j`` more than ``l1`` times can
    become non-zero: with X and w non-negative the partial correlation of item k
    never exceeds that co-occurrence count.
    """
    n = w.shape[0]
    for p in range(c_ptr[j], c_ptr[j + 1]):
        u = c_idx[p]
        r[u] += 1.0
        for q in range(r_ptr[u], r_ptr[u + 1]):
            count[r_idx[q]] += 1.0
    cand = np.empty(n, dtype=np.int64)
    nc = 0
    for k in range(n):
        if k != j and count[k] > l1:
            cand[nc] = k
            nc += 1
        count[k] = 0.0
    obj = _column_objective(r, w, l1, l2)
    history[0] = obj
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        for c in range(nc):
            k = cand[c]
            deg = c_ptr[k + 1] - c_ptr[k]
            rho = 0.0
            for p in range(c_ptr[k], c_ptr[k + 1]):
                rho += r[c_idx[p]]
            rho += deg * w[k]
            new = (rho - l1) / (deg + l2)
            if new < 0.0:
                new = 0.0
            delta = new - w[k]
            if delta != 0.0:
                w[k] = new
                for p in range(c_ptr[k], c_ptr[k + 1]):
                    r[c_idx[p]] -= delta
        sweeps += 1
        new_obj = _column_objective(r, w, l1, l2)
        history[sweeps] = new_obj
        change = abs(obj - new_obj)
        obj = new_obj
        if change <= tol * max(abs(obj), 1e-300):
            converged = True
            break
    return sweeps, converged


def _structure(x: sp.spmatrix):
    x = sp.csr_matrix(x, dtype=np.float64)
    if x.nnz and not np.all(x.data == 1.0):
        raise ConfigurationError("SLIM expects a binary interaction matrix")
    c = x.tocsc()
    c.sort_indices()
    return c.indptr.astype(np.int64), c.indices.astype(np.int64), x.indptr.astype(np.int64), x.indices.astype(np.int64)


def slim_column(x: sp.spmatrix, j: int, l1: float, l2: float, max_sweeps: int = 100, tol: float = 1e-4):
    """Solve one SLIM column; returns ``(w, objective_history, converged)``."""
    m, n = x.shape
    w = np.zeros(n)
    r = np.zeros(m)
    history = np.empty(max_sweeps + 1)
    sweeps, converged = _cd_column(*_structure(x), j, l1, l2, max_sweeps, tol, w, r, np.zeros(n), history)
    return w, history[: sweeps + 1], converged


@njit(cache=True)
def _slim_all(c_ptr, c_idx, r_ptr, r_idx, m, l1, l2, k, max_sweeps, tol, rows, vals, nnz, status):
    n = c_ptr.shape[0] - 1
    w = np.zeros(n)
    r = np.zeros(m)
    count = np.zeros(n)
    history = np.empty(max_sweeps + 1)
    for j in range(n):
        w[:] = 0.0
        r[:] = 0.0
        sweeps, converged = _cd_column(c_ptr, c_idx, r_ptr, r_idx, j, l1, l2, max_sweeps, tol, w, r, count, history)
        status[j] = 1 if converged else 0
        order = np.argsort(-w, kind="mergesort")
        t = 0
        for s in range(min(k, n)):
            idx = order[s]
            if w[idx] <= 0.0:
                break
            rows[j, t] = idx
            vals[j, t] = w[idx]
            t += 1
        nnz[j] = t


def slim_weights(
    x: sp.spmatrix, alpha: float, l1_ratio: float, k: int, max_sweeps: int = 100, tol: float = 1e-4
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Per-column non-negative ElasticNet regression of each item on all others.

    Column j minimizes ``0.5 ||x_j - X w||^2 + alpha * l1_ratio * m * |w|_1 +
    0.5 * alpha * (1 - l1_ratio) * m * ||w||^2`` subject to ``w >= 0, w_j = 0``,
    where m is the number of users (the per-sample ElasticNet scaling).  The k
    largest weights of each column are kept.  Returns ``(B, converged_flags)``.
    """
    if alpha <= 0:
        raise ConfigurationError("alpha must be positive")
    if not 0 < l1_ratio <= 1:
        raise ConfigurationError("l1_ratio must lie in (0, 1]")
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    m, n = x.shape
    l1 = alpha * l1_ratio * m
    l2 = alpha * (1.0 - l1_ratio) * m
    kk = min(k, n)
    rows = np.zeros((n, kk), dtype=np.int64)
    vals = np.zeros((n, kk))
    nnz = np.zeros(n, dtype=np.int64)
    status = np.zeros(n, dtype=np.int64)
    _slim_all(*_structure(x), m, l1, l2, kk, max_sweeps, tol, rows, vals, nnz, status)
    mask = np.arange(kk)[None, :] < nnz[:, None]
    cols = np.repeat(np.arange(n), kk).reshape(n, kk)
    b = sp.csr_matrix((vals[mask], (rows[mask], cols[mask])), shape=(n, n))
    b.sort_indices()
    converged = status.astype(bool)
    if not converged.all():
        warnings.warn(
            f"SLIM: {int((~converged).sum())} of {n} columns hit {max_sweeps} sweeps before converging",
            ConvergenceWarning,
            stacklevel=2,
        )
    return b, converged


class SLIM(Recommender):
    name = "SLIM"

    def __init__(self, k: int = 100, alpha: float = 0.1, l1_ratio: float = 0.1, max_sweeps: int = 100, tol: float = 1e-4):
        self.k = k
        self.alpha = alpha
        self.l1_ratio = l1_ratio
        self.max_sweeps = max_sweeps
        self.tol = tol

    def fit(self, train: InteractionMatrix) -> SLIM:
        self.train_ = train
        b, converged = slim_weights(train.csr, self.alpha, self.l1_ratio, self.k, self.max_sweeps, self.tol)
        self.weights_ = ItemWeightMatrix(b)
        self.converged_ = converged
        return self

    def score(self, users):
        train = self._check_fitted()
        return (train.csr[users] @ self.weights_.weights).toarray()
