"""Latent-factor models: iALS (exact alternating solves), BPRMF and MF2020 (SGD)."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numba import njit

from ..corpus import InteractionMatrix
from .base import ConfigurationError, Recommender, as_rng

_log = logging.getLogger(__name__)

INIT_STD = 0.01


@dataclass(eq=False)
class FactorModel:
    user_factors: np.ndarray
    item_factors: np.ndarray
    user_bias: np.ndarray | None = None
    item_bias: np.ndarray | None = None
    global_bias: float = 0.0

    @property
    def n_factors(self) -> int:
        return self.user_factors.shape[1]

    @property
    def has_bias(self) -> bool:
        return self.user_bias is not None

    def score(self, users) -> np.ndarray:
        s = self.user_factors[users] @ self.item_factors.T
        if self.has_bias:
            s = s + self.global_bias + self.user_bias[users][:, None] + self.item_bias[None, :]
        return s

    def save(self, path) -> None:
        """Text format: one header line, then U rows, V rows and (optionally) biases."""
        u, v = self.user_factors, self.item_factors
        with open(path, "w") as fh:
            fh.write(f"# factors f={u.shape[1]} users={u.shape[0]} items={v.shape[0]} bias={int(self.has_bias)}\n")
            np.savetxt(fh, u, fmt="%.17g")
            np.savetxt(fh, v, fmt="%.17g")
            if self.has_bias:
                np.savetxt(fh, self.user_bias[None, :], fmt="%.17g")
                np.savetxt(fh, self.item_bias[None, :], fmt="%.17g")
                fh.write(f"{self.global_bias!r}\n")

    @classmethod
    def load(cls, path) -> FactorModel:
        with open(path) as fh:
            head = dict(tok.split("=") for tok in fh.readline().split()[2:])
            f, nu, ni, bias = (int(head[k]) for k in ("f", "users", "items", "bias"))
            body = [line for line in fh if line.strip()]
        u = np.loadtxt(body[:nu], ndmin=2).reshape(nu, f)
        v = np.loadtxt(body[nu : nu + ni], ndmin=2).reshape(ni, f)
        if not bias:
            return cls(u, v)
        ub = np.loadtxt(body[nu + ni : nu + ni + 1], ndmin=1)
        ib = np.loadtxt(body[nu + ni + 1 : nu + ni + 2], ndmin=1)
        return cls(u, v, ub, ib, float(body[-1]))


class NegativeSampler:
    """Uniform draws of items outside each user's training profile (rejection sampling)."""

    def __init__(self, train: InteractionMatrix):
        self.n_items = train.n_items
        users, items = train.pairs()
        self._keys = np.sort(users * self.n_items + items)

    def __call__(self, users: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        out = rng.integers(0, self.n_items, size=len(users))
        bad = np.ones(len(users), dtype=bool)
        keys = self._keys
        while True:
            idx = np.flatnonzero(bad)
            k = users[idx] * self.n_items + out[idx]
            pos = np.minimum(np.searchsorted(keys, k), len(keys) - 1)
            bad[:] = False
            bad[idx[keys[pos] == k]] = True
            if not bad.any():
                return out
            out[bad] = rng.integers(0, self.n_items, size=int(bad.sum()))


def negatives_for(train: InteractionMatrix, users: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One uniformly drawn non-profile item per entry of ``users``."""
    return NegativeSampler(train)(users, rng)


def _trainable_pairs(train: InteractionMatrix) -> tuple[np.ndarray, np.ndarray]:
    # users holding every item have no negatives to sample
    users, items = train.pairs()
    full = train.user_degrees() >= train.n_items
    keep = ~full[users]
    return users[keep], items[keep]


# --- iALS -----------------------------------------------------------------------------------


def confidence(r, alpha: float, scaling: str = "linear", epsilon: float = 1.0):
    if scaling == "linear":
        return 1.0 + alpha * r
    if scaling == "log":
        return 1.0 + alpha * np.log1p(r / epsilon)
    raise ConfigurationError(f"unknown scaling {scaling!r}")


@njit(cache=True)
def _als_half(indptr, indices, conf, other, out, reg):
    f = other.shape[1]
    gram = other.T @ other
    for r in range(f):
        gram[r, r] += reg
    for u in range(out.shape[0]):
        a = gram.copy()
        b = np.zeros(f)
        for p in range(indptr[u], indptr[u + 1]):
            y = other[indices[p]]
            c = conf[p]
            for s in range(f):
                b[s] += c * y[s]
                cy = (c - 1.0) * y[s]
                for t in range(f):
                    a[s, t] += cy * y[t]
        out[u] = np.linalg.solve(a, b)


def als_half_sweep(x: sp.csr_matrix, conf: np.ndarray, other: np.ndarray, reg: float) -> np.ndarray:
    """Exact ridge solve of every row of one factor given the other.

    ``conf`` holds c_ui for each stored entry of ``x`` (preference 1 there, 0 elsewhere
    with confidence 1).  Uses the Gram trick: ``V'V`` once, plus per-row corrections.
    """
    out = np.empty((x.shape[0], other.shape[1]))
    _als_half(x.indptr, x.indices, conf, np.ascontiguousarray(other), out, reg)
    return out


def ials_objective(x, user_factors, item_factors, alpha, scaling="linear", epsilon=1.0, reg=0.01) -> float:
    """Weighted objective over the full matrix (dense; for checks on small data)."""
    dense = sp.csr_matrix(x).toarray()
    c = np.where(dense > 0, confidence(dense, alpha, scaling, epsilon), 1.0)
    p = (dense > 0).astype(np.float64)
    err = p - user_factors @ item_factors.T
    return float((c * err * err).sum() + reg * ((user_factors**2).sum() + (item_factors**2).sum()))


class IALS(Recommender):
    name = "iALS"

    def __init__(
        self,
        factors: int = 50,
        epochs: int = 15,
        alpha: float = 1.0,
        scaling: str = "linear",
        epsilon: float = 1.0,
        reg: float = 0.01,
        seed: int = 42,
    ):
        self.factors = factors
        self.epochs = epochs
        self.alpha = alpha
        self.scaling = scaling
        self.epsilon = epsilon
        self.reg = reg
        self.seed = seed

    def _validate(self):
        if self.factors < 1:
            raise ConfigurationError("factors must be >= 1")
        if self.alpha <= 0 or self.reg <= 0:
            raise ConfigurationError("alpha and reg must be positive")
        if self.scaling == "log" and self.epsilon <= 0:
            raise ConfigurationError("epsilon must be positive for log scaling")
        if self.scaling not in ("linear", "log"):
            raise ConfigurationError(f"unknown scaling {self.scaling!r}")

    def fit(self, train: InteractionMatrix, callback=None) -> IALS:
        self._validate()
        self.train_ = train
        rng = as_rng(self.seed)
        x = train.csr
        xt = x.T.tocsr()
        conf_u = confidence(x.data, self.alpha, self.scaling, self.epsilon)
        conf_i = confidence(xt.data, self.alpha, self.scaling, self.epsilon)
        u = rng.normal(0.0, INIT_STD, (train.n_users, self.factors))
        v = rng.normal(0.0, INIT_STD, (train.n_items, self.factors))
        for epoch in range(self.epochs):
            u = als_half_sweep(x, conf_u, v, self.reg)
            v = als_half_sweep(xt, conf_i, u, self.reg)
            if callback is not None:
                callback(epoch, u, v)
        self.factors_ = FactorModel(u, v)
        return self

    def score(self, users):
        self._check_fitted()
        return self.factors_.score(users)


# --- BPRMF -------------------------------------------------------------------------------------


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def bpr_triple_loss(u, vi, vj, reg_user, reg_pos, reg_neg) -> float:
    """-ln sigma(u.(vi - vj)) plus the three L2 penalties."""
    x = float(u @ (vi - vj))
    return float(-_log_sigmoid(x) + reg_user * u @ u + reg_pos * vi @ vi + reg_neg * vj @ vj)


def bpr_triple_grad(u, vi, vj, reg_user, reg_pos, reg_neg):
    x = float(u @ (vi - vj))
    s = 1.0 / (1.0 + math.exp(x))  # sigma(-x)
    return (
        -s * (vi - vj) + 2.0 * reg_user * u,
        -s * u + 2.0 * reg_pos * vi,
        s * u + 2.0 * reg_neg * vj,
    )


@njit(cache=True)
def _bpr_sgd(users, pos, neg, uf, itf, lr, reg_user, reg_pos, reg_neg):
    f = uf.shape[1]
    total = 0.0
    for t in range(users.shape[0]):
        u, i, j = users[t], pos[t], neg[t]
        x = 0.0
        for s in range(f):
            x += uf[u, s] * (itf[i, s] - itf[j, s])
        if x > 0:
            total += math.log1p(math.exp(-x))
        else:
            total += -x + math.log1p(math.exp(x))
        sig = 1.0 / (1.0 + math.exp(x))
        for s in range(f):
            wu = uf[u, s]
            wi = itf[i, s]
            wj = itf[j, s]
            uf[u, s] -= lr * (-sig * (wi - wj) + 2.0 * reg_user * wu)
            itf[i, s] -= lr * (-sig * wu + 2.0 * reg_pos * wi)
            itf[j, s] -= lr * (sig * wu + 2.0 * reg_neg * wj)
    return total


def bpr_sgd_step(users, pos, neg, user_factors, item_factors, lr, reg_user, reg_pos, reg_neg) -> float:
    """Sequential SGD over the given triples, in place; returns the summed log-loss."""
    return _bpr_sgd(
        np.asarray(users, np.int64), np.asarray(pos, np.int64), np.asarray(neg, np.int64),
        user_factors, item_factors, lr, reg_user, reg_pos, reg_neg,
    )


class BPRMF(Recommender):
    """Pairwise ranking MF; each epoch draws one (u, i+, i-) triple per training interaction.

    Triples are sampled ``batch_size`` at a time and applied as sequential
    per-triple SGD updates.
    """

    name = "BPRMF"

    def __init__(
        self,
        factors: int = 64,
        epochs: int = 30,
        lr: float = 0.05,
        batch_size: int = 256,
        reg_user: float = 1e-3,
        reg_pos: float = 1e-3,
        reg_neg: float = 1e-3,
        seed: int = 42,
    ):
        self.factors = factors
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.reg_user = reg_user
        self.reg_pos = reg_pos
        self.reg_neg = reg_neg
        self.seed = seed

    def fit(self, train: InteractionMatrix) -> BPRMF:
        if self.factors < 1 or self.epochs < 0 or self.batch_size < 1 or self.lr < 0:
            raise ConfigurationError("invalid BPRMF schedule")
        self.train_ = train
        rng = as_rng(self.seed)
        uf = rng.normal(0.0, INIT_STD, (train.n_users, self.factors))
        itf = rng.normal(0.0, INIT_STD, (train.n_items, self.factors))
        users, items = _trainable_pairs(train)
        sampler = NegativeSampler(train)
        self.loss_history_ = []
        for _ in range(self.epochs):
            order = rng.permutation(len(users))
            total = 0.0
            for start in range(0, len(order), self.batch_size):
                idx = order[start : start + self.batch_size]
                bu = users[idx]
                neg = sampler(bu, rng)
                total += bpr_sgd_step(bu, items[idx], neg, uf, itf, self.lr, self.reg_user, self.reg_pos, self.reg_neg)
            self.loss_history_.append(total / max(len(users), 1))
        self.factors_ = FactorModel(uf, itf)
        return self

    def score(self, users):
        self._check_fitted()
        return self.factors_.score(users)


# --- MF2020 ------------------------------------------------------------------------------------


def mf_pointwise_loss(u, v, bu, bi, b, y, reg) -> float:
    """Logistic loss of one labelled (user, item) example plus L2 on its factors and biases."""
    x = b + bu + bi + float(u @ v)
    nll = -(y * _log_sigmoid(x) + (1 - y) * _log_sigmoid(-x))
    return float(nll + reg * (u @ u + v @ v + bu * bu + bi * bi))


def mf_pointwise_grad(u, v, bu, bi, b, y, reg):
    """Gradients w.r.t. (u, v, bu, bi, b)."""
    x = b + bu + bi + float(u @ v)
    g = 1.0 / (1.0 + math.exp(-x)) - y
    return g * v + 2 * reg * u, g * u + 2 * reg * v, g + 2 * reg * bu, g + 2 * reg * bi, g


@njit(cache=True)
def _mf_sgd(users, items, labels, uf, itf, ub, ib, gb, lr, reg):
    f = uf.shape[1]
    total = 0.0
    b = gb[0]
    for t in range(users.shape[0]):
        u, i, y = users[t], items[t], labels[t]
        x = b + ub[u] + ib[i]
        for s in range(f):
            x += uf[u, s] * itf[i, s]
        # log(1 + e^-|x|) + max(-x, 0) style stable BCE
        if x > 0:
            total += math.log1p(math.exp(-x)) + (1.0 - y) * x
        else:
            total += math.log1p(math.exp(x)) - y * x
        g = 1.0 / (1.0 + math.exp(-x)) - y
        b -= lr * g
        ub[u] -= lr * (g + 2.0 * reg * ub[u])
        ib[i] -= lr * (g + 2.0 * reg * ib[i])
        for s in range(f):
            wu = uf[u, s]
            wi = itf[i, s]
            uf[u, s] -= lr * (g * wi + 2.0 * reg * wu)
            itf[i, s] -= lr * (g * wu + 2.0 * reg * wi)
    gb[0] = b
    return total


def mf_sgd_step(users, items, labels, model: FactorModel, lr: float, reg: float) -> float:
    gb = np.array([model.global_bias])
    total = _mf_sgd(
        np.asarray(users, np.int64), np.asarray(items, np.int64), np.asarray(labels, np.float64),
        model.user_factors, model.item_factors, model.user_bias, model.item_bias, gb, lr, reg,
    )
    model.global_bias = float(gb[0])
    return total


class MF2020(Recommender):
    """Biased MF trained pointwise with sampled negatives and logistic loss."""

    name = "MF2020"

    def __init__(
        self, factors: int = 64, epochs: int = 30, lr: float = 0.05, reg: float = 0.01, negatives: int = 4, seed: int = 42
    ):
        self.factors = factors
        self.epochs = epochs
        self.lr = lr
        self.reg = reg
        self.negatives = negatives
        self.seed = seed

    def fit(self, train: InteractionMatrix) -> MF2020:
        if self.factors < 1 or self.epochs < 0 or self.negatives < 0 or self.lr < 0:
            raise ConfigurationError("invalid MF2020 schedule")
        self.train_ = train
        rng = as_rng(self.seed)
        model = FactorModel(
            rng.normal(0.0, INIT_STD, (train.n_users, self.factors)),
            rng.normal(0.0, INIT_STD, (train.n_items, self.factors)),
            np.zeros(train.n_users),
            np.zeros(train.n_items),
            0.0,
        )
        users, items = _trainable_pairs(train)
        sampler = NegativeSampler(train)
        self.loss_history_ = []
        for _ in range(self.epochs):
            neg_users = np.repeat(users, self.negatives)
            neg_items = sampler(neg_users, rng)
            eu = np.concatenate([users, neg_users])
            ei = np.concatenate([items, neg_items])
            ey = np.concatenate([np.ones(len(users)), np.zeros(len(neg_users))])
            order = rng.permutation(len(eu))
            total = mf_sgd_step(eu[order], ei[order], ey[order], model, self.lr, self.reg)
            self.loss_history_.append(total / max(len(eu), 1))
        self.factors_ = model
        return self

    def score(self, users):
        self._check_fitted()
        return self.factors_.score(users)
