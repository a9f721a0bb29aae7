"""NeuMF and MultiVAE on the :mod:`.nn` substrate."""
from __future__ import annotations

import numpy as np

from ..corpus import InteractionMatrix
from .base import ConfigurationError, Recommender, as_rng
from .mf import INIT_STD, NegativeSampler, _trainable_pairs
from .nn import Dense, DenseNet, make_optimizer, sigmoid


def _check_finite(name: str, history: list[float]) -> None:
    if not np.isfinite(history[-1]):
        raise FloatingPointError(f"{name} training diverged in epoch {len(history)}; lower the learning rate")


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


class NeuMFNet:
    """GMF and MLP branches fused into one logit.

    The MLP tower maps the concatenated embeddings 2f -> f -> f/2 with relu.
    """

    def __init__(self, n_users: int, n_items: int, factors: int, rng=None):
        rng = as_rng(rng)
        f = factors
        half = max(1, f // 2)
        self.factors = f
        self.user_gmf = rng.normal(0.0, INIT_STD, (n_users, f))
        self.item_gmf = rng.normal(0.0, INIT_STD, (n_items, f))
        self.user_mlp = rng.normal(0.0, INIT_STD, (n_users, f))
        self.item_mlp = rng.normal(0.0, INIT_STD, (n_items, f))
        self.tower = DenseNet([2 * f, f, half], ["relu", "relu"], rng)
        self.fusion = Dense(f + half, 1, "identity", rng)

    def params(self) -> list[np.ndarray]:
        return [self.user_gmf, self.item_gmf, self.user_mlp, self.item_mlp, *self.tower.params(),
                self.fusion.weight, self.fusion.bias]

    def logits(self, users, items, cache=False):
        pg, qg = self.user_gmf[users], self.item_gmf[items]
        gmf = pg * qg
        mlp_in = np.concatenate([self.user_mlp[users], self.item_mlp[items]], axis=1)
        mlp, tower_cache = self.tower.forward(mlp_in)
        h = np.concatenate([gmf, mlp], axis=1)
        z = (h @ self.fusion.weight + self.fusion.bias)[:, 0]
        if cache:
            return z, (users, items, pg, qg, h, tower_cache)
        return z

    def predict(self, users, items):
        return sigmoid(self.logits(users, items))

    def loss(self, users, items, labels) -> float:
        """Mean binary cross-entropy."""
        z = self.logits(users, items)
        return float(-np.mean(labels * _log_sigmoid(z) + (1 - labels) * _log_sigmoid(-z)))

    def loss_and_grads(self, users, items, labels):
        z, (users, items, pg, qg, h, tower_cache) = self.logits(users, items, cache=True)
        loss = float(-np.mean(labels * _log_sigmoid(z) + (1 - labels) * _log_sigmoid(-z)))
        dz = ((sigmoid(z) - labels) / len(z))[:, None]
        d_wo = h.T @ dz
        d_bo = dz.sum(axis=0)
        dh = dz @ self.fusion.weight.T
        f = self.factors
        dgmf, dmlp = dh[:, :f], dh[:, f:]
        tower_grads, dmlp_in = self.tower.backward(tower_cache, dmlp)
        g_ug = np.zeros_like(self.user_gmf)
        g_ig = np.zeros_like(self.item_gmf)
        g_um = np.zeros_like(self.user_mlp)
        g_im = np.zeros_like(self.item_mlp)
        np.add.at(g_ug, users, dgmf * qg)
        np.add.at(g_ig, items, dgmf * pg)
        np.add.at(g_um, users, dmlp_in[:, :f])
        np.add.at(g_im, items, dmlp_in[:, f:])
        return loss, [g_ug, g_ig, g_um, g_im, *tower_grads, d_wo, d_bo]


class NeuMF(Recommender):
    name = "NeuMF"

    def __init__(
        self,
        factors: int = 16,
        epochs: int = 20,
        lr: float = 1e-3,
        batch_size: int = 256,
        negatives: int = 4,
        optimizer: str = "sgd",
        seed: int = 42,
    ):
        self.factors = factors
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.negatives = negatives
        self.optimizer = optimizer
        self.seed = seed

    def fit(self, train: InteractionMatrix) -> NeuMF:
        if self.factors < 1 or self.epochs < 0 or self.batch_size < 1 or self.negatives < 0:
            raise ConfigurationError("invalid NeuMF schedule")
        self.train_ = train
        rng = as_rng(self.seed)
        net = NeuMFNet(train.n_users, train.n_items, self.factors, rng)
        opt = make_optimizer(self.optimizer, net.params(), self.lr)
        users, items = _trainable_pairs(train)
        sampler = NegativeSampler(train)
        self.loss_history_ = []
        for _ in range(self.epochs):
            neg_users = np.repeat(users, self.negatives)
            eu = np.concatenate([users, neg_users])
            ei = np.concatenate([items, sampler(neg_users, rng)])
            ey = np.concatenate([np.ones(len(users)), np.zeros(len(neg_users))])
            order = rng.permutation(len(eu))
            total = 0.0
            for start in range(0, len(order), self.batch_size):
                idx = order[start : start + self.batch_size]
                loss, grads = net.loss_and_grads(eu[idx], ei[idx], ey[idx])
                opt.step(grads)
                total += loss * len(idx)
            self.loss_history_.append(total / max(len(eu), 1))
            _check_finite(self.name, self.loss_history_)
        self.net_ = net
        return self

    def score(self, users):
        train = self._check_fitted()
        n = train.n_items
        users = np.asarray(users)
        uu = np.repeat(users, n)
        ii = np.tile(np.arange(n), len(users))
        return self.net_.logits(uu, ii).reshape(len(users), n)


class MultiVAENet:
    """Encoder n_items -> hidden -> 2 x latent (mean, log-variance); decoder latent -> hidden -> n_items."""

    def __init__(self, n_items: int, intermediate: int, latent: int, rng=None):
        rng = as_rng(rng)
        self.latent = latent
        self.encoder = DenseNet([n_items, intermediate, 2 * latent], ["tanh", "identity"], rng)
        self.decoder = DenseNet([latent, intermediate, n_items], ["tanh", "identity"], rng)

    def params(self) -> list[np.ndarray]:
        return self.encoder.params() + self.decoder.params()

    @staticmethod
    def normalize(x: np.ndarray) -> np.ndarray:
        norm = np.sqrt((x * x).sum(axis=1, keepdims=True))
        norm[norm == 0] = 1.0
        return x / norm

    def encode(self, x):
        out, cache = self.encoder.forward(self.normalize(x))
        return out[:, : self.latent], out[:, self.latent :]

    def logits(self, x):
        mu, _ = self.encode(x)
        return self.decoder(mu)

    def loss_and_grads(self, x, beta: float, eps=None, keep_mask=None, keep_prob: float = 1.0, grads: bool = True):
        """Negative multinomial log-likelihood plus ``beta`` x KL, averaged over the batch.

        ``eps`` is the reparameterization noise (``None`` uses the mean) and
        ``keep_mask`` the input dropout mask, both supplied by the caller so the
        loss is a deterministic function of the parameters.
        """
        b = x.shape[0]
        h = self.normalize(x)
        if keep_mask is not None:
            h = h * keep_mask / keep_prob
        enc, enc_cache = self.encoder.forward(h)
        lat = self.latent
        mu, logvar = enc[:, :lat], enc[:, lat:]
        std = np.exp(0.5 * logvar)
        z = mu if eps is None else mu + eps * std
        logits, dec_cache = self.decoder.forward(z)
        shift = logits.max(axis=1, keepdims=True)
        lse = shift + np.log(np.exp(logits - shift).sum(axis=1, keepdims=True))
        log_softmax = logits - lse
        nll = -(x * log_softmax).sum(axis=1)
        kl = 0.5 * (-logvar + np.exp(logvar) + mu * mu - 1.0).sum(axis=1)
        loss = float(nll.mean() + beta * kl.mean())
        if not grads:
            return loss, None
        softmax = np.exp(log_softmax)
        dlogits = (softmax * x.sum(axis=1, keepdims=True) - x) / b
        dec_grads, dz = self.decoder.backward(dec_cache, dlogits)
        dmu = dz + beta * mu / b
        if eps is None:
            dlogvar = beta * 0.5 * (np.exp(logvar) - 1.0) / b
        else:
            dlogvar = dz * eps * 0.5 * std + beta * 0.5 * (np.exp(logvar) - 1.0) / b
        enc_grads, _ = self.encoder.backward(enc_cache, np.concatenate([dmu, dlogvar], axis=1))
        return loss, enc_grads + dec_grads

    @staticmethod
    def kl(mu, logvar) -> np.ndarray:
        return 0.5 * (-logvar + np.exp(logvar) + mu * mu - 1.0).sum(axis=1)


class MultiVAE(Recommender):
    """Variational autoencoder with multinomial likelihood.

    ``reg`` is the KL anneal cap: the KL weight rises linearly from 0 to ``reg``
    over the first half of the training steps and stays there.
    """

    name = "MultiVAE"

    def __init__(
        self,
        intermediate: int = 600,
        latent: int = 200,
        epochs: int = 100,
        lr: float = 1e-3,
        batch_size: int = 128,
        reg: float = 0.2,
        dropout: float = 0.5,
        optimizer: str = "sgd",
        seed: int = 42,
    ):
        self.intermediate = intermediate
        self.latent = latent
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.reg = reg
        self.dropout = dropout
        self.optimizer = optimizer
        self.seed = seed

    def fit(self, train: InteractionMatrix) -> MultiVAE:
        if self.epochs < 0 or self.batch_size < 1 or not 0 <= self.dropout < 1:
            raise ConfigurationError("invalid MultiVAE schedule")
        self.train_ = train
        rng = as_rng(self.seed)
        net = MultiVAENet(train.n_items, self.intermediate, self.latent, rng)
        opt = make_optimizer(self.optimizer, net.params(), self.lr)
        users = np.flatnonzero(train.user_degrees() > 0)
        n_batches = -(-len(users) // self.batch_size)
        anneal_steps = max(1, self.epochs * n_batches // 2)
        keep = 1.0 - self.dropout
        step = 0
        self.loss_history_ = []
        for _ in range(self.epochs):
            order = rng.permutation(users)
            total = 0.0
            for start in range(0, len(order), self.batch_size):
                batch = order[start : start + self.batch_size]
                x = train.csr[batch].toarray()
                beta = self.reg * min(1.0, step / anneal_steps)
                mask = rng.random(x.shape) < keep if self.dropout > 0 else None
                eps = rng.standard_normal((len(batch), self.latent))
                loss, grads = net.loss_and_grads(x, beta, eps, mask, keep)
                opt.step(grads)
                total += loss * len(batch)
                step += 1
            self.loss_history_.append(total / max(len(users), 1))
            _check_finite(self.name, self.loss_history_)
        self.net_ = net
        return self

    def score(self, users):
        train = self._check_fitted()
        return self.net_.logits(train.csr[users].toarray())
