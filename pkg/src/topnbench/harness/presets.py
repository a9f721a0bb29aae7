"""Hyperparameter search spaces and published optima per (algorithm, dataset)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from ..models.base import ConfigurationError

DATASETS = ("ml1m", "amazon", "epinions")


@dataclass(frozen=True)
class Param:
    """One hyperparameter domain.

    ``kind`` is ``"int"``, ``"real"`` or ``"choice"``; ``dist`` is ``"uniform"``,
    ``"log-uniform"`` or ``"choice"``.
    """

    name: str
    kind: str
    low: float | None = None
    high: float | None = None
    choices: tuple = ()
    dist: str = "uniform"

    def __post_init__(self):
        if self.kind == "choice":
            if not self.choices:
                raise ConfigurationError(f"{self.name}: empty choice set")
            object.__setattr__(self, "dist", "choice")
            return
        if self.kind not in ("int", "real"):
            raise ConfigurationError(f"{self.name}: unknown kind {self.kind!r}")
        if self.low is None or self.high is None or self.low > self.high:
            raise ConfigurationError(f"{self.name}: bounds must be ordered")
        if self.dist == "log-uniform" and self.low <= 0:
            raise ConfigurationError(f"{self.name}: log-uniform bounds must be positive")

    def sample(self, rng: np.random.Generator):
        if self.kind == "choice":
            return self.choices[int(rng.integers(len(self.choices)))]
        if self.dist == "log-uniform":
            v = math.exp(rng.uniform(math.log(self.low), math.log(self.high)))
        else:
            v = rng.uniform(self.low, self.high)
        if self.kind == "int":
            return int(min(max(round(v), self.low), self.high))
        return float(v)

    def contains(self, value) -> bool:
        if self.kind == "choice":
            return value in self.choices
        return self.low <= value <= self.high


@dataclass(frozen=True)
class SearchSpace:
    params: tuple[Param, ...] = ()
    #: values passed to every trial but never searched (e.g. epoch counts)
    fixed: Mapping[str, Any] | None = None

    def __len__(self) -> int:
        return len(self.params)

    def sample(self, rng: np.random.Generator) -> dict:
        out = dict(self.fixed or {})
        out.update({p.name: p.sample(rng) for p in self.params})
        return out

    def violations(self, values: Mapping[str, Any]) -> list[str]:
        return [
            f"{p.name}={values[p.name]!r} outside {p.choices or (p.low, p.high)}"
            for p in self.params
            if p.name in values and not p.contains(values[p.name])
        ]


def _int(name, lo, hi):
    return Param(name, "int", lo, hi)


def _real(name, lo, hi, dist="uniform"):
    return Param(name, "real", lo, hi, dist=dist)


def _choice(name, *values):
    return Param(name, "choice", choices=tuple(values))


_SIMS = ("cosine", "jaccard", "dice", "pearson", "euclidean")
_FACTORS = (8, 16, 32, 64, 128, 256)
_LR = ("lr", 1e-5, 1.0, "log-uniform")

SEARCH_SPACES: dict[str, SearchSpace] = {
    "Random": SearchSpace(),
    "MostPop": SearchSpace(),
    "UserKNN": SearchSpace((_int("k", 5, 1000), _choice("similarity", *_SIMS))),
    "ItemKNN": SearchSpace((_int("k", 5, 1000), _choice("similarity", *_SIMS))),
    "RP3beta": SearchSpace(
        (_int("k", 5, 1000), _real("alpha", 0, 2), _real("beta", 0, 2), _choice("normalize", True, False))
    ),
    "SLIM": SearchSpace(
        (_int("k", 5, 1000), _real("l1_ratio", 1e-5, 1.0, "log-uniform"), _real("alpha", 0.01, 1.0))
    ),
    "EASE": SearchSpace((_real("l2", 1.0, 1e7, "log-uniform"),)),
    "MF2020": SearchSpace(
        (
            _choice("factors", *_FACTORS),
            _int("epochs", 30, 100),
            _real(*_LR),
            _real("reg", 1e-5, 0.1, "log-uniform"),
            _choice("negatives", 4, 6, 8),
        )
    ),
    "iALS": SearchSpace(
        (
            _int("factors", 1, 200),
            _choice("scaling", "linear", "log"),
            _real("alpha", 0.001, 50),
            _real("epsilon", 0.001, 10),
            _real("reg", 0.001, 0.01),
        )
    ),
    "BPRMF": SearchSpace(
        (
            _choice("factors", *_FACTORS),
            _real(*_LR),
            _choice("batch_size", 128, 256, 512),
            _real("reg_user", 1e-5, 0.1, "log-uniform"),
            _real("reg_pos", 1e-5, 0.1, "log-uniform"),
            _real("reg_neg", 1e-5, 0.1, "log-uniform"),
        )
    ),
    "NeuMF": SearchSpace(
        (
            _choice("factors", *_FACTORS),
            _int("epochs", 30, 100),
            _real(*_LR),
            _choice("batch_size", 128, 256, 512),
            _choice("negatives", 4, 6, 8),
        )
    ),
    "MultiVAE": SearchSpace(
        (
            _int("epochs", 100, 300),
            _real(*_LR),
            _choice("batch_size", 64, 128, 256),
            _int("intermediate", 400, 800),
            _int("latent", 100, 400),
            _real("reg", 1e-5, 1.0, "log-uniform"),
        )
    ),
}


def _by_dataset(**cols: Sequence) -> dict[str, dict]:
    return {ds: {name: values[i] for name, values in cols.items()} for i, ds in enumerate(DATASETS)}


# published optima, columns in DATASETS order
PRESETS: dict[str, dict[str, dict]] = {
    "UserKNN": _by_dataset(k=(117, 226, 139), similarity=("pearson", "cosine", "cosine")),
    "ItemKNN": _by_dataset(k=(95, 798, 137), similarity=("cosine", "cosine", "cosine")),
    "RP3beta": _by_dataset(
        k=(158, 803, 144),
        alpha=(1.4350197, 0.4973207, 0.8719344),
        beta=(0.3265517, 0.2836938, 0.2483698),
        normalize=(True, False, True),
    ),
    "SLIM": _by_dataset(
        k=(518, 663, 663), l1_ratio=(0.0000420, 0.0000108, 0.0000108), alpha=(0.2978543, 0.0486771, 0.0486771)
    ),
    "EASE": _by_dataset(l2=(238.5621338, 238.5621338, 238.5621338)),
    "MF2020": _by_dataset(
        factors=(128, 64, 16),
        epochs=(72, 92, 97),
        lr=(0.1295965, 0.1295965, 0.0154435),
        reg=(0.0087583, 0.0125009, 0.0223642),
        negatives=(4, 8, 4),
    ),
    "iALS": _by_dataset(
        factors=(51, 200, 178),
        epochs=(27, 70, 145),
        scaling=("log", "log", "log"),
        alpha=(6.3818930, 9.1219718, 2.8537184),
        epsilon=(5.6496278, 0.4921936, 2.3098481),
        reg=(0.0494734, 0.4921936, 0.0411491),
    ),
    "BPRMF": _by_dataset(
        factors=(256, 64, 256),
        epochs=(73, 86, 63),
        lr=(0.0378936, 0.1265624, 0.1004075),
        batch_size=(256, 256, 256),
        reg_user=(0.0157839, 0.0058673, 0.0002613),
        reg_pos=(0.0005651, 0.0052985, 0.0034511),
        reg_neg=(0.0012779, 0.0009577, 0.0328127),
    ),
    "NeuMF": _by_dataset(
        factors=(16, 128, 32),
        epochs=(93, 100, 39),
        lr=(0.0000366, 0.0001365, 0.0000465),
        batch_size=(256, 64, 256),
        negatives=(6, 6, 8),
    ),
    "MultiVAE": _by_dataset(
        epochs=(100, 205, 200),
        lr=(0.0001545, 0.0000723, 0.0001003),
        batch_size=(128, 128, 128),
        intermediate=(674, 721, 674),
        latent=(175, 279, 175),
        reg=(0.0000105, 0.1153400, 0.0020018),
    ),
    "MostPop": {ds: {} for ds in DATASETS},
    "Random": {ds: {} for ds in DATASETS},
}


def preset(algorithm: str, dataset: str) -> dict:
    try:
        return dict(PRESETS[algorithm][dataset])
    except KeyError:
        raise ConfigurationError(f"no preset for ({algorithm!r}, {dataset!r})") from None


def preset_violations() -> dict[tuple[str, str], list[str]]:
    """Published values that fall outside the published search space."""
    out = {}
    for alg, by_ds in PRESETS.items():
        for ds, values in by_ds.items():
            bad = SEARCH_SPACES[alg].violations(values)
            if bad:
                out[(alg, ds)] = bad
    return out


def default_trials(algorithm: str) -> int:
    return 50 if len(SEARCH_SPACES.get(algorithm, SearchSpace())) >= 4 else 20
