"""Recommender implementations and a name-keyed registry."""
from __future__ import annotations

from .base import ConfigurationError, NotFittedError, RankedList, Recommender, top_n
from .linear import EASE, SLIM, ItemWeightMatrix
from .memory import ItemKNN, MostPop, RandomRec, RP3beta, UserKNN
from .mf import BPRMF, IALS, MF2020, FactorModel
from .neural import MultiVAE, NeuMF

REGISTRY: dict[str, type[Recommender]] = {
    cls.name: cls
    for cls in (RandomRec, MostPop, UserKNN, ItemKNN, RP3beta, SLIM, EASE, IALS, BPRMF, MF2020, NeuMF, MultiVAE)
}


def make(name: str, **params) -> Recommender:
    """Instantiate a recommender by its registry name, e.g. ``make("EASE", l2=200.0)``."""
    try:
        cls = REGISTRY[name]
    except KeyError:
        raise ConfigurationError(f"unknown algorithm {name!r}; known: {sorted(REGISTRY)}") from None
    try:
        return cls(**params)
    except TypeError as e:
        raise ConfigurationError(f"{name}: {e}") from None


__all__ = [
    "REGISTRY", "make", "Recommender", "RankedList", "top_n", "ConfigurationError", "NotFittedError",
    "RandomRec", "MostPop", "UserKNN", "ItemKNN", "RP3beta", "SLIM", "EASE", "IALS", "BPRMF", "MF2020",
    "NeuMF", "MultiVAE", "ItemWeightMatrix", "FactorModel",
]
