"""Embedding inference and scoring for baskets unseen during training.

A cold basket attaches to the trained graph one-directionally: its
layer-0 embedding is the owner's embedding plus the mean of the seed
items' embeddings, and each subsequent layer reruns the intent pipeline
for that single basket against the cached train-graph layer states. The
cache, the graph, and the parameters are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import diffcore as dc
from . import intents
from .diffcore import Tensor
from .errors import DataError
from .graph import BasketGraph, TestCase
from .propagation import AdjacencyIndex, LayerState, forward
from .training import ModelParams


@dataclass
class ColdBasket:
    """A basket known only by its owner and currently visible items."""

    owner: int
    seed_items: tuple[int, ...]
    layer_embeddings: list[np.ndarray] = field(default_factory=list)


def infer_layer0(user: int, seed_items: Sequence[int],
                 params: ModelParams) -> np.ndarray:
    """Layer-0 embedding of a cold basket: owner embedding plus the mean
    of the seed items' embeddings (owner only when no seeds exist)."""
    if not 0 <= user < params.num_users:
        raise DataError(f"unknown user index {user}")
    e = params.user_emb.value[user].copy()
    if seed_items:
        e += params.item_emb.value[list(seed_items)].mean(axis=0)
    return e


class _FrozenLayer:
    """Constant-tensor view of one layer's intent weights."""

    def __init__(self, w: intents.IntentLayerWeights):
        self.basket_proj = Tensor(w.basket_proj.value)
        self.user_proj = [Tensor(p.value) for p in w.user_proj]
        self.item_proj = [Tensor(p.value) for p in w.item_proj]
        self.att_basket = Tensor(w.att_basket.value)
        self.att_user = Tensor(w.att_user.value)
        self.att_item = Tensor(w.att_item.value)


def infer_forward(cold: ColdBasket, params: ModelParams,
                  states: list[LayerState],
                  frozen: Optional[list[_FrozenLayer]] = None) -> list[np.ndarray]:
    """Per-layer embeddings (0..L) of the cold basket.

    Layers beyond 0 run the intent pipeline for this one basket against
    the cached train-graph states, with the same L2 normalization the
    training forward applies between layers. Fills and returns
    cold.layer_embeddings.
    """
    if not 0 <= cold.owner < params.num_users:
        raise DataError(f"unknown user index {cold.owner}")
    if frozen is None:
        frozen = [_FrozenLayer(w) for w in params.layers]
    seeds = list(cold.seed_items)
    slope = params.leaky_slope

    e_b = Tensor(infer_layer0(cold.owner, seeds, params).reshape(1, -1))
    out = [e_b.value[0].copy()]
    for layer in range(params.num_layers):
        w = frozen[layer]
        e_u = Tensor(states[layer].E_u.value[cold.owner:cold.owner + 1])
        seed_embs = Tensor(states[layer].E_i.value[seeds]) if seeds else None
        o = intents.relation_vectors(e_u, seed_embs, w)
        h = intents.translate_intents(e_b, o, w.basket_proj)
        gamma = intents.attend(h, e_b, w.att_basket, slope)
        e_b = intents.aggregate_basket(h, gamma, slope)
        e_b = dc.l2_normalize_rows(e_b)
        out.append(e_b.value[0].copy())
    cold.layer_embeddings = out
    return out


class InductiveScorer:
    """Caches one evaluation forward pass and scores cold baskets.

    Safe to share across many concurrent lookups: every per-case call is
    a pure read of the cached states.
    """

    def __init__(self, params: ModelParams, graph: BasketGraph,
                 adj: Optional[AdjacencyIndex] = None):
        self.params = params
        self.graph = graph
        self.states = forward(graph, params, mode="eval", adj=adj)
        self.user_final = np.hstack([s.E_u.value for s in self.states])
        self.item_final = np.hstack([s.E_i.value for s in self.states])
        self._frozen = [_FrozenLayer(w) for w in params.layers]

    def infer(self, owner: int, seed_items: Sequence[int]) -> ColdBasket:
        cold = ColdBasket(owner=owner, seed_items=tuple(seed_items))
        infer_forward(cold, self.params, self.states, self._frozen)
        return cold

    def score_cold(self, owner: int, seed_items: Sequence[int]) -> np.ndarray:
        cold = self.infer(owner, seed_items)
        basket_final = np.concatenate(cold.layer_embeddings)
        return self.item_final @ (self.user_final[owner] + basket_final)

    def scorer(self) -> Callable[[TestCase], np.ndarray]:
        def score(case: TestCase) -> np.ndarray:
            return self.score_cold(case.user.index, case.seed_items)
        return score
