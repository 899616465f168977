"""Layer-wise forward pass over the whole basket graph.

Each layer turns the previous entity embeddings into the next via the
intent machinery (baskets) and mean-pooled neighbor aggregation (users
and items), then L2-normalizes rows and, at train time, applies node
dropout. Index arrays for all five neighbor maps are precomputed once
per graph so every per-entity reduction is a vectorized segment sum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import diffcore as dc
from . import intents
from .diffcore import Tensor
from .errors import NumericError
from .graph import BasketGraph


def _flatten(adj: list[list[int]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Adjacency lists -> (flat neighbor indices, segment ids, 1/count column)."""
    counts = np.array([len(lst) for lst in adj], dtype=np.intp)
    flat = np.fromiter((x for lst in adj for x in lst), dtype=np.intp,
                       count=int(counts.sum()))
    segs = np.repeat(np.arange(len(adj), dtype=np.intp), counts)
    inv = 1.0 / np.maximum(counts, 1)
    return flat, segs, inv.reshape(-1, 1)


@dataclass
class AdjacencyIndex:
    """Flattened neighbor indices for vectorized aggregation."""

    owner: np.ndarray
    bi_rows: np.ndarray
    bi_segs: np.ndarray
    ub_rows: np.ndarray
    ub_segs: np.ndarray
    ub_inv: Tensor
    ui_rows: np.ndarray
    ui_segs: np.ndarray
    ui_inv: Tensor
    ib_rows: np.ndarray
    ib_segs: np.ndarray
    ib_inv: Tensor
    iu_rows: np.ndarray
    iu_segs: np.ndarray
    iu_inv: Tensor

    @classmethod
    def from_graph(cls, graph: BasketGraph, warn: bool = True) -> "AdjacencyIndex":
        bi_rows, bi_segs, _ = _flatten(graph.basket_items)
        ub_rows, ub_segs, ub_inv = _flatten(graph.user_baskets)
        ui_rows, ui_segs, ui_inv = _flatten(graph.user_items)
        ib_rows, ib_segs, ib_inv = _flatten(graph.item_baskets)
        iu_rows, iu_segs, iu_inv = _flatten(graph.item_users)
        if warn:
            lonely_users = sum(1 for lst in graph.user_baskets if not lst)
            lonely_items = sum(1 for lst in graph.item_baskets if not lst)
            if lonely_users:
                warnings.warn(f"{lonely_users} users have no baskets in this graph; "
                              f"their neighbor terms are zero")
            if lonely_items:
                warnings.warn(f"{lonely_items} items are isolated in this graph; "
                              f"their neighbor terms are zero")
        return cls(owner=np.asarray(graph.basket_owner, dtype=np.intp),
                   bi_rows=bi_rows, bi_segs=bi_segs,
                   ub_rows=ub_rows, ub_segs=ub_segs, ub_inv=Tensor(ub_inv),
                   ui_rows=ui_rows, ui_segs=ui_segs, ui_inv=Tensor(ui_inv),
                   ib_rows=ib_rows, ib_segs=ib_segs, ib_inv=Tensor(ib_inv),
                   iu_rows=iu_rows, iu_segs=iu_segs, iu_inv=Tensor(iu_inv))


@dataclass
class LayerState:
    """Entity embeddings at one layer, plus the transients computed while
    building the next layer (type-guided embeddings and intent snapshots)."""

    E_u: Tensor
    E_i: Tensor
    E_b: Tensor
    user_guided: Optional[Tensor] = None
    item_guided: Optional[Tensor] = None
    intent_h: Optional[list[np.ndarray]] = field(default=None, repr=False)
    intent_o: Optional[list[np.ndarray]] = field(default=None, repr=False)
    gamma: Optional[np.ndarray] = field(default=None, repr=False)
    alpha: Optional[np.ndarray] = field(default=None, repr=False)
    beta: Optional[np.ndarray] = field(default=None, repr=False)

    def intent_bundle(self, basket: int) -> intents.IntentBundle:
        """Per-basket view of the intents generated from this layer."""
        if self.intent_h is None:
            raise ValueError("no intents were generated from this layer")
        return intents.IntentBundle(
            h=np.stack([h[basket] for h in self.intent_h]),
            o=np.stack([o[basket] for o in self.intent_o]),
            gamma=self.gamma[basket].copy(),
            alpha=self.alpha[basket].copy(),
            beta=self.beta[basket].copy())


def _segment_mean(x: Tensor, rows, segs, n: int, inv: Tensor) -> Tensor:
    return dc.scale_rows(dc.segment_sum(x, rows, segs, n), inv)


def user_aggregate(E_u: Tensor, user_guided: Tensor, E_i: Tensor,
                   adj: AdjacencyIndex, slope: float) -> Tensor:
    """Pre-normalization next-layer user embeddings.

    Self term plus the mean of the user's user-guided basket embeddings
    plus the mean of the user's item embeddings. Users without baskets
    or items get zero for the missing term.
    """
    n = E_u.rows
    ni = dc.add(_segment_mean(user_guided, adj.ub_rows, adj.ub_segs, n, adj.ub_inv),
                _segment_mean(E_i, adj.ui_rows, adj.ui_segs, n, adj.ui_inv))
    return dc.leaky_relu(dc.add(E_u, ni), slope)


def item_aggregate(E_i: Tensor, item_guided: Tensor, E_u: Tensor,
                   adj: AdjacencyIndex, slope: float) -> Tensor:
    """Pre-normalization next-layer item embeddings (mirror of users)."""
    m = E_i.rows
    ni = dc.add(_segment_mean(item_guided, adj.ib_rows, adj.ib_segs, m, adj.ib_inv),
                _segment_mean(E_u, adj.iu_rows, adj.iu_segs, m, adj.iu_inv))
    return dc.leaky_relu(dc.add(E_i, ni), slope)


def forward(graph: BasketGraph, params, mode: str = "eval",
            rng: Optional[np.random.Generator] = None,
            adj: Optional[AdjacencyIndex] = None) -> list[LayerState]:
    """Run the full propagation stack, returning states for layers 0..L.

    Layer 0 is the stored embedding tables. Evaluation mode is a pure
    function of (graph, params); train mode additionally applies dropout
    masks drawn from rng to each new layer's normalized embeddings.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown forward mode {mode!r}")
    if (params.num_users, params.num_baskets, params.num_items) != \
            (graph.num_users, graph.num_baskets, graph.num_items):
        raise ValueError(
            f"params sized for (N,S,M)=({params.num_users},{params.num_baskets},"
            f"{params.num_items}) but graph has ({graph.num_users},"
            f"{graph.num_baskets},{graph.num_items})")
    dropping = mode == "train" and params.dropout > 0.0
    if dropping and rng is None:
        raise ValueError("train-mode forward with dropout needs an rng")
    if adj is None:
        adj = AdjacencyIndex.from_graph(graph, warn=False)

    slope = params.leaky_slope
    states = [LayerState(E_u=params.user_emb, E_i=params.item_emb,
                         E_b=params.basket_emb)]
    for layer in range(params.num_layers):
        prev = states[layer]
        w = params.layers[layer]
        try:
            owner_embs = dc.gather_rows(prev.E_u, adj.owner)
            o_heads = intents.relation_vectors_all(
                owner_embs, prev.E_i, adj.bi_rows, adj.bi_segs,
                graph.num_baskets, w)
            h_heads = intents.translate_intents_all(prev.E_b, o_heads, w)

            item_mean = dc.repeat_rows(dc.mean_rows(prev.E_i), graph.num_baskets)
            gamma = intents.attend_all(h_heads, prev.E_b, w.att_basket, slope)
            alpha = intents.attend_all(h_heads, owner_embs, w.att_user, slope)
            beta = intents.attend_all(h_heads, item_mean, w.att_item, slope)

            basket_next = intents.combine_heads_all(h_heads, gamma, slope)
            prev.user_guided = intents.combine_heads_all(h_heads, alpha, slope)
            prev.item_guided = intents.combine_heads_all(h_heads, beta, slope)
            prev.intent_h = [h.value for h in h_heads]
            prev.intent_o = [o.value for o in o_heads]
            prev.gamma, prev.alpha, prev.beta = gamma.value, alpha.value, beta.value
            basket_next = dc.l2_normalize_rows(basket_next)
            if dropping:
                basket_next = dc.mul(basket_next, dc.dropout_mask(
                    basket_next.shape, params.dropout, rng))
        except NumericError as exc:
            raise NumericError(f"basket embeddings at layer {layer + 1}: {exc}") from None

        try:
            user_next = dc.l2_normalize_rows(
                user_aggregate(prev.E_u, prev.user_guided, prev.E_i, adj, slope))
            if dropping:
                user_next = dc.mul(user_next, dc.dropout_mask(
                    user_next.shape, params.dropout, rng))
        except NumericError as exc:
            raise NumericError(f"user embeddings at layer {layer + 1}: {exc}") from None
        try:
            item_next = dc.l2_normalize_rows(
                item_aggregate(prev.E_i, prev.item_guided, prev.E_u, adj, slope))
            if dropping:
                item_next = dc.mul(item_next, dc.dropout_mask(
                    item_next.shape, params.dropout, rng))
        except NumericError as exc:
            raise NumericError(f"item embeddings at layer {layer + 1}: {exc}") from None

        states.append(LayerState(E_u=user_next, E_i=item_next, E_b=basket_next))
    return states
