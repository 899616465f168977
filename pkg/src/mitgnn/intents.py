"""Multi-intent generation and aggregation for basket nodes.

Each basket emits T latent intent embeddings: translations of the
basket's projected embedding by per-head relation vectors built from the
owner's and the member items' embeddings. Attention over the intents
then yields the basket's next-layer embedding plus two transient
type-guided embeddings consumed by the user and item aggregators.

Functions here come in two flavors: the batched ``*_all`` forms operate
on one row per basket and drive the full-graph forward pass; the
single-basket forms mirror them for inference of one cold basket.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Param, Tensor


@dataclass
class IntentLayerWeights:
    """Trainable weights for one propagation layer's intent machinery.

    basket_proj maps the basket embedding into intent space; each head t
    carries a (user_proj[t], item_proj[t]) pair that builds its relation
    vector; the three attention vectors (shape (2d, 1)) score intents
    against basket, owner, and global-item contexts.
    """

    basket_proj: Param
    user_proj: list[Param]
    item_proj: list[Param]
    att_basket: Param
    att_user: Param
    att_item: Param

    @property
    def num_heads(self) -> int:
        return len(self.user_proj)

    @property
    def dim(self) -> int:
        return self.basket_proj.shape[0]

    def all_params(self) -> list[Param]:
        out = [self.basket_proj]
        out.extend(self.user_proj)
        out.extend(self.item_proj)
        out.extend([self.att_basket, self.att_user, self.att_item])
        return out


@dataclass
class IntentBundle:
    """Value snapshot of one basket's intents at one layer."""

    h: np.ndarray       # (T, d) intent embeddings
    o: np.ndarray       # (T, d) relation vectors
    gamma: np.ndarray   # (T,) basket-context attention
    alpha: np.ndarray   # (T,) owner-context attention
    beta: np.ndarray    # (T,) item-context attention


# ---------------------------------------------------------------------------
# batched forms: one row per basket


def relation_vectors_all(owner_embs: Tensor, item_embs: Tensor,
                         item_row_index, item_segment_index,
                         num_baskets: int,
                         weights: IntentLayerWeights) -> list[Tensor]:
    """Per-head relation vectors for every basket.

    o_t = owner_emb @ user_proj[t] + sum over basket items of
    item_emb @ item_proj[t]. The item term is an unnormalized sum;
    baskets without items (cold case) get the owner term only.
    """
    heads = []
    for w1, w2 in zip(weights.user_proj, weights.item_proj):
        item_term = dc.segment_sum(dc.matmul(item_embs, w2),
                                   item_row_index, item_segment_index, num_baskets)
        heads.append(dc.add(dc.matmul(owner_embs, w1), item_term))
    return heads


def translate_intents_all(basket_embs: Tensor, o_heads: list[Tensor],
                          weights: IntentLayerWeights) -> list[Tensor]:
    """h_t = basket_emb @ basket_proj + o_t for every head."""
    base = dc.matmul(basket_embs, weights.basket_proj)
    return [dc.add(base, o) for o in o_heads]


def attend_all(h_heads: list[Tensor], context: Tensor, att: Param,
               slope: float) -> Tensor:
    """Softmax over heads of the activated (intent ++ context) score.

    Returns a (baskets, T) row-stochastic matrix.
    """
    logits = [dc.leaky_relu(dc.matmul(dc.concat_cols([h, context]), att), slope)
              for h in h_heads]
    return dc.softmax_rows(dc.concat_cols(logits))


def combine_heads_all(h_heads: list[Tensor], att_weights: Tensor,
                      slope: float) -> Tensor:
    """sigma(sum_t w[:, t] * h_t), the attention-weighted intent mix."""
    total = None
    for t, h in enumerate(h_heads):
        term = dc.scale_rows(h, dc.slice_cols(att_weights, t, t + 1))
        total = term if total is None else dc.add(total, term)
    return dc.leaky_relu(total, slope)


# ---------------------------------------------------------------------------
# single-basket forms


def relation_vectors(user_emb: Tensor, item_embs: Tensor | None,
                     weights: IntentLayerWeights) -> Tensor:
    """(T, d) relation vectors for one basket.

    item_embs holds one row per basket item and may be None or empty for
    a cold basket with no visible items.
    """
    rows = []
    for w1, w2 in zip(weights.user_proj, weights.item_proj):
        o = dc.matmul(user_emb, w1)
        if item_embs is not None and item_embs.rows > 0:
            o = dc.add(o, dc.sum_rows(dc.matmul(item_embs, w2)))
        rows.append(o)
    return dc.concat_rows(rows)


def translate_intents(basket_emb: Tensor, o: Tensor,
                      basket_proj: Param) -> Tensor:
    """h[t] = basket_emb @ basket_proj + o[t], stacked as (T, d).

    Differences between intents equal differences between their relation
    vectors, so intent geometry encodes intent correlation.
    """
    base = dc.matmul(basket_emb, basket_proj)
    return dc.add(dc.repeat_rows(base, o.rows), o)


def attend(h: Tensor, context: Tensor, att: Param, slope: float = 0.2) -> Tensor:
    """(1, T) attention weights of the intents against one context row."""
    t = h.rows
    logits = [dc.leaky_relu(
        dc.matmul(dc.concat_cols([dc.gather_rows(h, [k]), context]), att), slope)
        for k in range(t)]
    return dc.softmax_rows(dc.concat_cols(logits))


def aggregate_basket(h: Tensor, gamma: Tensor, slope: float = 0.2) -> Tensor:
    """Next-layer basket embedding: sigma(gamma @ h) as a (1, d) row."""
    return dc.leaky_relu(dc.matmul(gamma, h), slope)


def type_guided(h: Tensor, alpha: Tensor, beta: Tensor,
                slope: float = 0.2) -> tuple[Tensor, Tensor]:
    """User-guided and item-guided basket embeddings for one basket."""
    return (dc.leaky_relu(dc.matmul(alpha, h), slope),
            dc.leaky_relu(dc.matmul(beta, h), slope))
