"""Predictive layer, BPR objective, optimization, and persistence.

Scores come from layer-concatenated representations: the candidate item
against the basket's owner plus the basket itself. Training samples
(basket, positive item, negative item) triples and minimizes the
pairwise logistic ranking loss with L2 regularization over every
trainable tensor, using Adam with bias correction.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import diffcore as dc
from . import evaluation
from .diffcore import Param, Tensor
from .errors import DataError, NumericError
from .graph import (BASKET, USER, BasketGraph, DataSplit, EntityId,
                    InteractionRecord, TestCase, build_graph)
from .intents import IntentLayerWeights
from .propagation import AdjacencyIndex, LayerState, forward

CHECKPOINT_MAGIC = b"MITG"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    """Hyperparameters and run controls for one training run."""

    dim: int = 64
    num_intents: int = 3
    num_layers: int = 3
    learning_rate: float = 5e-4
    reg_lambda: float = 1e-4
    dropout: float = 0.1
    leaky_slope: float = 0.2
    epochs: int = 100
    triples_per_epoch: Optional[int] = None   # default: one per train edge
    negatives_per_positive: int = 1
    seed: int = 0
    val_frac: float = 0.05
    val_holdout: float = 0.2
    eval_every: int = 5
    checkpoint_every: int = 20

    def validate(self) -> None:
        if self.dim < 1 or self.num_intents < 1 or self.num_layers < 0:
            raise ValueError("dim and num_intents must be >= 1, num_layers >= 0")
        if self.learning_rate <= 0 or self.epochs < 1:
            raise ValueError("learning_rate and epochs must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if not 0.0 <= self.val_frac < 1.0:
            raise ValueError("val_frac must be in [0, 1)")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")


class SampleTriple(NamedTuple):
    basket: int
    pos_item: int
    neg_item: int


@dataclass
class OptimizerState:
    """Adam moment accumulators, keyed by parameter name."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


@dataclass
class ModelParams:
    """All trainable tensors plus their optimizer state."""

    num_users: int
    num_baskets: int
    num_items: int
    dim: int
    num_intents: int
    num_layers: int
    leaky_slope: float
    dropout: float
    user_emb: Param
    item_emb: Param
    basket_emb: Param
    layers: list[IntentLayerWeights]
    opt: OptimizerState = field(default_factory=OptimizerState)

    @classmethod
    def initialize(cls, graph: BasketGraph, config: TrainConfig,
                   rng: Optional[np.random.Generator] = None) -> "ModelParams":
        """Random init: embeddings uniform in +-1/sqrt(d), projection
        matrices Xavier-uniform, attention vectors zero (uniform initial
        attention)."""
        if rng is None:
            rng = np.random.default_rng(config.seed)
        d = config.dim
        emb_lim = 1.0 / np.sqrt(d)
        w_lim = np.sqrt(6.0 / (2 * d))

        def emb(name, n):
            return Param(name, rng.uniform(-emb_lim, emb_lim, (n, d)))

        def mat(name):
            return Param(name, rng.uniform(-w_lim, w_lim, (d, d)))

        layers = []
        for l in range(config.num_layers):
            layers.append(IntentLayerWeights(
                basket_proj=mat(f"layer{l}.basket_proj"),
                user_proj=[mat(f"layer{l}.user_proj.h{t}")
                           for t in range(config.num_intents)],
                item_proj=[mat(f"layer{l}.item_proj.h{t}")
                           for t in range(config.num_intents)],
                att_basket=Param(f"layer{l}.att_basket", np.zeros((2 * d, 1))),
                att_user=Param(f"layer{l}.att_user", np.zeros((2 * d, 1))),
                att_item=Param(f"layer{l}.att_item", np.zeros((2 * d, 1))),
            ))
        params = cls(num_users=graph.num_users, num_baskets=graph.num_baskets,
                     num_items=graph.num_items, dim=d,
                     num_intents=config.num_intents, num_layers=config.num_layers,
                     leaky_slope=config.leaky_slope, dropout=config.dropout,
                     user_emb=emb("emb.user", graph.num_users),
                     item_emb=emb("emb.item", graph.num_items),
                     basket_emb=emb("emb.basket", graph.num_baskets),
                     layers=layers)
        names = [p.name for p in params.all_params()]
        assert len(names) == len(set(names)), "parameter names must be unique"
        return params

    def all_params(self) -> list[Param]:
        out = [self.user_emb, self.item_emb, self.basket_emb]
        for w in self.layers:
            out.extend(w.all_params())
        return out

    def zero_grads(self) -> None:
        for p in self.all_params():
            p.zero_grad()

    def snapshot_values(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.all_params()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for p in self.all_params():
            p.value[...] = values[p.name]


class Adam:
    """Adaptive-moment optimizer with bias correction; moments live on
    the model so checkpoints capture them."""

    def __init__(self, params: ModelParams, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        state = params.opt
        for p in params.all_params():
            if p.name not in state.m:
                state.m[p.name] = np.zeros_like(p.value)
                state.v[p.name] = np.zeros_like(p.value)

    def zero_grad(self) -> None:
        self.params.zero_grads()

    def step(self) -> None:
        state = self.params.opt
        state.step += 1
        t = state.step
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p in self.params.all_params():
            g = p.grad
            m = state.m[p.name]
            v = state.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# predictive layer


def final_matrices(states: list[LayerState]) -> tuple[Tensor, Tensor, Tensor]:
    """Layer-concatenated representations (users, items, baskets)."""
    u = dc.concat_cols([s.E_u for s in states])
    i = dc.concat_cols([s.E_i for s in states])
    b = dc.concat_cols([s.E_b for s in states])
    return u, i, b


def final_representation(states: list[LayerState], kind: str, index: int) -> Tensor:
    """One entity's concatenation of its embeddings across layers 0..L."""
    attr = {"user": "E_u", "item": "E_i", "basket": "E_b"}[kind]
    return dc.concat_cols([dc.gather_rows(getattr(s, attr), [index])
                           for s in states])


def predict_score(basket: int, item: int, states: list[LayerState],
                  graph: BasketGraph) -> Tensor:
    """Score of recommending the item to the basket: owner-item affinity
    plus basket-item affinity on the final representations."""
    owner = graph.basket_owner[basket]
    e_u = final_representation(states, "user", owner)
    e_b = final_representation(states, "basket", basket)
    e_i = final_representation(states, "item", item)
    return dc.add(dc.rowdot(e_u, e_i), dc.rowdot(e_b, e_i))


def sample_triples(graph: BasketGraph, count: int,
                   negatives_per_positive: int,
                   rng: np.random.Generator) -> list[SampleTriple]:
    """Uniformly sample baskets, a positive item from each, and rejection-
    sampled negatives outside the basket's train items."""
    if count < 1:
        raise ValueError("triple count must be positive")
    m = graph.num_items
    triples: list[SampleTriple] = []
    baskets = rng.integers(0, graph.num_baskets, size=count)
    for b in baskets:
        items = graph.basket_items[b]
        member = set(items)
        if len(member) >= m:
            raise DataError(f"basket {b} contains every item; cannot sample negatives")
        pos = items[rng.integers(0, len(items))]
        for _ in range(negatives_per_positive):
            neg = int(rng.integers(0, m))
            while neg in member:
                neg = int(rng.integers(0, m))
            triples.append(SampleTriple(int(b), int(pos), neg))
    return triples


def bpr_loss(triples: list[SampleTriple], states: list[LayerState],
             params: ModelParams, reg_lambda: float,
             graph: BasketGraph) -> Tensor:
    """Negative log-likelihood of positive-over-negative score margins
    under the logistic link, plus reg_lambda * sum of squared parameters.

    The logistic link here is deliberate: the ranking likelihood needs a
    (0, 1) output, unlike the LeakyReLU used inside the network.
    """
    if not triples:
        raise ValueError("bpr_loss needs at least one triple")
    u_star, i_star, b_star = final_matrices(states)
    b_idx = np.array([t.basket for t in triples], dtype=np.intp)
    owners = np.array([graph.basket_owner[t.basket] for t in triples], dtype=np.intp)
    pos_idx = np.array([t.pos_item for t in triples], dtype=np.intp)
    neg_idx = np.array([t.neg_item for t in triples], dtype=np.intp)

    context = dc.add(dc.gather_rows(u_star, owners), dc.gather_rows(b_star, b_idx))
    pos = dc.rowdot(context, dc.gather_rows(i_star, pos_idx))
    neg = dc.rowdot(context, dc.gather_rows(i_star, neg_idx))
    loss = dc.scale(dc.sum_all(dc.log_sigmoid(dc.sub(pos, neg))), -1.0)
    if reg_lambda > 0.0:
        reg = None
        for p in params.all_params():
            sq = dc.sum_all(dc.mul(p, p))
            reg = sq if reg is None else dc.add(reg, sq)
        loss = dc.add(loss, dc.scale(reg, reg_lambda))
    return loss


def transductive_scorer(params: ModelParams, graph: BasketGraph,
                        adj: Optional[AdjacencyIndex] = None) -> Callable[[TestCase], np.ndarray]:
    """Evaluation-mode scorer: case -> scores over all items."""
    states = forward(graph, params, mode="eval", adj=adj)
    u_star = np.hstack([s.E_u.value for s in states])
    i_star = np.hstack([s.E_i.value for s in states])
    b_star = np.hstack([s.E_b.value for s in states])

    def score(case: TestCase) -> np.ndarray:
        return i_star @ (u_star[case.user.index] + b_star[case.basket.index])

    return score


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    params: ModelParams
    epoch_losses: list[float]
    val_curve: list[tuple[int, float]]
    best_epoch: Optional[int]


def carve_validation(graph: BasketGraph, frac_baskets: float,
                     holdout_frac: float, seed: int) -> tuple[BasketGraph, list[TestCase]]:
    """Hold out items from a sample of baskets as a validation set,
    returning the reduced graph (same entity spaces) and the cases."""
    rng = np.random.default_rng(seed)
    eligible = [b for b in range(graph.num_baskets)
                if len(graph.basket_items[b]) >= 2]
    k = int(round(frac_baskets * graph.num_baskets))
    if not eligible or k < 1:
        return graph, []
    chosen = set(rng.choice(eligible, size=min(k, len(eligible)),
                            replace=False).tolist())

    records: list[InteractionRecord] = []
    cases: list[TestCase] = []
    for b in range(graph.num_baskets):
        items = graph.basket_items[b]
        u = graph.basket_owner[b]
        order = graph.basket_order[b]
        if b not in chosen:
            records.extend(InteractionRecord(u, b, i, order) for i in items)
            continue
        n = len(items)
        hold = min(math.ceil(holdout_frac * n), n - 1)
        held = set(rng.choice(items, size=hold, replace=False).tolist())
        train_items = [i for i in items if i not in held]
        records.extend(InteractionRecord(u, b, i, order) for i in train_items)
        cases.append(TestCase(basket=EntityId(BASKET, b), user=EntityId(USER, u),
                              seed_items=tuple(train_items),
                              ground_truth=tuple(sorted(held))))
    reduced = build_graph(records, num_users=graph.num_users,
                          num_baskets=graph.num_baskets,
                          num_items=graph.num_items, id_maps=graph.id_maps)
    return reduced, cases


def train(config: TrainConfig, split: DataSplit,
          checkpoint_dir=None,
          progress: Optional[Callable[[int, float], None]] = None) -> TrainResult:
    """Full training run on the split's train graph.

    Per epoch: train-mode forward, triple sampling, BPR loss, backward,
    Adam step. When val_frac > 0, a slice of baskets has items held out
    for validation and the best Recall@100 snapshot is restored at the
    end. A non-finite loss aborts with the last written checkpoint
    retained on disk.
    """
    config.validate()
    base_graph = split.train_graph
    rng = np.random.default_rng(config.seed)

    if config.val_frac > 0.0:
        graph, val_cases = carve_validation(base_graph, config.val_frac,
                                            config.val_holdout, config.seed)
    else:
        graph, val_cases = base_graph, []

    adj = AdjacencyIndex.from_graph(graph, warn=False)
    params = ModelParams.initialize(graph, config, rng)
    opt = Adam(params, config.learning_rate)
    count = config.triples_per_epoch or graph.num_edges

    losses: list[float] = []
    val_curve: list[tuple[int, float]] = []
    best_values: Optional[dict[str, np.ndarray]] = None
    best_recall = -1.0
    best_epoch: Optional[int] = None
    ckpt_path = None
    if checkpoint_dir is not None:
        os.makedirs(checkpoint_dir, exist_ok=True)
        ckpt_path = os.path.join(checkpoint_dir, "model.ckpt")

    for epoch in range(1, config.epochs + 1):
        try:
            states = forward(graph, params, mode="train", rng=rng, adj=adj)
            triples = sample_triples(graph, count,
                                     config.negatives_per_positive, rng)
            loss = bpr_loss(triples, states, params, config.reg_lambda, graph)
        except NumericError as exc:
            kept = f"; last checkpoint kept at {ckpt_path}" if ckpt_path else ""
            raise NumericError(f"aborted at epoch {epoch}: {exc}{kept}") from None
        loss_val = float(loss.value[0, 0])
        opt.zero_grad()
        dc.backward(loss)
        opt.step()
        losses.append(loss_val)
        if progress is not None:
            progress(epoch, loss_val)

        if val_cases and (epoch % config.eval_every == 0 or epoch == config.epochs):
            score = transductive_scorer(params, graph, adj=adj)
            report = evaluation.evaluate_cases(val_cases, score, (100,))
            recall = report.recall[100]
            val_curve.append((epoch, recall))
            if recall > best_recall:
                best_recall = recall
                best_values = params.snapshot_values()
                best_epoch = epoch
        if ckpt_path and epoch % config.checkpoint_every == 0:
            save_checkpoint(params, ckpt_path)

    if best_values is not None:
        params.load_values(best_values)
    if ckpt_path:
        save_checkpoint(params, ckpt_path)
    return TrainResult(params=params, epoch_losses=losses,
                       val_curve=val_curve, best_epoch=best_epoch)


# ---------------------------------------------------------------------------
# matrix-factorization reference baseline


@dataclass
class BprMfModel:
    """Plain BPR matrix factorization: user and item embeddings only.

    Positives are the union of each user's basket items; at evaluation a
    basket is scored with its owner's embedding, so the model never sees
    basket identity or seed items.
    """

    user_emb: Param
    item_emb: Param

    def scorer(self) -> Callable[[TestCase], np.ndarray]:
        def score(case: TestCase) -> np.ndarray:
            return self.item_emb.value @ self.user_emb.value[case.user.index]
        return score


def bprmf_baseline(config: TrainConfig, split: DataSplit,
                   progress: Optional[Callable[[int, float], None]] = None) -> BprMfModel:
    """Train the matrix-factorization reference on merged user-item pairs."""
    config.validate()
    graph = split.train_graph
    rng = np.random.default_rng(config.seed)
    d = config.dim
    lim = 1.0 / np.sqrt(d)
    model = BprMfModel(
        user_emb=Param("mf.user", rng.uniform(-lim, lim, (graph.num_users, d))),
        item_emb=Param("mf.item", rng.uniform(-lim, lim, (graph.num_items, d))))

    users_with_items = [u for u in range(graph.num_users) if graph.user_items[u]]
    if not users_with_items:
        raise DataError("no user has any items to train on")
    m = graph.num_items
    count = config.triples_per_epoch or graph.num_edges

    opt_state = OptimizerState()
    for p in (model.user_emb, model.item_emb):
        opt_state.m[p.name] = np.zeros_like(p.value)
        opt_state.v[p.name] = np.zeros_like(p.value)

    for epoch in range(1, config.epochs + 1):
        u_idx = np.empty(count, dtype=np.intp)
        p_idx = np.empty(count, dtype=np.intp)
        n_idx = np.empty(count, dtype=np.intp)
        pick = rng.integers(0, len(users_with_items), size=count)
        for k in range(count):
            u = users_with_items[pick[k]]
            items = graph.user_items[u]
            member = set(items)
            pos = items[rng.integers(0, len(items))]
            neg = int(rng.integers(0, m))
            while neg in member:
                neg = int(rng.integers(0, m))
            u_idx[k], p_idx[k], n_idx[k] = u, pos, neg

        ue = dc.gather_rows(model.user_emb, u_idx)
        pos = dc.rowdot(ue, dc.gather_rows(model.item_emb, p_idx))
        neg = dc.rowdot(ue, dc.gather_rows(model.item_emb, n_idx))
        loss = dc.scale(dc.sum_all(dc.log_sigmoid(dc.sub(pos, neg))), -1.0)
        if config.reg_lambda > 0.0:
            reg = dc.add(dc.sum_all(dc.mul(model.user_emb, model.user_emb)),
                         dc.sum_all(dc.mul(model.item_emb, model.item_emb)))
            loss = dc.add(loss, dc.scale(reg, config.reg_lambda))
        model.user_emb.zero_grad()
        model.item_emb.zero_grad()
        dc.backward(loss)

        opt_state.step += 1
        t = opt_state.step
        c1 = 1.0 - 0.9 ** t
        c2 = 1.0 - 0.999 ** t
        for p in (model.user_emb, model.item_emb):
            mm = opt_state.m[p.name]
            vv = opt_state.v[p.name]
            mm *= 0.9
            mm += 0.1 * p.grad
            vv *= 0.999
            vv += 0.001 * p.grad * p.grad
            p.value -= config.learning_rate * (mm / c1) / (np.sqrt(vv / c2) + 1e-8)
        if progress is not None:
            progress(epoch, float(loss.value[0, 0]))
    return model


# ---------------------------------------------------------------------------
# checkpoints


def _pack_section(name: str, arr: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    head = struct.pack("<I", len(encoded)) + encoded
    head += struct.pack("<QQ", arr.shape[0], arr.shape[1])
    return head + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_checkpoint(params: ModelParams, path) -> None:
    """Binary checkpoint: magic, version, size header, named sections of
    little-endian float64 matrices (weights, hyperparameters, optimizer
    moments). Round-trips bit-exactly."""
    sections: list[tuple[str, np.ndarray]] = []
    for p in params.all_params():
        sections.append((p.name, p.value))
    sections.append(("hyper.leaky_slope", np.array([[params.leaky_slope]])))
    sections.append(("hyper.dropout", np.array([[params.dropout]])))
    sections.append(("adam.step", np.array([[float(params.opt.step)]])))
    for name in sorted(params.opt.m):
        sections.append((f"adam.m.{name}", params.opt.m[name]))
        sections.append((f"adam.v.{name}", params.opt.v[name]))

    blob = CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += struct.pack("<6Q", params.num_users, params.num_baskets,
                        params.num_items, params.dim, params.num_intents,
                        params.num_layers)
    blob += struct.pack("<I", len(sections))
    for name, arr in sections:
        blob += _pack_section(name, arr)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_checkpoint(path) -> ModelParams:
    """Rebuild ModelParams from a checkpoint, rejecting unknown formats,
    version mismatches, and shape mismatches with explicit errors."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"{path} is not a model checkpoint (bad magic)")
    ofs = 4
    (version,) = struct.unpack_from("<I", blob, ofs)
    ofs += 4
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    n, s, m, d, t, l = struct.unpack_from("<6Q", blob, ofs)
    ofs += 48
    (num_sections,) = struct.unpack_from("<I", blob, ofs)
    ofs += 4

    arrays: dict[str, np.ndarray] = {}
    for _ in range(num_sections):
        (name_len,) = struct.unpack_from("<I", blob, ofs)
        ofs += 4
        name = blob[ofs:ofs + name_len].decode("utf-8")
        ofs += name_len
        rows, cols = struct.unpack_from("<QQ", blob, ofs)
        ofs += 16
        nbytes = rows * cols * 8
        arr = np.frombuffer(blob, dtype="<f8", count=rows * cols,
                            offset=ofs).reshape(rows, cols).copy()
        ofs += nbytes
        arrays[name] = arr
    if ofs != len(blob):
        raise DataError(f"{path} has {len(blob) - ofs} trailing bytes")

    def take(name, shape):
        if name not in arrays:
            raise DataError(f"checkpoint missing section {name!r}")
        arr = arrays.pop(name)
        if arr.shape != shape:
            raise DataError(f"section {name!r} has shape {arr.shape}, "
                            f"expected {shape}")
        return arr

    slope = float(take("hyper.leaky_slope", (1, 1))[0, 0])
    dropout = float(take("hyper.dropout", (1, 1))[0, 0])
    layers = []
    for li in range(l):
        layers.append(IntentLayerWeights(
            basket_proj=Param(f"layer{li}.basket_proj",
                              take(f"layer{li}.basket_proj", (d, d))),
            user_proj=[Param(f"layer{li}.user_proj.h{ti}",
                             take(f"layer{li}.user_proj.h{ti}", (d, d)))
                       for ti in range(t)],
            item_proj=[Param(f"layer{li}.item_proj.h{ti}",
                             take(f"layer{li}.item_proj.h{ti}", (d, d)))
                       for ti in range(t)],
            att_basket=Param(f"layer{li}.att_basket",
                             take(f"layer{li}.att_basket", (2 * d, 1))),
            att_user=Param(f"layer{li}.att_user",
                           take(f"layer{li}.att_user", (2 * d, 1))),
            att_item=Param(f"layer{li}.att_item",
                           take(f"layer{li}.att_item", (2 * d, 1))),
        ))
    params = ModelParams(
        num_users=n, num_baskets=s, num_items=m, dim=d,
        num_intents=t, num_layers=l, leaky_slope=slope, dropout=dropout,
        user_emb=Param("emb.user", take("emb.user", (n, d))),
        item_emb=Param("emb.item", take("emb.item", (m, d))),
        basket_emb=Param("emb.basket", take("emb.basket", (s, d))),
        layers=layers)

    opt = params.opt
    opt.step = int(take("adam.step", (1, 1))[0, 0])
    for p in params.all_params():
        opt.m[p.name] = take(f"adam.m.{p.name}", p.value.shape)
        opt.v[p.name] = take(f"adam.v.{p.name}", p.value.shape)
    if arrays:
        raise DataError(f"checkpoint has unexpected sections: {sorted(arrays)}")
    return params


# ---------------------------------------------------------------------------
# gradient checking support


def make_gradcheck_problem(num_users: int = 3, num_baskets: int = 4,
                           num_items: int = 8, dim: int = 4,
                           num_intents: int = 2, num_layers: int = 2,
                           seed: int = 11,
                           reg_lambda: float = 0.01):
    """A small random model and deterministic loss closure for finite-
    difference validation. Attention vectors are randomized so no
    activation sits on the LeakyReLU kink."""
    from .synth import random_graph

    graph = random_graph(num_users, num_baskets, num_items,
                         items_per_basket=(2, 3), seed=seed)
    config = TrainConfig(dim=dim, num_intents=num_intents,
                         num_layers=num_layers, reg_lambda=reg_lambda,
                         dropout=0.0, seed=seed, val_frac=0.0)
    rng = np.random.default_rng(seed + 1)
    params = ModelParams.initialize(graph, config, rng)
    for w in params.layers:
        for att in (w.att_basket, w.att_user, w.att_item):
            att.value[...] = rng.uniform(-0.8, 0.8, att.value.shape)
    triples = sample_triples(graph, 3 * graph.num_baskets, 1, rng)
    adj = AdjacencyIndex.from_graph(graph, warn=False)

    def loss_fn():
        states = forward(graph, params, mode="eval", adj=adj)
        return bpr_loss(triples, states, params, reg_lambda, graph)

    return graph, params, loss_fn


def run_gradient_check(step: float = 1e-5, **problem_kwargs) -> dict[str, float]:
    """Finite-difference report for the full model loss, per parameter."""
    _, params, loss_fn = make_gradcheck_problem(**problem_kwargs)
    return dc.finite_difference_check(loss_fn, params.all_params(), step=step)
