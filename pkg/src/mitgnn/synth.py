"""Planted-intent synthetic datasets and intent-recovery diagnostics.

Items are partitioned into disjoint intent blocks (plus an optional
noise pool); each basket draws a few intents and fills itself from their
blocks, with a small fraction of items replaced by uniform noise. The
hidden labels never reach the model; they exist so tests can ask whether
learned intents line up with the planted structure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graph import BasketGraph, IdMaps, InteractionRecord, build_graph
from .propagation import LayerState


@dataclass
class SynthSpec:
    """Generator knobs. Defaults are the desk-scale acceptance setup."""

    num_users: int = 50
    num_items: int = 300
    num_intents: int = 3
    items_per_intent: int = 100
    baskets_per_user: int = 8
    intents_per_basket: tuple[int, int] = (2, 2)
    items_per_basket: tuple[int, int] = (12, 20)
    noise_rate: float = 0.05
    seed: int = 7

    def validate(self) -> None:
        if min(self.num_users, self.num_items, self.num_intents,
               self.items_per_intent, self.baskets_per_user) < 1:
            raise ValueError("all counts must be positive")
        if self.num_intents * self.items_per_intent > self.num_items:
            raise ValueError("intent blocks exceed the item universe")
        lo, hi = self.intents_per_basket
        if not 1 <= lo <= hi <= self.num_intents:
            raise ValueError("bad intents_per_basket range")
        ilo, ihi = self.items_per_basket
        if not 1 <= ilo <= ihi:
            raise ValueError("bad items_per_basket range")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ValueError("noise_rate must be in [0, 1)")


@dataclass
class SynthLabels:
    """Hidden ground truth: block per item (-1 for the noise pool),
    drawn intents per basket, and how many items noise replaced."""

    item_intent: list[int]
    basket_intents: list[tuple[int, ...]]
    basket_noise: list[int]


def generate(spec: SynthSpec) -> tuple[list[InteractionRecord], SynthLabels]:
    """Build interaction records with planted intent structure."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    block = spec.items_per_intent
    item_intent = [-1] * spec.num_items
    for g in range(spec.num_intents):
        for i in range(g * block, (g + 1) * block):
            item_intent[i] = g

    records: list[InteractionRecord] = []
    basket_intents: list[tuple[int, ...]] = []
    basket_noise: list[int] = []
    basket = 0
    ilo, ihi = spec.intents_per_basket
    slo, shi = spec.items_per_basket
    for user in range(spec.num_users):
        for position in range(spec.baskets_per_user):
            k = int(rng.integers(ilo, ihi + 1))
            drawn = tuple(sorted(rng.choice(spec.num_intents, size=k,
                                            replace=False).tolist()))
            size = int(rng.integers(slo, shi + 1))
            size = min(size, k * block)
            chosen: set[int] = set()
            while len(chosen) < size:
                g = drawn[int(rng.integers(0, k))]
                chosen.add(int(g * block + rng.integers(0, block)))

            items = sorted(chosen)
            noise = 0
            for idx in range(len(items)):
                if rng.random() < spec.noise_rate:
                    current = set(items)
                    repl = int(rng.integers(0, spec.num_items))
                    while repl in current:
                        repl = int(rng.integers(0, spec.num_items))
                    items[idx] = repl
                    noise += 1
            for i in sorted(items):
                records.append(InteractionRecord(user, basket, i, position))
            basket_intents.append(drawn)
            basket_noise.append(noise)
            basket += 1

    labels = SynthLabels(item_intent=item_intent,
                         basket_intents=basket_intents,
                         basket_noise=basket_noise)
    return records, labels


def synth_graph(spec: SynthSpec) -> tuple[BasketGraph, SynthLabels]:
    records, labels = generate(spec)
    graph = build_graph(records, num_users=spec.num_users,
                        num_items=spec.num_items)
    return graph, labels


def write_dataset(records: list[InteractionRecord], labels: SynthLabels,
                  csv_path, labels_path) -> None:
    """Emit the standard interaction CSV plus the item-label sidecar."""
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "basket_id", "item_id", "order"])
        for r in records:
            writer.writerow([f"u{r.user}", f"b{r.basket}", f"i{r.item}", r.order])
    with open(labels_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "intent_label"])
        for i, g in enumerate(labels.item_intent):
            writer.writerow([f"i{i}", g])


def random_graph(num_users: int, num_baskets: int, num_items: int,
                 items_per_basket: tuple[int, int] = (2, 4),
                 seed: int = 0) -> BasketGraph:
    """Small random tripartite graph without planted structure, for
    gradient checks and property tests. Every user owns at least one
    basket when num_baskets >= num_users."""
    rng = np.random.default_rng(seed)
    lo, hi = items_per_basket
    records = []
    for b in range(num_baskets):
        u = b % num_users if num_baskets >= num_users else int(rng.integers(0, num_users))
        size = int(rng.integers(lo, min(hi, num_items) + 1))
        items = rng.choice(num_items, size=size, replace=False)
        for i in sorted(items.tolist()):
            records.append(InteractionRecord(u, b, i, b))
    return build_graph(records, num_users=num_users, num_baskets=num_baskets,
                       num_items=num_items)


# ---------------------------------------------------------------------------
# diagnostics


def separation_ratio(item_vectors: np.ndarray,
                     intent_vectors: np.ndarray,
                     member_items: list[int]) -> Optional[float]:
    """Between/within distance ratio for one basket.

    Each member item is assigned to its nearest intent vector; the ratio
    compares mean pairwise item distance across assignments against the
    mean within the same assignment. None when the basket lacks either
    kind of pair.
    """
    if len(member_items) < 2:
        return None
    vecs = item_vectors[member_items]
    dists = np.linalg.norm(vecs[:, None, :] - intent_vectors[None, :, :], axis=2)
    assign = dists.argmin(axis=1)

    within, between = [], []
    n = len(member_items)
    for a in range(n):
        for b in range(a + 1, n):
            d = float(np.linalg.norm(vecs[a] - vecs[b]))
            (within if assign[a] == assign[b] else between).append(d)
    if not within or not between:
        return None
    w = float(np.mean(within))
    return float(np.mean(between)) / max(w, 1e-12)


def intent_separation(states: list[LayerState], graph: BasketGraph,
                      labels: Optional[SynthLabels] = None,
                      layer: Optional[int] = None) -> float:
    """Mean between/within ratio over all baskets with usable pairs.

    Values above 1 mean items sharing a learned intent sit closer
    together than items split across intents. Noise-pool items (label
    -1) are ignored when labels are given.
    """
    intent_layers = [i for i, s in enumerate(states) if s.intent_h is not None]
    if not intent_layers:
        raise ValueError("states carry no intent snapshots; run a forward pass "
                         "with at least one layer")
    l = intent_layers[-1] if layer is None else layer
    state = states[l]
    if state.intent_h is None:
        raise ValueError(f"layer {l} has no intent snapshot")
    item_vectors = state.E_i.value

    ratios = []
    for b in range(graph.num_baskets):
        items = graph.basket_items[b]
        if labels is not None:
            items = [i for i in items if labels.item_intent[i] >= 0]
        intent_vecs = np.stack([h[b] for h in state.intent_h])
        r = separation_ratio(item_vectors, intent_vecs, items)
        if r is not None:
            ratios.append(r)
    if not ratios:
        raise ValueError("no basket produced both within- and between-intent pairs")
    return float(np.mean(ratios))
