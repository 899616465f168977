"""Tripartite user/basket/item graph: ingestion, validation, splitting.

The graph holds three node kinds with dense indices per kind. User-item
edges are always derived as the projection of user-basket and basket-item
edges, never ingested, so the projection invariant holds by construction.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import DataError

USER = "user"
BASKET = "basket"
ITEM = "item"
_KINDS = (USER, BASKET, ITEM)

TRANSDUCTIVE = "transductive"
INDUCTIVE = "inductive"


@dataclass(frozen=True)
class EntityId:
    """A typed node reference: kind plus dense index within that kind."""

    kind: str
    index: int

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown entity kind {self.kind!r}")
        if self.index < 0:
            raise ValueError(f"negative entity index {self.index}")


class InteractionRecord(NamedTuple):
    """One deduplicated (user, basket, item) purchase, dense indices.

    order is the basket's recency rank for its user (higher = more
    recent) or None when the source data has no ordering column.
    """

    user: int
    basket: int
    item: int
    order: Optional[int] = None


@dataclass
class IdMaps:
    """External-id tables per kind, index-aligned with the dense ids."""

    users: list[str]
    baskets: list[str]
    items: list[str]
    user_index: dict[str, int] = field(init=False, repr=False)
    basket_index: dict[str, int] = field(init=False, repr=False)
    item_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.user_index = {e: i for i, e in enumerate(self.users)}
        self.basket_index = {e: i for i, e in enumerate(self.baskets)}
        self.item_index = {e: i for i, e in enumerate(self.items)}


def _canonical_maps(num_users: int, num_baskets: int, num_items: int) -> IdMaps:
    return IdMaps(users=[f"u{i}" for i in range(num_users)],
                  baskets=[f"b{i}" for i in range(num_baskets)],
                  items=[f"i{i}" for i in range(num_items)])


@dataclass
class BasketGraph:
    """Immutable tripartite graph with adjacency in both directions.

    Neighbor lists are sorted by index and duplicate-free. basket_owner
    maps each basket to its single user. Build through build_graph only.
    """

    num_users: int
    num_baskets: int
    num_items: int
    basket_owner: list[int]
    basket_items: list[list[int]]
    basket_order: list[Optional[int]]
    user_baskets: list[list[int]]
    user_items: list[list[int]]
    item_baskets: list[list[int]]
    item_users: list[list[int]]
    id_maps: IdMaps

    @property
    def num_edges(self) -> int:
        """Basket-item interaction count (the dataset's edge statistic)."""
        return sum(len(items) for items in self.basket_items)

    def density(self) -> float:
        """Interactions over squared total node count."""
        nodes = self.num_users + self.num_baskets + self.num_items
        return self.num_edges / float(nodes * nodes)

    def records(self) -> list[InteractionRecord]:
        out = []
        for b, items in enumerate(self.basket_items):
            u = self.basket_owner[b]
            order = self.basket_order[b]
            for i in items:
                out.append(InteractionRecord(u, b, i, order))
        return out

    def has_order(self) -> bool:
        return all(o is not None for o in self.basket_order)

    def validate(self) -> None:
        """Assert every structural invariant; raises DataError on violation."""
        if len(self.basket_owner) != self.num_baskets:
            raise DataError("basket_owner length mismatch")
        for b in range(self.num_baskets):
            u = self.basket_owner[b]
            if not 0 <= u < self.num_users:
                raise DataError(f"basket {b} owner {u} out of range")
            items = self.basket_items[b]
            if not items:
                raise DataError(f"basket {b} has no items")
            if items != sorted(set(items)):
                raise DataError(f"basket {b} item list not sorted/unique")
            if b not in self.user_baskets[u]:
                raise DataError(f"basket {b} missing from owner adjacency")
        for adj, n, label in ((self.user_baskets, self.num_users, "user_baskets"),
                              (self.user_items, self.num_users, "user_items"),
                              (self.item_baskets, self.num_items, "item_baskets"),
                              (self.item_users, self.num_items, "item_users")):
            if len(adj) != n:
                raise DataError(f"{label} length mismatch")
            for lst in adj:
                if lst != sorted(set(lst)):
                    raise DataError(f"{label} list not sorted/unique")
        # user-item edges must be exactly the projection of the two hops
        for u in range(self.num_users):
            projected = set()
            for b in self.user_baskets[u]:
                projected.update(self.basket_items[b])
            if sorted(projected) != self.user_items[u]:
                raise DataError(f"user {u} item projection mismatch")
        if (len(self.id_maps.users) != self.num_users
                or len(self.id_maps.baskets) != self.num_baskets
                or len(self.id_maps.items) != self.num_items):
            raise DataError("id map sizes do not match node counts")


class TestCase(NamedTuple):
    """One held-out basket: items visible at inference plus ground truth."""

    basket: EntityId
    user: EntityId
    seed_items: tuple[int, ...]
    ground_truth: tuple[int, ...]


@dataclass
class DataSplit:
    """Train graph plus test cases under one of the two protocols.

    Transductive test baskets keep their train-graph index; inductive
    test baskets are removed from the train graph (whose baskets are
    re-indexed densely), so their EntityId refers to the source graph and
    source_id_maps carries the external ids for every original entity.
    """

    mode: str
    train_graph: BasketGraph
    test_cases: list[TestCase]
    source_id_maps: IdMaps


# ---------------------------------------------------------------------------
# ingestion


def load_interactions(path, *, order_column: str = "order") -> tuple[list[InteractionRecord], IdMaps]:
    """Read a UTF-8 CSV with header user_id,basket_id,item_id[,order].

    External ids are opaque strings remapped to dense indices in first
    appearance order. Rows duplicating a (basket, item) pair collapse to
    one record. A basket appearing under two users is an integrity error.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in ("user_id", "basket_id", "item_id"):
            if col not in header:
                raise DataError(f"missing column {col!r} in {path}")
        has_order = order_column in header

        users: list[str] = []
        baskets: list[str] = []
        items: list[str] = []
        user_idx: dict[str, int] = {}
        basket_idx: dict[str, int] = {}
        item_idx: dict[str, int] = {}
        basket_user: dict[int, int] = {}
        basket_order: dict[int, Optional[int]] = {}
        seen: set[tuple[int, int]] = set()
        records: list[InteractionRecord] = []

        for row in reader:
            u_ext, b_ext, i_ext = row["user_id"], row["basket_id"], row["item_id"]
            u = user_idx.setdefault(u_ext, len(users))
            if u == len(users):
                users.append(u_ext)
            b = basket_idx.setdefault(b_ext, len(baskets))
            if b == len(baskets):
                baskets.append(b_ext)
            i = item_idx.setdefault(i_ext, len(items))
            if i == len(items):
                items.append(i_ext)

            if b in basket_user:
                if basket_user[b] != u:
                    raise DataError(f"basket {b_ext!r} appears under two users")
            else:
                basket_user[b] = u
                if has_order and row[order_column] not in (None, ""):
                    try:
                        val = int(row[order_column])
                    except ValueError:
                        raise DataError(f"non-integer order {row[order_column]!r} "
                                        f"for basket {b_ext!r}") from None
                    if val < 0:
                        raise DataError(f"negative order for basket {b_ext!r}")
                    basket_order[b] = val
                else:
                    basket_order[b] = None

            if (b, i) in seen:
                continue
            seen.add((b, i))
            records.append(InteractionRecord(u, b, i, basket_order[b]))

    return records, IdMaps(users=users, baskets=baskets, items=items)


def filter_records(records: list[InteractionRecord], id_maps: IdMaps,
                   min_items_per_basket: int = 30,
                   min_baskets_per_user: int = 5) -> tuple[list[InteractionRecord], IdMaps]:
    """Drop small baskets, then users with too few remaining baskets.

    Surviving entities are re-indexed densely, preserving relative order.
    """
    basket_sizes: dict[int, int] = {}
    for r in records:
        basket_sizes[r.basket] = basket_sizes.get(r.basket, 0) + 1
    keep_basket = {b for b, n in basket_sizes.items() if n >= min_items_per_basket}

    user_counts: dict[int, int] = {}
    counted: set[int] = set()
    for r in records:
        if r.basket in keep_basket and r.basket not in counted:
            counted.add(r.basket)
            user_counts[r.user] = user_counts.get(r.user, 0) + 1
    keep_user = {u for u, n in user_counts.items() if n >= min_baskets_per_user}

    kept = [r for r in records
            if r.basket in keep_basket and r.user in keep_user]
    if not kept:
        raise DataError("filtering removed every record")

    new_user: dict[int, int] = {}
    new_basket: dict[int, int] = {}
    new_item: dict[int, int] = {}
    out: list[InteractionRecord] = []
    for r in kept:
        u = new_user.setdefault(r.user, len(new_user))
        b = new_basket.setdefault(r.basket, len(new_basket))
        i = new_item.setdefault(r.item, len(new_item))
        out.append(InteractionRecord(u, b, i, r.order))

    maps = IdMaps(users=[id_maps.users[old] for old in new_user],
                  baskets=[id_maps.baskets[old] for old in new_basket],
                  items=[id_maps.items[old] for old in new_item])
    return out, maps


def build_graph(records: list[InteractionRecord], *,
                num_users: Optional[int] = None,
                num_baskets: Optional[int] = None,
                num_items: Optional[int] = None,
                id_maps: Optional[IdMaps] = None) -> BasketGraph:
    """Assemble a validated BasketGraph from interaction records.

    Counts default to max index + 1; pass them explicitly to keep entity
    spaces that contain nodes isolated in these records.
    """
    if not records:
        raise DataError("no interaction records")

    n = num_users if num_users is not None else max(r.user for r in records) + 1
    s = num_baskets if num_baskets is not None else max(r.basket for r in records) + 1
    m = num_items if num_items is not None else max(r.item for r in records) + 1

    owner = [-1] * s
    order: list[Optional[int]] = [None] * s
    items_per_basket: list[set[int]] = [set() for _ in range(s)]
    for r in records:
        if not (0 <= r.user < n and 0 <= r.basket < s and 0 <= r.item < m):
            raise DataError(f"record index out of range: {r}")
        if owner[r.basket] == -1:
            owner[r.basket] = r.user
            order[r.basket] = r.order
        elif owner[r.basket] != r.user:
            ext = id_maps.baskets[r.basket] if id_maps else str(r.basket)
            raise DataError(f"basket {ext!r} appears under two users")
        items_per_basket[r.basket].add(r.item)

    if any(o == -1 for o in owner):
        missing = [b for b, o in enumerate(owner) if o == -1]
        raise DataError(f"baskets without records: {missing[:5]}")

    basket_items = [sorted(it) for it in items_per_basket]
    user_baskets: list[list[int]] = [[] for _ in range(n)]
    user_item_sets: list[set[int]] = [set() for _ in range(n)]
    item_baskets: list[list[int]] = [[] for _ in range(m)]
    item_user_sets: list[set[int]] = [set() for _ in range(m)]
    for b in range(s):
        u = owner[b]
        user_baskets[u].append(b)
        for i in basket_items[b]:
            user_item_sets[u].add(i)
            item_baskets[i].append(b)
            item_user_sets[i].add(u)

    graph = BasketGraph(
        num_users=n, num_baskets=s, num_items=m,
        basket_owner=owner,
        basket_items=basket_items,
        basket_order=order,
        user_baskets=user_baskets,
        user_items=[sorted(x) for x in user_item_sets],
        item_baskets=item_baskets,
        item_users=[sorted(x) for x in item_user_sets],
        id_maps=id_maps if id_maps is not None else _canonical_maps(n, s, m),
    )
    return graph


# ---------------------------------------------------------------------------
# splitting


def split_transductive(graph: BasketGraph, holdout_frac: float = 0.2,
                       seed: int = 0) -> DataSplit:
    """Hold out ceil(holdout_frac * size) items per basket as ground truth.

    Baskets with a single item are skipped (kept whole in train). At least
    one item always stays in train, even when the ceiling would empty the
    basket.
    """
    if not 0.0 < holdout_frac < 1.0:
        raise ValueError(f"holdout_frac must be in (0, 1), got {holdout_frac}")
    rng = np.random.default_rng(seed)
    kept_records: list[InteractionRecord] = []
    cases: list[TestCase] = []

    for b in range(graph.num_baskets):
        u = graph.basket_owner[b]
        order = graph.basket_order[b]
        items = graph.basket_items[b]
        n = len(items)
        if n < 2:
            kept_records.extend(InteractionRecord(u, b, i, order) for i in items)
            continue
        k = math.ceil(holdout_frac * n)
        if k >= n:
            ext = graph.id_maps.baskets[b]
            warnings.warn(f"holdout would empty basket {ext!r}; keeping one train item")
            k = n - 1
        held = set(rng.choice(items, size=k, replace=False).tolist())
        train_items = [i for i in items if i not in held]
        kept_records.extend(InteractionRecord(u, b, i, order) for i in train_items)
        cases.append(TestCase(basket=EntityId(BASKET, b), user=EntityId(USER, u),
                              seed_items=tuple(train_items),
                              ground_truth=tuple(sorted(held))))

    train_graph = build_graph(kept_records,
                              num_users=graph.num_users,
                              num_baskets=graph.num_baskets,
                              num_items=graph.num_items,
                              id_maps=graph.id_maps)
    return DataSplit(mode=TRANSDUCTIVE, train_graph=train_graph,
                     test_cases=cases, source_id_maps=graph.id_maps)


def split_inductive(graph: BasketGraph, seed_count: int = 5,
                    seed: int = 0) -> DataSplit:
    """Remove each user's most recent qualifying basket for testing.

    A basket qualifies when it holds more than seed_count items; recency
    comes from the order column when every basket has one, else from the
    basket index. Users with a single basket contribute no test case.
    seed_count items are sampled as the cold basket's visible items, the
    rest become ground truth.
    """
    if seed_count < 1:
        raise ValueError(f"seed_count must be positive, got {seed_count}")
    rng = np.random.default_rng(seed)
    use_order = graph.has_order()
    removed: set[int] = set()
    cases: list[TestCase] = []
    single_basket_users = 0

    for u in range(graph.num_users):
        baskets = graph.user_baskets[u]
        qualifying = [b for b in baskets if len(graph.basket_items[b]) > seed_count]
        if not qualifying:
            continue
        if len(baskets) < 2:
            single_basket_users += 1
            continue
        key = (lambda b: (graph.basket_order[b], b)) if use_order else (lambda b: b)
        target = max(qualifying, key=key)
        items = graph.basket_items[target]
        seeds = sorted(rng.choice(items, size=seed_count, replace=False).tolist())
        truth = [i for i in items if i not in set(seeds)]
        removed.add(target)
        cases.append(TestCase(basket=EntityId(BASKET, target),
                              user=EntityId(USER, u),
                              seed_items=tuple(seeds),
                              ground_truth=tuple(truth)))

    if single_basket_users:
        warnings.warn(f"{single_basket_users} single-basket users excluded "
                      f"from the inductive test set")

    # surviving baskets are re-indexed densely; users and items keep
    # their full index spaces even if left isolated
    new_basket_index: dict[int, int] = {}
    kept_records: list[InteractionRecord] = []
    kept_basket_ids: list[str] = []
    for b in range(graph.num_baskets):
        if b in removed:
            continue
        nb = len(new_basket_index)
        new_basket_index[b] = nb
        kept_basket_ids.append(graph.id_maps.baskets[b])
        u = graph.basket_owner[b]
        order = graph.basket_order[b]
        kept_records.extend(InteractionRecord(u, nb, i, order)
                            for i in graph.basket_items[b])

    train_maps = IdMaps(users=list(graph.id_maps.users),
                        baskets=kept_basket_ids,
                        items=list(graph.id_maps.items))
    train_graph = build_graph(kept_records,
                              num_users=graph.num_users,
                              num_baskets=len(kept_basket_ids),
                              num_items=graph.num_items,
                              id_maps=train_maps)
    return DataSplit(mode=INDUCTIVE, train_graph=train_graph,
                     test_cases=cases, source_id_maps=graph.id_maps)


# ---------------------------------------------------------------------------
# serialization


def write_split(split: DataSplit, path) -> None:
    """One test case per line:
    basket_ext<TAB>user_ext<TAB>seed_items(comma)<TAB>truth_items(comma)."""
    maps = split.source_id_maps
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for case in split.test_cases:
            seeds = ",".join(maps.items[i] for i in case.seed_items)
            truth = ",".join(maps.items[i] for i in case.ground_truth)
            fh.write(f"{maps.baskets[case.basket.index]}\t"
                     f"{maps.users[case.user.index]}\t{seeds}\t{truth}\n")


def read_split_cases(path, id_maps: IdMaps) -> list[TestCase]:
    """Parse a split file back into test cases against the given id maps."""
    cases: list[TestCase] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 tab-separated fields")
            b_ext, u_ext, seeds, truth = parts
            if b_ext not in id_maps.basket_index:
                raise DataError(f"{path}:{lineno}: unknown basket {b_ext!r}")
            if u_ext not in id_maps.user_index:
                raise DataError(f"{path}:{lineno}: unknown user {u_ext!r}")
            def items_of(txt):
                if not txt:
                    return ()
                out = []
                for ext in txt.split(","):
                    if ext not in id_maps.item_index:
                        raise DataError(f"{path}:{lineno}: unknown item {ext!r}")
                    out.append(id_maps.item_index[ext])
                return tuple(out)
            cases.append(TestCase(basket=EntityId(BASKET, id_maps.basket_index[b_ext]),
                                  user=EntityId(USER, id_maps.user_index[u_ext]),
                                  seed_items=items_of(seeds),
                                  ground_truth=items_of(truth)))
    return cases


def save_graph(graph: BasketGraph, path) -> None:
    payload = {
        "version": 1,
        "num_users": graph.num_users,
        "num_items": graph.num_items,
        "baskets": [
            {"owner": graph.basket_owner[b],
             "items": graph.basket_items[b],
             "order": graph.basket_order[b]}
            for b in range(graph.num_baskets)
        ],
        "id_maps": {"users": graph.id_maps.users,
                    "baskets": graph.id_maps.baskets,
                    "items": graph.id_maps.items},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))


def load_graph(path) -> BasketGraph:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != 1:
        raise DataError(f"unsupported graph cache version in {path}")
    records = []
    for b, entry in enumerate(payload["baskets"]):
        for i in entry["items"]:
            records.append(InteractionRecord(entry["owner"], b, i, entry["order"]))
    maps = IdMaps(users=payload["id_maps"]["users"],
                  baskets=payload["id_maps"]["baskets"],
                  items=payload["id_maps"]["items"])
    return build_graph(records,
                       num_users=payload["num_users"],
                       num_baskets=len(payload["baskets"]),
                       num_items=payload["num_items"],
                       id_maps=maps)
