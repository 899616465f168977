"""Top-K ranking metrics over transductive and inductive test cases.

Candidates are all items minus the case's visible items (train items for
transductive baskets, seed items for cold ones). Ties break by ascending
item index so reports reproduce bit-for-bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .graph import DataSplit, EntityId, TestCase

DEFAULT_K_SET = (10, 20, 30, 40, 60, 80, 100)


@dataclass
class RankedList:
    """Candidate items for one basket, sorted by descending score."""

    basket: EntityId
    items: np.ndarray
    scores: np.ndarray


def rank_candidates(basket: EntityId, scores: np.ndarray,
                    exclude: Iterable[int]) -> RankedList:
    """Rank all items by score, dropping the exclusion set.

    Equal scores keep ascending item-index order (stable sort over an
    index-sorted candidate array).
    """
    scores = np.asarray(scores, dtype=np.float64)
    excluded = np.fromiter(exclude, dtype=np.intp) if exclude else np.empty(0, np.intp)
    keep = np.setdiff1d(np.arange(scores.shape[0], dtype=np.intp), excluded)
    order = np.argsort(-scores[keep], kind="stable")
    ranked = keep[order]
    return RankedList(basket=basket, items=ranked, scores=scores[ranked])


def recall_at_k(ranked: RankedList, truth: Sequence[int], k: int) -> float:
    truth_set = set(truth)
    if not truth_set:
        raise ValueError("recall undefined for empty ground truth")
    hits = sum(1 for i in ranked.items[:k] if int(i) in truth_set)
    return hits / len(truth_set)


def hr_at_k(ranked: RankedList, truth: Sequence[int], k: int) -> float:
    truth_set = set(truth)
    if not truth_set:
        raise ValueError("hit ratio undefined for empty ground truth")
    return 1.0 if any(int(i) in truth_set for i in ranked.items[:k]) else 0.0


def ndcg_at_k(ranked: RankedList, truth: Sequence[int], k: int) -> float:
    """Binary-gain NDCG: discount 1/log2(rank + 1), ideal mass truncated
    at min(k, |truth|)."""
    truth_set = set(truth)
    if not truth_set:
        raise ValueError("ndcg undefined for empty ground truth")
    dcg = 0.0
    for rank, item in enumerate(ranked.items[:k], start=1):
        if int(item) in truth_set:
            dcg += 1.0 / math.log2(rank + 1)
    ideal = sum(1.0 / math.log2(r + 1)
                for r in range(1, min(k, len(truth_set)) + 1))
    return dcg / ideal


@dataclass
class MetricReport:
    """Per-K averages over all evaluated cases."""

    recall: dict[int, float]
    hit_ratio: dict[int, float]
    ndcg: dict[int, float]
    k_set: tuple[int, ...]
    cases: int

    def get(self, metric: str, k: int) -> float:
        return {"recall": self.recall, "hr": self.hit_ratio,
                "ndcg": self.ndcg}[metric][k]

    def csv_rows(self) -> list[str]:
        rows = ["metric,K,value,cases"]
        for name, table in (("recall", self.recall),
                            ("hr", self.hit_ratio),
                            ("ndcg", self.ndcg)):
            for k in self.k_set:
                rows.append(f"{name},{k},{table[k]:.12g},{self.cases}")
        return rows

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(self.csv_rows()) + "\n")


def evaluate_cases(cases: Sequence[TestCase],
                   score_fn: Callable[[TestCase], np.ndarray],
                   k_set: Sequence[int] = DEFAULT_K_SET,
                   dump_path=None) -> MetricReport:
    """Average Recall/HR/NDCG over the cases at each K.

    score_fn maps a case to a score per item; the case's seed items are
    excluded from ranking. Cases with empty ground truth are skipped with
    a warning (their metrics are undefined).
    """
    k_set = tuple(sorted(set(int(k) for k in k_set)))
    totals = {k: [0.0, 0.0, 0.0] for k in k_set}
    skipped = 0
    count = 0
    dump = open(dump_path, "w", encoding="utf-8", newline="") if dump_path else None
    try:
        if dump:
            dump.write("basket\tK\trecall\thr\tndcg\n")
        for case in cases:
            if not case.ground_truth:
                skipped += 1
                continue
            ranked = rank_candidates(case.basket, score_fn(case), case.seed_items)
            count += 1
            for k in k_set:
                r = recall_at_k(ranked, case.ground_truth, k)
                h = hr_at_k(ranked, case.ground_truth, k)
                n = ndcg_at_k(ranked, case.ground_truth, k)
                totals[k][0] += r
                totals[k][1] += h
                totals[k][2] += n
                if dump:
                    dump.write(f"{case.basket.index}\t{k}\t{r:.12g}\t{h:.12g}\t{n:.12g}\n")
    finally:
        if dump:
            dump.close()
    if skipped:
        warnings.warn(f"skipped {skipped} test cases with empty ground truth")
    if count == 0:
        return MetricReport(recall={k: 0.0 for k in k_set},
                            hit_ratio={k: 0.0 for k in k_set},
                            ndcg={k: 0.0 for k in k_set},
                            k_set=k_set, cases=0)
    return MetricReport(
        recall={k: totals[k][0] / count for k in k_set},
        hit_ratio={k: totals[k][1] / count for k in k_set},
        ndcg={k: totals[k][2] / count for k in k_set},
        k_set=k_set, cases=count)


def evaluate(split: DataSplit,
             score_fn: Callable[[TestCase], np.ndarray],
             k_set: Sequence[int] = DEFAULT_K_SET,
             dump_path=None) -> MetricReport:
    return evaluate_cases(split.test_cases, score_fn, k_set, dump_path)
