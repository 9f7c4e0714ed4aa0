# spnet/retrieval/metrics.py
"""
Ranking quality measures.

Relevance lists are 0/1 sequences in rank order. Precision and recall at a
cutoff, NDCG and the F-score use the number of items relevant to the query
(its class size minus the query) as the cutoff; average precision uses the
whole list.
"""

import logging
from collections import defaultdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..state_management import DistanceMetric, RetrievalMetrics
from .ranking import Descriptor, RankedList, rank_all

logger = logging.getLogger(__name__)

TOP_K = 10


def average_precision(relevance: Sequence[int]) -> float:
    """(1/R) * sum of precision@k over relevant positions k; 0 when nothing is relevant"""
    hits, total = 0, 0.0
    for k, rel in enumerate(relevance, start=1):
        if rel:
            hits += 1
            total += hits / k
    return total / hits if hits else 0.0


def mean_ap(relevances: Sequence[Sequence[int]]) -> float:
    if not relevances:
        return 0.0
    return float(np.mean([average_precision(r) for r in relevances]))


def precision_at_k(relevance: Sequence[int], k: int) -> float:
    if k <= 0:
        return 0.0
    return sum(1 for rel in relevance[:k] if rel) / k


def recall_at_k(relevance: Sequence[int], k: int, total_relevant: Optional[int] = None) -> float:
    total = sum(1 for rel in relevance if rel) if total_relevant is None else total_relevant
    if total <= 0 or k <= 0:
        return 0.0
    return sum(1 for rel in relevance[:k] if rel) / total


def dcg(relevance: Sequence[int], depth: int) -> float:
    return float(sum(rel / np.log2(i + 1) for i, rel in enumerate(relevance[:depth], start=1)))


def ndcg(relevance: Sequence[int], depth: int) -> float:
    """DCG at depth normalized by the DCG of the ideal ordering of the same list"""
    ideal = dcg(sorted(relevance, reverse=True), depth)
    return dcg(relevance, depth) / ideal if ideal > 0 else 0.0


def f_score(precision: float, recall: float) -> float:
    return 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def f_scores(
    precisions: Sequence[float],
    recalls: Sequence[float],
    labels: Sequence[str],
) -> Tuple[float, float]:
    """
    (micro, macro) F-score over queries.

    Micro is the mean over all queries; macro first averages the queries of
    each class and then takes the unweighted mean over classes.
    """
    scores = [f_score(p, r) for p, r in zip(precisions, recalls)]
    if not scores:
        return 0.0, 0.0
    by_class: Dict[str, List[float]] = defaultdict(list)
    for label, score in zip(labels, scores):
        by_class[label].append(score)
    micro = float(np.mean(scores))
    macro = float(np.mean([np.mean(by_class[c]) for c in sorted(by_class)]))
    return micro, macro

# ================================
# CORPUS EVALUATION
# ================================

def relevance_of(ranked: RankedList, labels: Dict[str, str]) -> List[int]:
    query_label = labels[ranked.query_id]
    return [int(labels[target] == query_label) for target in ranked.ranked]


def evaluate_rankings(
    rankings: Sequence[RankedList],
    labels: Dict[str, str],
    metric: DistanceMetric,
    accuracy: Optional[float] = None,
) -> RetrievalMetrics:
    relevances = [relevance_of(r, labels) for r in rankings]
    class_sizes: Dict[str, int] = defaultdict(int)
    for label in labels.values():
        class_sizes[label] += 1

    precisions, recalls, ndcgs, p_top, r_top, query_labels = [], [], [], [], [], []
    for ranked, relevance in zip(rankings, relevances):
        label = labels[ranked.query_id]
        cutoff = class_sizes[label] - 1
        precisions.append(precision_at_k(relevance, cutoff))
        recalls.append(recall_at_k(relevance, cutoff, cutoff))
        ndcgs.append(ndcg(relevance, cutoff) if cutoff > 0 else 0.0)
        p_top.append(precision_at_k(relevance, TOP_K))
        r_top.append(recall_at_k(relevance, TOP_K, cutoff))
        query_labels.append(label)

    micro, macro = f_scores(precisions, recalls, query_labels)
    return RetrievalMetrics(
        metric=metric,
        mean_ap=mean_ap(relevances),
        ndcg=float(np.mean(ndcgs)) if ndcgs else 0.0,
        micro_f=micro,
        macro_f=macro,
        precision_at_10=float(np.mean(p_top)) if p_top else 0.0,
        recall_at_10=float(np.mean(r_top)) if r_top else 0.0,
        accuracy=accuracy,
        num_queries=len(rankings),
    )


def evaluate_retrieval(
    descriptors: Sequence[Descriptor],
    metric: DistanceMetric = DistanceMetric.L1,
    accuracy: Optional[float] = None,
) -> Tuple[List[RankedList], RetrievalMetrics]:
    """Rank every descriptor against the rest and score the rankings by label"""
    labels = {d.object_id: d.label or "" for d in descriptors}
    rankings = rank_all(descriptors, metric)
    metrics = evaluate_rankings(rankings, labels, metric, accuracy)
    logger.info("retrieval (%s): mAP=%.4f NDCG=%.4f", metric.value, metrics.mean_ap, metrics.ndcg)
    return rankings, metrics


def rankings_frame(rankings: Sequence[RankedList]) -> pd.DataFrame:
    """Long table with columns query_id, rank (1-based), target_id, distance"""
    rows = [
        {"query_id": r.query_id, "rank": k, "target_id": target, "distance": dist}
        for r in rankings
        for k, (target, dist) in enumerate(zip(r.ranked, r.distances), start=1)
    ]
    return pd.DataFrame(rows, columns=["query_id", "rank", "target_id", "distance"])
