"""Shape descriptors, distance ranking and retrieval metrics."""

from .metrics import average_precision, evaluate_retrieval, f_scores, mean_ap, ndcg, rankings_frame
from .ranking import Descriptor, RankedList, descriptor, distance, rank, rank_all
from .similarity import SimilarityMatrix, block_means, export_similarity, similarity_matrix

__all__ = [
    "Descriptor",
    "RankedList",
    "SimilarityMatrix",
    "average_precision",
    "block_means",
    "descriptor",
    "distance",
    "evaluate_retrieval",
    "export_similarity",
    "f_scores",
    "mean_ap",
    "ndcg",
    "rank",
    "rank_all",
    "rankings_frame",
    "similarity_matrix",
]
