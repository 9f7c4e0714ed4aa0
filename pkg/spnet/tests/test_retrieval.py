# tests/test_retrieval.py
import math

import numpy as np
import pytest
from pydantic import ValidationError

from spnet.geometry import normalize
from spnet.geometry.synth import synth_shape
from spnet.multiview import EnsembleModel
from spnet.nn import SpnetModel
from spnet.projection import render
from spnet.projection.codec import GRID_KIND, decode_grid
from spnet.retrieval import (
    Descriptor,
    RankedList,
    average_precision,
    block_means,
    descriptor,
    distance,
    evaluate_retrieval,
    export_similarity,
    f_scores,
    mean_ap,
    ndcg,
    rank,
    rank_all,
    rankings_frame,
    similarity_matrix,
)
from spnet.retrieval.metrics import evaluate_rankings, precision_at_k, recall_at_k
from spnet.state_management import Aggregation, DistanceMetric, ProjectionKind


def one_hot(object_id: str, label: str, index: int, classes: int = 3) -> Descriptor:
    return Descriptor(object_id=object_id, probs=np.eye(classes)[index], label=label)


def separated_corpus():
    """Two classes whose descriptors sit near different simplex corners"""
    return [
        Descriptor(object_id="a1", probs=[0.9, 0.1], label="a"),
        Descriptor(object_id="a2", probs=[0.8, 0.2], label="a"),
        Descriptor(object_id="b1", probs=[0.1, 0.9], label="b"),
        Descriptor(object_id="b2", probs=[0.25, 0.75], label="b"),
    ]


def brute_average_precision(relevance):
    relevant = [k for k, rel in enumerate(relevance, start=1) if rel]
    if not relevant:
        return 0.0
    return sum(sum(relevance[:k]) / k for k in relevant) / len(relevant)


class TestDescriptors:
    """Test suite for descriptors and distances"""

    def test_simplex_validation(self):
        """Test descriptors must be probability vectors"""
        with pytest.raises(ValidationError):
            Descriptor(object_id="x", probs=[0.5, 0.6])
        with pytest.raises(ValidationError):
            Descriptor(object_id="x", probs=[1.5, -0.5])

    def test_worked_distances(self):
        """Test L1 = 2 and L2 = sqrt(2) between opposite corners"""
        a, b = [1.0, 0.0], [0.0, 1.0]
        assert distance(a, b, DistanceMetric.L1) == pytest.approx(2.0)
        assert distance(a, b, DistanceMetric.L2) == pytest.approx(math.sqrt(2.0))
        assert distance(a, a) == 0.0

    def test_zero_backbone_gives_uniform_descriptor(self):
        """Test all-zero scores map to the uniform distribution"""
        model = SpnetModel.initialize(4, seed=0, hidden_units=8)
        zero = SpnetModel({k: np.zeros_like(v) for k, v in model.params.items()})
        ensemble = EnsembleModel(zero, [0, 1], Aggregation.WEIGHTED_AVERAGE)
        d = descriptor(ensemble, np.ones((2, 16, 16), dtype=np.float32), "obj", "box")
        np.testing.assert_allclose(d.probs, 0.25)
        assert d.label == "box"

    def test_face_permutation_leaves_descriptor_unchanged(self):
        """Test reordering mesh faces does not change the descriptor"""
        mesh = normalize(synth_shape("torus", np.random.default_rng(0)))
        permuted = mesh.with_faces(mesh.faces[np.random.default_rng(1).permutation(mesh.num_faces)])
        ensemble = EnsembleModel(SpnetModel.initialize(3, seed=2, hidden_units=16), [0])
        first = descriptor(ensemble, render(mesh, ProjectionKind.UV, size=16).pixels[None])
        second = descriptor(ensemble, render(permuted, ProjectionKind.UV, size=16).pixels[None])
        np.testing.assert_array_equal(first.probs, second.probs)
        assert first.probs.sum() == pytest.approx(1.0)


class TestRanking:
    """Test suite for distance ranking"""

    def test_query_excluded_and_sorted(self):
        """Test the query never ranks itself and distances ascend"""
        corpus = separated_corpus()
        ranked = rank(corpus[0], corpus)
        assert ranked.ranked == ["a2", "b2", "b1"]
        assert ranked.distances == sorted(ranked.distances)

    def test_duplicate_ranks_first(self):
        """Test an identical descriptor sits at distance 0 at the top"""
        corpus = separated_corpus() + [Descriptor(object_id="copy", probs=[0.1, 0.9], label="b")]
        ranked = rank(corpus[2], corpus)
        assert ranked.ranked[0] == "copy"
        assert ranked.distances[0] == 0.0

    def test_ties_break_by_id(self):
        """Test equal distances order targets by id"""
        corpus = [one_hot("q", "a", 0), one_hot("z", "b", 1), one_hot("m", "c", 2), one_hot("b", "b", 1)]
        assert rank(corpus[0], corpus).ranked == ["b", "m", "z"]

    def test_single_object_corpus(self):
        """Test a corpus holding only the query ranks nothing"""
        corpus = separated_corpus()[:1]
        assert rank(corpus[0], corpus).ranked == []

    def test_corpus_permutation_invariance(self):
        """Test corpus order does not affect rankings"""
        corpus = separated_corpus()
        shuffled = [corpus[k] for k in (3, 1, 0, 2)]
        for query in corpus:
            assert rank(query, corpus) == rank(query, shuffled)

    def test_metrics_agree_on_corner_descriptors(self):
        """Test L1 and L2 produce the same order for one-hot descriptors"""
        corpus = [one_hot(f"o{k}", str(k % 3), k % 3) for k in range(9)]
        l1 = rank_all(corpus, DistanceMetric.L1)
        l2 = rank_all(corpus, DistanceMetric.L2)
        assert [r.ranked for r in l1] == [r.ranked for r in l2]

    def test_ranked_list_validation(self):
        """Test ranked lists reject decreasing distances"""
        with pytest.raises(ValidationError):
            RankedList(query_id="q", ranked=["a", "b"], distances=[0.5, 0.1])


class TestRetrievalMetrics:
    """Test suite for ranking quality measures"""

    def test_average_precision_worked_values(self):
        """Test AP of [1, 0, 1] is 5/6 with the all and none edge cases"""
        assert average_precision([1, 0, 1]) == pytest.approx(0.8333, abs=1e-4)
        assert average_precision([1, 1, 1]) == 1.0
        assert average_precision([0, 0, 0]) == 0.0
        assert mean_ap([[1, 0, 1], [1, 1]]) == pytest.approx((5 / 6 + 1.0) / 2)

    def test_average_precision_matches_brute_force(self):
        """Test AP against a direct evaluation on random relevance lists"""
        rng = np.random.default_rng(0)
        for _ in range(200):
            relevance = rng.integers(0, 2, size=rng.integers(1, 51)).tolist()
            assert average_precision(relevance) == pytest.approx(brute_average_precision(relevance), abs=1e-12)

    def test_ndcg_worked_values(self):
        """Test NDCG of an ideal list, of [0, 1] and of an all-zero list"""
        assert ndcg([1, 1, 0], 3) == pytest.approx(1.0)
        assert ndcg([0, 1], 2) == pytest.approx(1.0 / math.log2(3), abs=1e-12)
        assert ndcg([0, 1], 2) == pytest.approx(0.6309, abs=1e-4)
        assert ndcg([0, 0], 2) == 0.0

    def test_precision_recall_at_k(self):
        """Test cutoff precision and recall"""
        relevance = [1, 0, 1, 1, 0]
        assert precision_at_k(relevance, 2) == pytest.approx(0.5)
        assert recall_at_k(relevance, 2) == pytest.approx(1 / 3)
        assert recall_at_k(relevance, 3, total_relevant=4) == pytest.approx(0.5)

    def test_micro_and_macro_f(self):
        """Test three failing queries of one class and one perfect query of another"""
        micro, macro = f_scores([0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, 1.0], ["a", "a", "a", "b"])
        assert micro == pytest.approx(0.25)
        assert macro == pytest.approx(0.5)

    def test_separated_corpus_scores_perfectly(self):
        """Test cleanly separated classes give mAP, NDCG and F of 1"""
        rankings, metrics = evaluate_retrieval(separated_corpus(), DistanceMetric.L1, accuracy=1.0)
        assert len(rankings) == 4
        assert metrics.mean_ap == pytest.approx(1.0)
        assert metrics.ndcg == pytest.approx(1.0)
        assert metrics.micro_f == pytest.approx(1.0)
        assert metrics.macro_f == pytest.approx(1.0)
        assert metrics.precision_at_10 == pytest.approx(0.1)
        assert metrics.recall_at_10 == pytest.approx(1.0)
        assert metrics.accuracy == 1.0
        assert metrics.num_queries == 4

    def test_mixed_ranking(self):
        """Test a query whose class mate ranks last"""
        ranking = RankedList(query_id="a1", ranked=["b1", "b2", "a2"], distances=[0.1, 0.2, 0.3])
        labels = {"a1": "a", "a2": "a", "b1": "b", "b2": "b"}
        metrics = evaluate_rankings([ranking], labels, DistanceMetric.L2)
        assert metrics.mean_ap == pytest.approx(1 / 3)
        assert metrics.ndcg == 0.0
        assert metrics.micro_f == 0.0

    def test_rankings_frame(self):
        """Test the long table holds one row per (query, target)"""
        rankings, _ = evaluate_retrieval(separated_corpus())
        frame = rankings_frame(rankings)
        assert list(frame.columns) == ["query_id", "rank", "target_id", "distance"]
        assert len(frame) == 12
        first = frame[frame.query_id == "a1"].iloc[0]
        assert first.target_id == "a2"
        assert first["rank"] == 1


class TestSimilarityMatrix:
    """Test suite for the class-grouped distance matrix"""

    def setup_method(self):
        """Set up a shuffled corpus"""
        corpus = separated_corpus()
        self.similarity = similarity_matrix([corpus[k] for k in (2, 0, 3, 1)])

    def test_grouped_and_symmetric(self):
        """Test rows sort by (label, id), the diagonal is 0 and the matrix is symmetric"""
        assert self.similarity.object_ids == ["a1", "a2", "b1", "b2"]
        assert self.similarity.labels == ["a", "a", "b", "b"]
        np.testing.assert_array_equal(np.diag(self.similarity.distances), 0.0)
        np.testing.assert_allclose(self.similarity.distances, self.similarity.distances.T)

    def test_block_means(self):
        """Test within-class distances are smaller than between-class distances"""
        within, between = block_means(self.similarity)
        assert within < between

    def test_export(self, tmp_path):
        """Test the grid and heatmap exports"""
        grid_path, png_path = export_similarity(self.similarity, tmp_path)
        assert png_path.exists() and png_path.stat().st_size > 0
        code, grid, _ = decode_grid(grid_path.read_bytes())
        assert code == GRID_KIND
        assert grid.shape == (4, 4)
        assert grid.max() == pytest.approx(1.0)
        assert grid.min() >= 0.0
