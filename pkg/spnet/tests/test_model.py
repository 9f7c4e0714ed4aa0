# tests/test_model.py
import math
import os

import numpy as np
import pytest

from spnet.exceptions import FormatError, ShapeMismatch
from spnet.geometry.mesh import Rotation
from spnet.multiview import EnsembleModel, ViewBank
from spnet.nn import SpnetModel, accuracy, binary_accuracy, classification_metrics, sgd_step, train_model
from spnet.nn.checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from spnet.nn.gradcheck import grad_check
from spnet.nn.training import TrainingLog, evaluate, iterate_minibatches, read_training_log
from spnet.state_management import Aggregation, Split, TrainConfig


def random_images(count: int, size: int = 16, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(count, 1, size, size)).astype(np.float32)


class TestSpnetModel:
    """Test suite for the view classifier"""

    def setup_method(self):
        """Set up a fresh 10-class model"""
        self.model = SpnetModel.initialize(10, seed=0)

    def test_parameter_count(self):
        """Test the architecture has 87,178 parameters for 10 classes"""
        assert self.model.parameter_count() == 87178
        assert list(self.model.params)[0] == "conv1.weight"
        assert self.model.params["fc1.weight"].shape == (64, 512)

    def test_full_size_forward(self):
        """Test a single 128 x 128 image yields one row of 10 scores"""
        scores, _ = self.model.forward(random_images(1, 128)[0])
        assert scores.shape == (1, 10)
        assert scores.dtype == np.float32

    def test_zero_weights_give_zero_scores(self):
        """Test a model with all parameters zero scores every class 0"""
        zero = SpnetModel({k: np.zeros_like(v) for k, v in self.model.params.items()})
        np.testing.assert_array_equal(zero.predict(random_images(3)), 0.0)

    def test_inference_is_deterministic(self):
        """Test repeated inference returns identical scores"""
        images = random_images(4)
        np.testing.assert_array_equal(self.model.predict(images), self.model.predict(images))

    def test_dropout_only_in_training(self):
        """Test training-mode scores differ from inference scores and need a generator"""
        images = random_images(2)
        train_scores, _ = self.model.forward(images, train_mode=True, rng=np.random.default_rng(0))
        assert not np.array_equal(train_scores, self.model.predict(images))
        with pytest.raises(ValueError):
            self.model.forward(images, train_mode=True)

    def test_seeded_initialization(self):
        """Test equal seeds give equal parameters"""
        other = SpnetModel.initialize(10, seed=0)
        for name in self.model.params:
            np.testing.assert_array_equal(self.model.params[name], other.params[name])
        assert not np.array_equal(SpnetModel.initialize(10, seed=1).params["conv1.weight"], self.model.params["conv1.weight"])

    def test_image_extent_checks(self):
        """Test inputs must be single-channel with extents divisible by 8"""
        with pytest.raises(ShapeMismatch):
            self.model.predict(np.zeros((1, 1, 12, 12)))
        with pytest.raises(ShapeMismatch):
            self.model.predict(np.zeros((1, 2, 16, 16)))

    def test_zero_image_gradients(self):
        """Test a blank image gives zero first-layer kernel gradients but nonzero biases"""
        scores, cache = self.model.forward(np.zeros((1, 1, 16, 16)))
        d_scores = np.full_like(scores, 0.1)
        d_scores[0, 2] = -0.9
        grads, _ = self.model.backward(cache, d_scores)
        np.testing.assert_array_equal(grads["conv1.weight"], 0.0)
        assert np.any(grads["fc2.bias"] != 0.0)
        assert np.any(grads["conv4.bias"] != 0.0)

    def test_gradients_match_finite_differences(self):
        """Test every parameter tensor passes the gradient check"""
        image = random_images(1, 16, seed=3)[0]
        report = grad_check(self.model, image, label=3, samples_per_layer=40)
        assert set(report.errors) == set(self.model.params)
        assert report.passed, report.errors
        assert report.max_rel_error < 1e-4

    def test_copy_is_independent(self):
        """Test copies do not share parameter storage"""
        clone = self.model.copy()
        clone.params["fc2.bias"] += 1.0
        assert not np.array_equal(clone.params["fc2.bias"], self.model.params["fc2.bias"])


class TestSgd:
    """Test suite for the optimizer step"""

    def setup_method(self):
        """Set up a model and a gradient"""
        self.model = SpnetModel.initialize(3, seed=2)
        self.grads = {k: np.random.default_rng(1).normal(size=v.shape).astype(v.dtype) for k, v in self.model.params.items()}

    def test_zero_learning_rate(self):
        """Test lr 0 leaves the parameters unchanged"""
        before = self.model.copy()
        sgd_step(self.model, self.grads, 0.0)
        for name in self.model.params:
            np.testing.assert_array_equal(self.model.params[name], before.params[name])

    def test_single_weight_update(self):
        """Test w = 1, g = 2, lr = 0.01 gives 0.98"""
        self.model.params["fc2.bias"][0] = 1.0
        grads = self.model.zero_grads()
        grads["fc2.bias"][0] = 2.0
        sgd_step(self.model, grads, 0.01)
        assert self.model.params["fc2.bias"][0] == pytest.approx(0.98, abs=1e-6)

    def test_two_half_steps(self):
        """Test two steps of lr/2 match one step of lr"""
        halves = self.model.copy()
        sgd_step(self.model, self.grads, 0.01)
        sgd_step(halves, self.grads, 0.005)
        sgd_step(halves, self.grads, 0.005)
        for name in self.model.params:
            np.testing.assert_allclose(halves.params[name], self.model.params[name], atol=1e-6)


class TestTraining:
    """Test suite for minibatch training and its metrics"""

    def setup_method(self):
        """Set up a small labeled batch"""
        self.images = random_images(12, seed=5)
        self.labels = np.arange(12) % 3
        self.config = TrainConfig(epochs=2, batch_size=4, seed=9, learning_rate=0.05)

    def test_minibatches_cover_once(self):
        """Test shuffled batches partition the indices"""
        batches = list(iterate_minibatches(10, 4, np.random.default_rng(0)))
        assert [len(b) for b in batches] == [4, 4, 2]
        assert sorted(np.concatenate(batches).tolist()) == list(range(10))

    def test_training_is_deterministic(self):
        """Test equal seeds and data give bit-identical parameters"""
        first = train_model(SpnetModel.initialize(3, seed=1), self.images, self.labels, self.config)
        second = train_model(SpnetModel.initialize(3, seed=1), self.images, self.labels, self.config)
        for name in first.params:
            np.testing.assert_array_equal(first.params[name], second.params[name])

    def test_training_changes_parameters(self):
        """Test SGD moves the weights"""
        model = SpnetModel.initialize(3, seed=1)
        before = model.copy()
        train_model(model, self.images, self.labels, self.config)
        assert not np.array_equal(model.params["fc2.weight"], before.params["fc2.weight"])

    def test_training_log(self, tmp_path):
        """Test the JSON-lines log holds train and test records per epoch"""
        path = tmp_path / "train_log.jsonl"
        log = TrainingLog(path)
        train_model(
            SpnetModel.initialize(3, seed=1), self.images, self.labels, self.config, log,
            test_images=self.images[:3], test_labels=self.labels[:3],
        )
        records = read_training_log(path)
        assert [(r.epoch, r.split) for r in records] == [(1, Split.TRAIN), (1, Split.TEST), (2, Split.TRAIN), (2, Split.TEST)]
        assert records == log.records

    def test_initial_loss_near_chance(self):
        """Test a fresh model costs about ln C on a balanced batch"""
        loss, _ = evaluate(SpnetModel.initialize(3, seed=4), self.images, self.labels)
        assert abs(loss - math.log(3)) < 0.2 * math.log(3)

    def test_untrained_accuracy_near_chance(self):
        """Test a random 10-class model scores about 10% on a balanced set"""
        images = random_images(400, seed=8)
        labels = np.arange(400) % 10
        _, acc = evaluate(SpnetModel.initialize(10, seed=6), images, labels)
        assert 0.05 <= acc <= 0.15

    def test_mismatched_lengths(self):
        """Test images and labels must pair up"""
        with pytest.raises(ValueError):
            train_model(SpnetModel.initialize(3), self.images, self.labels[:5], self.config)

    @pytest.mark.skipif(not os.getenv("SPNET_SLOW_TESTS"), reason="set SPNET_SLOW_TESTS=1 to run")
    def test_overfits_ten_images(self):
        """Test ten distinct images with ten labels are memorized"""
        images = random_images(10, seed=12)
        labels = np.arange(10)
        config = TrainConfig(epochs=500, batch_size=10, learning_rate=0.01, dropout_rate=0.0, stop_at_perfect=True)
        model = train_model(SpnetModel.initialize(10, seed=0), images, labels, config)
        assert evaluate(model, images, labels)[1] == 1.0


class TestClassificationMetrics:
    """Test suite for accuracy summaries"""

    def test_accuracy_and_binary_accuracy(self):
        """Test top-1 and one-vs-rest agreement on a worked example"""
        scores = np.array([[2.0, 1.0], [0.0, 3.0], [1.0, 4.0]])
        labels = [0, 1, 0]
        assert accuracy(scores, labels) == pytest.approx(2 / 3)
        assert binary_accuracy(scores, labels) == pytest.approx(4 / 6)

    def test_confusion_matrix(self):
        """Test per-class accuracy and the confusion matrix"""
        scores = np.array([[2.0, 1.0], [0.0, 3.0], [1.0, 4.0]])
        metrics = classification_metrics(scores, [0, 1, 0], ["box", "torus"])
        assert metrics.confusion_matrix == [[1, 1], [0, 1]]
        assert metrics.per_class_accuracy == {"box": 0.5, "torus": 1.0}
        assert metrics.num_samples == 3


class TestCheckpoint:
    """Test suite for the SPNW codec"""

    def setup_method(self):
        """Set up a model, a view bank and an ensemble head"""
        self.model = SpnetModel.initialize(4, seed=3, hidden_units=32)
        rotations = [Rotation.from_degrees(azimuth=a) for a in (0, 90, 180, 270)]
        self.bank = ViewBank(rotations=rotations, weights=[0.1, 0.9, -0.5, 0.2]).with_selection(2)
        self.ensemble = EnsembleModel(self.model, self.bank.selected, Aggregation.WEIGHTED_AVERAGE, [0.7, 0.3])

    def test_round_trip_is_exact(self, tmp_path):
        """Test parameters, bank and ensemble survive a save/load cycle bit for bit"""
        path = tmp_path / "ensemble.spnw"
        save_checkpoint(path, self.model, self.bank, self.ensemble)
        restored = load_checkpoint(path)
        for name, param in self.model.params.items():
            np.testing.assert_array_equal(restored.model.params[name], param)
        assert restored.bank.selected == [1, 2]
        assert restored.bank.rotations == self.bank.rotations
        np.testing.assert_array_equal(restored.bank.weights, self.bank.weights)
        assert restored.ensemble.aggregation == Aggregation.WEIGHTED_AVERAGE
        assert restored.ensemble.view_indices == [1, 2]
        np.testing.assert_array_equal(restored.ensemble.view_weights, self.ensemble.view_weights)
        assert encode_checkpoint(restored.model, restored.bank, restored.ensemble) == path.read_bytes()

    def test_backbone_only(self):
        """Test checkpoints without optional sections"""
        restored = decode_checkpoint(encode_checkpoint(self.model))
        assert restored.bank is None
        assert restored.ensemble is None
        assert restored.model.num_classes == 4

    def test_corrupt_payloads(self):
        """Test bad magic, truncation and unknown sections"""
        data = encode_checkpoint(self.model)
        with pytest.raises(FormatError):
            decode_checkpoint(b"XXXX" + data[4:])
        with pytest.raises(FormatError):
            decode_checkpoint(data[:-3])
        with pytest.raises(FormatError):
            decode_checkpoint(data + b"ABCD")
