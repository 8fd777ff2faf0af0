import numpy as np
import pytest

from histeval.errors import StyleError
from histeval.style import (
    ProbeConfig,
    classify,
    cross_entropy_loss_and_grad,
    train_linear_probe,
)
from histeval.style.probe import LinearProbe


def make_clusters(seed=0, n_per_class=200, dim=8, spread=0.3, centers=None):
    """Well-separated Gaussian blobs; one per style class."""
    rng = np.random.default_rng(seed)
    labels = ["drawing", "engraving", "illustration", "painting", "photography"]
    if centers is None:
        centers = rng.normal(scale=6.0, size=(len(labels), dim))
    examples = []
    for idx, label in enumerate(labels):
        points = centers[idx] + rng.normal(scale=spread, size=(n_per_class, dim))
        examples += [(p, label) for p in points]
    return examples, centers, labels


def nearest_centroid_accuracy(examples, centers, labels) -> float:
    """Independent separability oracle for the synthetic clusters."""
    correct = 0
    for vector, label in examples:
        distances = [np.linalg.norm(np.asarray(vector) - c) for c in centers]
        if labels[int(np.argmin(distances))] == label:
            correct += 1
    return correct / len(examples)


class TestGradient:
    def test_analytic_gradient_matches_central_differences(self):
        rng = np.random.default_rng(3)
        dim, k, n = 4, 3, 12
        w = rng.normal(size=(dim, k))
        b = rng.normal(size=k)
        x = rng.normal(size=(n, dim))
        y = rng.integers(0, k, size=n)
        _, grad_w, grad_b = cross_entropy_loss_and_grad(w.copy(), b.copy(), x, y)

        eps = 1e-6

        def loss_at(wm, bm):
            return cross_entropy_loss_and_grad(wm, bm, x, y)[0]

        max_rel = 0.0
        for i in range(dim):
            for j in range(k):
                w_plus, w_minus = w.copy(), w.copy()
                w_plus[i, j] += eps
                w_minus[i, j] -= eps
                numeric = (loss_at(w_plus, b.copy()) - loss_at(w_minus, b.copy())) / (2 * eps)
                denom = max(abs(numeric), abs(grad_w[i, j]), 1e-8)
                max_rel = max(max_rel, abs(numeric - grad_w[i, j]) / denom)
        for j in range(k):
            b_plus, b_minus = b.copy(), b.copy()
            b_plus[j] += eps
            b_minus[j] -= eps
            numeric = (loss_at(w.copy(), b_plus) - loss_at(w.copy(), b_minus)) / (2 * eps)
            denom = max(abs(numeric), abs(grad_b[j]), 1e-8)
            max_rel = max(max_rel, abs(numeric - grad_b[j]) / denom)
        assert max_rel < 1e-4


class TestTraining:
    def test_separable_clusters_reach_full_accuracy(self):
        examples, centers, labels = make_clusters(seed=11)
        assert nearest_centroid_accuracy(examples, centers, labels) == 1.0
        probe = train_linear_probe(examples, ProbeConfig(seed=5))
        assert probe.train_accuracy == 1.0
        assert probe.train_macro_f1 == 1.0

    def test_held_out_cluster_point_classified(self):
        examples, centers, labels = make_clusters(seed=11)
        probe = train_linear_probe(examples, ProbeConfig(seed=5))
        rng = np.random.default_rng(99)
        for idx, label in enumerate(labels):
            held_out = centers[idx] + rng.normal(scale=0.3, size=centers[idx].shape)
            assert classify(probe, held_out).label == label

    def test_single_class_rejected(self):
        examples = [(np.ones(4), "painting")] * 10
        with pytest.raises(StyleError, match="2 classes"):
            train_linear_probe(examples)

    def test_dimension_mismatch_rejected(self):
        examples = [(np.ones(4), "painting"), (np.ones(5), "drawing")]
        with pytest.raises(StyleError, match="dimension mismatch"):
            train_linear_probe(examples)

    def test_deterministic_given_seed(self):
        examples, _, _ = make_clusters(seed=2, n_per_class=40)
        a = train_linear_probe(examples, ProbeConfig(seed=9, epochs=5))
        b = train_linear_probe(examples, ProbeConfig(seed=9, epochs=5))
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)

    def test_full_batch_sgd_loss_non_increasing(self):
        examples, _, _ = make_clusters(seed=4, n_per_class=30)
        config = ProbeConfig(optimizer="sgd", batch_size=len(examples), epochs=40, seed=0)
        probe = train_linear_probe(examples, config)
        losses = probe.loss_history
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_validation_metrics_reported(self):
        examples, centers, labels = make_clusters(seed=6, n_per_class=30)
        val, _, _ = make_clusters(seed=7, n_per_class=5, centers=centers)
        probe = train_linear_probe(examples, ProbeConfig(seed=1), validation=val)
        assert probe.val_accuracy == 1.0
        assert probe.val_macro_f1 == 1.0

    def test_epochs_capped_at_fifty(self):
        with pytest.raises(StyleError, match="1..50"):
            ProbeConfig(epochs=51)


class TestClassify:
    def test_zero_probe_uniform_probs_first_class(self):
        probe = LinearProbe(
            classes=("drawing", "engraving", "illustration", "painting", "photography"),
            weights=np.zeros((4, 5)),
            bias=np.zeros(5),
            train_accuracy=0.0,
            train_macro_f1=0.0,
        )
        obs = classify(probe, np.ones(4))
        assert obs.label == "drawing"
        assert all(abs(p - 0.2) < 1e-12 for p in obs.probs.values())

    def test_positive_scaling_preserves_argmax(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=(4, 5))
        classes = ("drawing", "engraving", "illustration", "painting", "photography")
        probe = LinearProbe(classes, w, np.zeros(5), 0.0, 0.0)
        scaled = LinearProbe(classes, 3.7 * w, np.zeros(5), 0.0, 0.0)
        for _ in range(20):
            v = rng.normal(size=4)
            assert classify(probe, v).label == classify(scaled, v).label

    def test_dimension_mismatch_rejected(self):
        probe = LinearProbe(("drawing", "painting"), np.zeros((4, 2)), np.zeros(2), 0.0, 0.0)
        with pytest.raises(StyleError, match="does not match"):
            classify(probe, np.ones(3))

    def test_probs_attached_and_sum_to_one(self):
        examples, _, _ = make_clusters(seed=2, n_per_class=20)
        probe = train_linear_probe(examples, ProbeConfig(seed=0, epochs=3))
        obs = classify(probe, examples[0][0], image_id="img")
        assert obs.image_id == "img"
        assert sum(obs.probs.values()) == pytest.approx(1.0, abs=1e-9)
