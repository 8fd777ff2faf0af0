"""Softmax-regression probe over frozen embeddings.

Cross-entropy objective trained with Adam (lr 1e-3, batch 32, up to 50
epochs) or plain full-batch gradient descent for sanity configurations.
Weights start at zero: the objective is convex, so initialization only
affects speed, and zero-init keeps runs reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import StyleError
from .classes import CLASS_ORDER, PRE_RELABEL_CLASSES, StyleObservation


@dataclass(frozen=True)
class ProbeConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    optimizer: str = "adam"  # "adam" | "sgd"

    def __post_init__(self):
        if self.epochs < 1 or self.epochs > 50:
            raise StyleError("epochs must be in 1..50")
        if self.optimizer not in ("adam", "sgd"):
            raise StyleError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class LinearProbe:
    classes: tuple
    weights: np.ndarray  # (dim, n_classes)
    bias: np.ndarray  # (n_classes,)
    train_accuracy: float
    train_macro_f1: float
    val_accuracy: float | None = None
    val_macro_f1: float | None = None
    loss_history: tuple = field(default=(), compare=False)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def cross_entropy_loss_and_grad(weights, bias, x, y):
    """Mean cross-entropy and its analytic gradient for a batch.

    ``y`` holds integer class indices. Returns (loss, grad_w, grad_b).
    """
    n = x.shape[0]
    probs = softmax(x @ weights + bias)
    eps = np.finfo(float).tiny
    loss = float(-np.log(probs[np.arange(n), y] + eps).mean())
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n
    return loss, x.T @ delta, delta.sum(axis=0)


def _class_order(labels) -> tuple:
    present = sorted(set(labels))
    if set(present) <= set(PRE_RELABEL_CLASSES):
        return tuple(c for c in CLASS_ORDER if c in present)
    return tuple(present)


def _metrics(pred: np.ndarray, truth: np.ndarray, n_classes: int) -> tuple:
    accuracy = float((pred == truth).mean())
    f1s = []
    for c in range(n_classes):
        tp = int(((pred == c) & (truth == c)).sum())
        fp = int(((pred == c) & (truth != c)).sum())
        fn = int(((pred != c) & (truth == c)).sum())
        f1s.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return accuracy, float(np.mean(f1s))


def train_linear_probe(examples, config: ProbeConfig | None = None, validation=None) -> LinearProbe:
    """Fit the probe on (vector, label) pairs; deterministic given the seed."""
    config = config or ProbeConfig()
    if not examples:
        raise StyleError("no training examples")
    vectors = [np.asarray(v, dtype=np.float64) for v, _ in examples]
    labels = [label for _, label in examples]
    dim = vectors[0].shape
    if len(dim) != 1:
        raise StyleError("embedding vectors must be one-dimensional")
    if any(v.shape != dim for v in vectors):
        raise StyleError("embedding dimension mismatch in training data")
    classes = _class_order(labels)
    if len(classes) < 2:
        raise StyleError(f"need at least 2 classes, got {classes}")
    index = {c: i for i, c in enumerate(classes)}
    x = np.stack(vectors)
    y = np.array([index[label] for label in labels])

    w = np.zeros((dim[0], len(classes)))
    b = np.zeros(len(classes))
    rng = np.random.default_rng(config.seed)
    m_w = np.zeros_like(w)
    v_w = np.zeros_like(w)
    m_b = np.zeros_like(b)
    v_b = np.zeros_like(b)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    losses = []
    n = x.shape[0]
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grad_w, grad_b = cross_entropy_loss_and_grad(w, b, x[batch], y[batch])
            epoch_loss += loss * len(batch)
            if config.optimizer == "sgd":
                w = w - config.learning_rate * grad_w
                b = b - config.learning_rate * grad_b
            else:
                step += 1
                m_w = beta1 * m_w + (1 - beta1) * grad_w
                v_w = beta2 * v_w + (1 - beta2) * grad_w**2
                m_b = beta1 * m_b + (1 - beta1) * grad_b
                v_b = beta2 * v_b + (1 - beta2) * grad_b**2
                m_w_hat = m_w / (1 - beta1**step)
                v_w_hat = v_w / (1 - beta2**step)
                m_b_hat = m_b / (1 - beta1**step)
                v_b_hat = v_b / (1 - beta2**step)
                w = w - config.learning_rate * m_w_hat / (np.sqrt(v_w_hat) + eps)
                b = b - config.learning_rate * m_b_hat / (np.sqrt(v_b_hat) + eps)
        losses.append(epoch_loss / n)

    train_pred = np.argmax(x @ w + b, axis=1)
    train_acc, train_f1 = _metrics(train_pred, y, len(classes))
    val_acc = val_f1 = None
    if validation:
        vx = np.stack([np.asarray(v, dtype=np.float64) for v, _ in validation])
        if vx.shape[1] != dim[0]:
            raise StyleError("validation embedding dimension mismatch")
        vy = np.array([index[label] for _, label in validation])
        val_pred = np.argmax(vx @ w + b, axis=1)
        val_acc, val_f1 = _metrics(val_pred, vy, len(classes))
    return LinearProbe(
        classes=classes,
        weights=w,
        bias=b,
        train_accuracy=train_acc,
        train_macro_f1=train_f1,
        val_accuracy=val_acc,
        val_macro_f1=val_f1,
        loss_history=tuple(losses),
    )


def classify(probe: LinearProbe, vector, image_id: str = "") -> StyleObservation:
    """Label a vector with the probe; ties resolve to the earliest class."""
    vec = np.asarray(vector, dtype=np.float64)
    if vec.shape != (probe.dim,):
        raise StyleError(f"vector shape {vec.shape} does not match probe dim {probe.dim}")
    probs = softmax(vec @ probe.weights + probe.bias)
    label = probe.classes[int(np.argmax(probs))]
    prob_map = {c: float(p) for c, p in zip(probe.classes, probs)}
    return StyleObservation(image_id=image_id, label=label, probs=prob_map)
