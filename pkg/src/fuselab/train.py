"""Supervised training for any fusion model, plus the SGD/Adam update rules.

Late paradigms train their two single-modality networks independently (each
network only ever sees its own modality); epochs are interleaved so the
history can track the fused predictor as it forms. The weighted variant
derives its per-class binary weights from validation recalls after the last
epoch, leaving the test split untouched.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import fusion, nn
from .errors import NumericError
from .evaluation import confusion_matrix

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

OPTIMIZERS = ("sgd", "adam")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)


# --- update rules ------------------------------------------------------------


def sgd_step(params, grads, state, learning_rate: float):
    """Vanilla SGD: p <- p - lr * g. state is unused (kept for symmetry)."""
    for p, g in zip(params, grads):
        p -= (learning_rate * g).astype(p.dtype, copy=False)
    return state


def adam_step(
    params,
    grads,
    state,
    learning_rate: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
):
    """Adam with bias-corrected first/second moments kept per parameter."""
    if state is None:
        state = {
            "t": 0,
            "m": [np.zeros_like(p) for p in params],
            "v": [np.zeros_like(p) for p in params],
        }
    state["t"] += 1
    t = state["t"]
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= (learning_rate * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype, copy=False)
    return state


class SGD:
    def __init__(self, params, learning_rate: float):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.state = None

    def step(self, grads):
        self.state = sgd_step(self.params, grads, self.state, self.learning_rate)


class Adam:
    def __init__(self, params, learning_rate: float, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = None

    def step(self, grads):
        self.state = adam_step(
            self.params, grads, self.state, self.learning_rate, self.beta1, self.beta2, self.eps
        )


def _make_optimizer(net, config: TrainConfig):
    cls = Adam if config.optimizer == "adam" else SGD
    return cls(nn.parameters(net), config.learning_rate)


# --- batching ----------------------------------------------------------------

EVAL_BATCH = 64


def _stack_a(samples):
    return np.ascontiguousarray(np.stack([s.chip_a for s in samples]))


def _stack_b(samples):
    return np.ascontiguousarray(np.stack([s.chip_b for s in samples]))


def _labels(samples):
    return np.stack([s.label for s in samples])


def _net_inputs(paradigm: str, samples):
    if paradigm == "single-a":
        return [_stack_a(samples)]
    if paradigm == "single-b":
        return [_stack_b(samples)]
    if paradigm == "early":
        return [np.concatenate([_stack_a(samples), _stack_b(samples)], axis=-1)]
    if paradigm == "joint":
        return [_stack_a(samples), _stack_b(samples)]
    raise ValueError(f"no single-network input routing for {paradigm!r}")


def _model_predictions(model: fusion.FusionModel, samples) -> np.ndarray:
    """Fused decision vectors in fixed order (late-weighted falls back to the
    mean while its weights are still underived)."""
    out = []
    for i in range(0, len(samples), EVAL_BATCH):
        chunk = samples[i : i + EVAL_BATCH]
        a, b = _stack_a(chunk), _stack_b(chunk)
        if model.paradigm == "late-weighted" and model.alpha is None:
            pred = fusion.late_aggregate_mean(
                model.nets[0].forward_batch([a]), model.nets[1].forward_batch([b])
            )
        else:
            pred = fusion.predict_batch(model, a, b)
        out.append(pred)
    return np.concatenate(out)


def _net_predictions(net, extract, samples) -> np.ndarray:
    out = []
    for i in range(0, len(samples), EVAL_BATCH):
        chunk = samples[i : i + EVAL_BATCH]
        out.append(net.forward_batch(extract(chunk)))
    return np.concatenate(out)


def per_class_recall(predictions, truths, n_classes: int) -> np.ndarray:
    cm = confusion_matrix(predictions, truths, [str(i) for i in range(n_classes)])
    return np.diag(cm.row_normalized)


def train(model: fusion.FusionModel, dsplit, config: TrainConfig) -> TrainHistory:
    """Train the model in place; deterministic given config.seed.

    Raises NumericError with a diagnostic if the loss goes non-finite.
    """
    if not dsplit.train:
        raise ValueError("training split is empty")
    if model.paradigm in fusion.LATE_PARADIGMS:
        jobs = [(model.nets[0], lambda s: [_stack_a(s)]), (model.nets[1], lambda s: [_stack_b(s)])]
    else:
        jobs = [(model.nets[0], lambda s: _net_inputs(model.paradigm, s))]
    optimizers = [_make_optimizer(net, config) for net, _ in jobs]
    rngs = [np.random.default_rng([config.seed, j]) for j in range(len(jobs))]

    n = len(dsplit.train)
    history = TrainHistory()
    for epoch in range(config.epochs):
        loss_sum = 0.0
        correct = 0
        seen = 0
        for j, (net, extract) in enumerate(jobs):
            perm = rngs[j].permutation(n)
            for start in range(0, n, config.batch_size):
                batch = [dsplit.train[i] for i in perm[start : start + config.batch_size]]
                xs = extract(batch)
                y = _labels(batch)
                pred = net.forward_batch(xs)
                loss = nn.cross_entropy(pred, y)
                if not math.isfinite(loss):
                    raise NumericError(
                        f"non-finite training loss at epoch {epoch}, batch {start // config.batch_size} "
                        f"(paradigm {model.paradigm}, net {j}); try a lower learning rate"
                    )
                net.backward(nn.cross_entropy_grad(pred, y))
                optimizers[j].step(nn.gradients(net))
                loss_sum += loss * len(batch)
                correct += int((pred.argmax(axis=1) == y.argmax(axis=1)).sum())
                seen += len(batch)
        if dsplit.val:
            val_pred = _model_predictions(model, dsplit.val)
            val_truth = _labels(dsplit.val)
            val_loss = nn.cross_entropy(val_pred, val_truth)
            val_acc = float((val_pred.argmax(axis=1) == val_truth.argmax(axis=1)).mean())
        else:
            val_loss, val_acc = float("nan"), float("nan")
        history.records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / seen,
                train_accuracy=correct / seen,
                val_loss=val_loss,
                val_accuracy=val_acc,
            )
        )

    if model.paradigm == "late-weighted":
        if not dsplit.val:
            raise ValueError("late-weighted needs a validation split to derive its weights")
        truths = _labels(dsplit.val)
        recall_a = per_class_recall(
            _net_predictions(model.nets[0], lambda s: [_stack_a(s)], dsplit.val), truths, model.n_classes
        )
        recall_b = per_class_recall(
            _net_predictions(model.nets[1], lambda s: [_stack_b(s)], dsplit.val), truths, model.n_classes
        )
        model.set_fusion_weights(*fusion.derive_weights(recall_a, recall_b))
    return history


def save_history(path, history: TrainHistory) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"])
        for r in history.records:
            writer.writerow([r.epoch, repr(r.train_loss), repr(r.train_accuracy), repr(r.val_loss), repr(r.val_accuracy)])
