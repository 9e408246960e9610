"""The six classifier variants and the late-fusion aggregation rules.

Paradigms:
  single-a / single-b  one backbone on one modality (the baselines)
  early                one backbone over the channel-concatenated chips
  joint                per-modality conv branches, features concatenated
                       into one shared fully connected head
  late-mean            two independent backbones, predictions averaged
  late-weighted        two independent backbones, predictions combined
                       per class with binary complementary weights

Modality A is the SAR-like input (speckled, few channels), modality B the
multispectral-like input (many bands). The weighted variant picks, class by
class, whichever single-modality model validated better; see derive_weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .errors import DataError, ShapeError

PARADIGMS = ("single-a", "single-b", "early", "joint", "late-mean", "late-weighted")
LATE_PARADIGMS = ("late-mean", "late-weighted")

DEFAULT_CONV_CHANNELS = (16, 32, 64)
DEFAULT_DENSE_UNITS = 128


@dataclass
class FusionModel:
    paradigm: str
    nets: list
    chip_shape_a: tuple  # (H, W, P)
    chip_shape_b: tuple  # (H, W, B)
    n_classes: int
    alpha: np.ndarray | None = None  # late-weighted only, set after training
    beta: np.ndarray | None = None

    def set_fusion_weights(self, alpha, beta) -> None:
        alpha = np.asarray(alpha, dtype=np.float32)
        beta = np.asarray(beta, dtype=np.float32)
        validate_fusion_weights(alpha, beta, self.n_classes)
        self.alpha, self.beta = alpha, beta


def _pooled_extent(size: int, stages: int) -> int:
    for _ in range(stages):
        size = -(-size // 2)
    return size


def _conv_stack(cin: int, conv_channels, rng) -> list:
    layers = []
    for cout in conv_channels:
        layers += [nn.Conv(3, cin, cout, rng), nn.ReLU(), nn.MaxPool2()]
        cin = cout
    layers.append(nn.Flatten())
    return layers


def _head(n_features: int, dense_units: int, n_classes: int, rng) -> list:
    return [
        nn.Dense(n_features, dense_units, rng),
        nn.ReLU(),
        nn.Dense(dense_units, n_classes, rng),
        nn.Softmax(),
    ]


def _backbone(height, width, cin, n_classes, rng, conv_channels, dense_units) -> nn.Network:
    stages = len(conv_channels)
    flat = _pooled_extent(height, stages) * _pooled_extent(width, stages) * conv_channels[-1]
    return nn.Network(_conv_stack(cin, conv_channels, rng) + _head(flat, dense_units, n_classes, rng))


def build_model(
    paradigm: str,
    width: int,
    height: int,
    channels_a: int,
    channels_b: int,
    n_classes: int,
    seed: int,
    conv_channels=DEFAULT_CONV_CHANNELS,
    dense_units: int = DEFAULT_DENSE_UNITS,
) -> FusionModel:
    """Construct an untrained model for the given paradigm; seeded, deterministic."""
    if paradigm not in PARADIGMS:
        raise ValueError(f"unknown paradigm {paradigm!r}; valid: {', '.join(PARADIGMS)}")
    if min(width, height) < 2 ** len(conv_channels):
        raise ShapeError(
            f"chips {width}x{height} too small for {len(conv_channels)} pooling stages"
        )
    rng = np.random.default_rng(seed)
    stages = len(conv_channels)
    args = (n_classes, rng, conv_channels, dense_units)

    if paradigm == "single-a":
        nets = [_backbone(height, width, channels_a, *args)]
    elif paradigm == "single-b":
        nets = [_backbone(height, width, channels_b, *args)]
    elif paradigm == "early":
        nets = [_backbone(height, width, channels_a + channels_b, *args)]
    elif paradigm == "joint":
        branch_a = _conv_stack(channels_a, conv_channels, rng)
        branch_b = _conv_stack(channels_b, conv_channels, rng)
        flat = _pooled_extent(height, stages) * _pooled_extent(width, stages) * conv_channels[-1]
        head = _head(2 * flat, dense_units, n_classes, rng)
        nets = [nn.TwoBranchNetwork(branch_a, branch_b, head)]
    else:  # late-mean / late-weighted: two full, independently trained backbones
        nets = [
            _backbone(height, width, channels_a, *args),
            _backbone(height, width, channels_b, *args),
        ]
    return FusionModel(
        paradigm=paradigm,
        nets=nets,
        chip_shape_a=(height, width, channels_a),
        chip_shape_b=(height, width, channels_b),
        n_classes=n_classes,
    )


def validate_fusion_weights(alpha: np.ndarray, beta: np.ndarray, n_classes: int) -> None:
    alpha = np.asarray(alpha)
    beta = np.asarray(beta)
    if alpha.shape != (n_classes,) or beta.shape != (n_classes,):
        raise ShapeError(f"fusion weights must be length {n_classes}, got {alpha.shape} and {beta.shape}")
    if not (np.isin(alpha, (0.0, 1.0)).all() and np.isin(beta, (0.0, 1.0)).all()):
        raise ValueError("fusion weights must be binary (0 or 1 per class)")
    if not np.all(alpha + beta == 1.0):
        raise ValueError("fusion weights must be complementary: alpha[c] + beta[c] == 1 for every class")


def _check_prediction_pair(pred_a, pred_b):
    pred_a = np.asarray(pred_a)
    pred_b = np.asarray(pred_b)
    if pred_a.shape != pred_b.shape:
        raise ShapeError(f"prediction shapes differ: {pred_a.shape} vs {pred_b.shape}")
    sums = np.concatenate([pred_a.sum(axis=-1, keepdims=True), pred_b.sum(axis=-1, keepdims=True)])
    if not np.allclose(sums, 1.0, atol=1e-4):
        raise ValueError("inputs are not valid prediction vectors (rows must sum to 1)")
    return pred_a, pred_b


def late_aggregate_mean(pred_a, pred_b) -> np.ndarray:
    """Decision-level fusion by simple mean; argmax-equivalent to summing."""
    pred_a, pred_b = _check_prediction_pair(pred_a, pred_b)
    return (pred_a + pred_b) / 2.0


def late_aggregate_weighted(pred_a, pred_b, alpha, beta) -> np.ndarray:
    """Per-class weighted combination alpha*pred_a + beta*pred_b.

    The output is intentionally not renormalized; only its argmax is
    consumed downstream.
    """
    pred_a, pred_b = _check_prediction_pair(pred_a, pred_b)
    alpha = np.asarray(alpha, dtype=pred_a.dtype)
    beta = np.asarray(beta, dtype=pred_b.dtype)
    validate_fusion_weights(alpha, beta, pred_a.shape[-1])
    return alpha * pred_a + beta * pred_b


def derive_weights(recall_a, recall_b) -> tuple[np.ndarray, np.ndarray]:
    """Binary complementary weights from per-class recalls of the two models.

    alpha[c] = 1 where model A recalled class c strictly better, else 0;
    beta = 1 - alpha, so ties go to model B.
    """
    recall_a = np.asarray(recall_a, dtype=np.float64)
    recall_b = np.asarray(recall_b, dtype=np.float64)
    if recall_a.shape != recall_b.shape or recall_a.ndim != 1:
        raise ShapeError(f"recall vectors must share one axis, got {recall_a.shape} and {recall_b.shape}")
    for name, r in (("recall_a", recall_a), ("recall_b", recall_b)):
        if ((r < 0) | (r > 1)).any():
            raise ValueError(f"{name} entries must lie in [0, 1]")
    alpha = (recall_a > recall_b).astype(np.float32)
    return alpha, 1.0 - alpha


def predict_batch(model: FusionModel, chips_a: np.ndarray, chips_b: np.ndarray) -> np.ndarray:
    """Route a batch of paired chips through the model; returns (N, C) decisions."""
    if chips_a.shape[1:] != model.chip_shape_a:
        raise ShapeError(f"modality-A chips {chips_a.shape[1:]} != model spec {model.chip_shape_a}")
    if chips_b.shape[1:] != model.chip_shape_b:
        raise ShapeError(f"modality-B chips {chips_b.shape[1:]} != model spec {model.chip_shape_b}")
    p = model.paradigm
    if p == "single-a":
        return model.nets[0].forward_batch([chips_a])
    if p == "single-b":
        return model.nets[0].forward_batch([chips_b])
    if p == "early":
        return model.nets[0].forward_batch([np.concatenate([chips_a, chips_b], axis=-1)])
    if p == "joint":
        return model.nets[0].forward_batch([chips_a, chips_b])
    pred_a = model.nets[0].forward_batch([chips_a])
    pred_b = model.nets[1].forward_batch([chips_b])
    if p == "late-mean":
        return late_aggregate_mean(pred_a, pred_b)
    if model.alpha is None or model.beta is None:
        raise ValueError("late-weighted model has no fusion weights yet; train it (or set them) first")
    return late_aggregate_weighted(pred_a, pred_b, model.alpha, model.beta)


def predict(model: FusionModel, sample) -> np.ndarray:
    """Decision vector for one SamplePair."""
    return predict_batch(model, sample.chip_a[None], sample.chip_b[None])[0]


# --- on-disk model bundle --------------------------------------------------

MODEL_META = "model.json"


def save_model(out_dir, model: FusionModel) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, net in enumerate(model.nets):
        name = f"net_{i}.fnet"
        nn.save_network(out_dir / name, net)
        names.append(name)
    meta = {
        "paradigm": model.paradigm,
        "chip_shape_a": list(model.chip_shape_a),
        "chip_shape_b": list(model.chip_shape_b),
        "n_classes": model.n_classes,
        "checkpoints": names,
        "alpha": None if model.alpha is None else [float(v) for v in model.alpha],
        "beta": None if model.beta is None else [float(v) for v in model.beta],
    }
    (out_dir / MODEL_META).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_model(model_dir) -> FusionModel:
    model_dir = Path(model_dir)
    meta_path = model_dir / MODEL_META
    if not meta_path.exists():
        raise DataError(f"{model_dir}: no {MODEL_META} found")
    meta = json.loads(meta_path.read_text())
    nets = [nn.load_network(model_dir / name) for name in meta["checkpoints"]]
    model = FusionModel(
        paradigm=meta["paradigm"],
        nets=nets,
        chip_shape_a=tuple(meta["chip_shape_a"]),
        chip_shape_b=tuple(meta["chip_shape_b"]),
        n_classes=meta["n_classes"],
    )
    if meta.get("alpha") is not None:
        model.set_fusion_weights(meta["alpha"], meta["beta"])
    return model
