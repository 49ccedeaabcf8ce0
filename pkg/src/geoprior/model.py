"""A small trainable classifier stack: MLP feature sub-network + linear
softmax classifier, with independently freezable parameter groups.

The feature sub-network applies a rectifier after every hidden layer and
leaves the final feature layer linear. Training is plain SGD with momentum.
Checkpoints use a flat little-endian binary layout (magic ``GPMD``).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidConfig, NonFiniteLoss, ParseError, ShapeMismatch

FEATURES = "features"
CLASSIFIER = "classifier"

CKPT_MAGIC = b"GPMD"
CKPT_VERSION = 1


@dataclass
class TrainConfig:
    """Epochs, learning rates and schedule for the three training phases."""

    m1: int = 30
    m2: int = 10
    m3: int = 5
    lr1: float = 0.05
    lr2: float = 0.001
    lr3: float = 0.001
    momentum: float = 0.9
    batch_size: int = 64
    lr_decay: str = "cosine"  # cosine | linear | none
    seed: int = 0

    def __post_init__(self):
        if min(self.m1, self.m2, self.m3) < 0:
            raise InvalidConfig("phase epoch counts must be >= 0")
        if min(self.lr1, self.lr2, self.lr3) <= 0:
            raise InvalidConfig("learning rates must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidConfig("momentum must be in [0, 1)")
        if self.lr_decay not in ("cosine", "linear", "none"):
            raise InvalidConfig(f"unknown lr decay {self.lr_decay!r}")

    def lr_at(self, base_lr: float, epoch: int, total_epochs: int) -> float:
        if total_epochs <= 1 or self.lr_decay == "none":
            return base_lr
        frac = epoch / (total_epochs - 1)
        if self.lr_decay == "cosine":
            return base_lr * 0.5 * (1.0 + np.cos(np.pi * frac))
        return base_lr * (1.0 - frac * (1.0 - 1e-2))


@dataclass
class Layer:
    w: np.ndarray  # (in, out)
    b: np.ndarray  # (out,)


def _init_layer(n_in: int, n_out: int, rng: np.random.Generator) -> Layer:
    bound = 1.0 / np.sqrt(n_in)
    return Layer(rng.uniform(-bound, bound, (n_in, n_out)), rng.uniform(-bound, bound, n_out))


@dataclass
class Model:
    """feature_layers (theta1) followed by a linear softmax classifier (theta2)."""

    feature_layers: list[Layer]
    classifier: Layer
    momenta: dict = field(default_factory=dict)

    @classmethod
    def create(cls, layer_sizes: list[int], n_classes: int, rng: np.random.Generator) -> "Model":
        if len(layer_sizes) < 2:
            raise InvalidConfig("need at least an input and a feature dimension")
        layers = [_init_layer(a, b, rng) for a, b in zip(layer_sizes[:-1], layer_sizes[1:])]
        return cls(layers, _init_layer(layer_sizes[-1], n_classes, rng))

    @property
    def input_dim(self) -> int:
        return self.feature_layers[0].w.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.feature_layers[-1].w.shape[1]

    @property
    def n_classes(self) -> int:
        return self.classifier.w.shape[1]

    def copy(self) -> "Model":
        return Model(
            [Layer(l.w.copy(), l.b.copy()) for l in self.feature_layers],
            Layer(self.classifier.w.copy(), self.classifier.b.copy()),
        )

    def theta1_bytes(self) -> bytes:
        return b"".join(l.w.tobytes() + l.b.tobytes() for l in self.feature_layers)

    def theta2_bytes(self) -> bytes:
        return self.classifier.w.tobytes() + self.classifier.b.tobytes()


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def features_of(model: Model, x: np.ndarray) -> np.ndarray:
    """Feature embedding z = f(x, theta1); rectifier on hidden layers only."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ShapeMismatch(f"input shape {x.shape} does not match input dim {model.input_dim}")
    h = x
    for i, layer in enumerate(model.feature_layers):
        h = h @ layer.w + layer.b
        if i < len(model.feature_layers) - 1:
            h = np.maximum(h, 0.0)
    return h


def classify(model: Model, z: np.ndarray) -> np.ndarray:
    """Logits g(z, theta2) of a feature batch."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != model.feature_dim:
        raise ShapeMismatch(f"feature shape {z.shape} does not match feature dim {model.feature_dim}")
    return z @ model.classifier.w + model.classifier.b


def forward(model: Model, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Feature embeddings and softmax class probabilities for an input batch."""
    z = features_of(model, x)
    return z, _softmax(classify(model, z))


def _loss_and_grads(model: Model, x: np.ndarray, y: np.ndarray, from_features: bool):
    n = x.shape[0]
    if from_features:
        activations = None
        z = np.asarray(x, dtype=np.float64)
    else:
        activations = [np.asarray(x, dtype=np.float64)]
        h = activations[0]
        for i, layer in enumerate(model.feature_layers):
            h = h @ layer.w + layer.b
            if i < len(model.feature_layers) - 1:
                h = np.maximum(h, 0.0)
            activations.append(h)
        z = activations[-1]
    logits = classify(model, z)
    probs = _softmax(logits)
    eps = 1e-300
    loss = float(-np.log(np.maximum(probs[np.arange(n), y], eps)).mean())

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = {CLASSIFIER: (z.T @ delta, delta.sum(axis=0))}
    if not from_features:
        back = delta @ model.classifier.w.T
        feat_grads = []
        for i in range(len(model.feature_layers) - 1, -1, -1):
            pre_act_input = activations[i]
            if i < len(model.feature_layers) - 1:
                back = back * (activations[i + 1] > 0.0)
            feat_grads.append((pre_act_input.T @ back, back.sum(axis=0)))
            back = back @ model.feature_layers[i].w.T
        grads[FEATURES] = feat_grads[::-1]
    return loss, grads


def train_step(
    model: Model,
    batch: np.ndarray,
    labels: np.ndarray,
    lr: float,
    momentum: float = 0.0,
    frozen: frozenset = frozenset(),
    from_features: bool = False,
) -> float:
    """One cross-entropy SGD step; frozen groups are left bit-identical.

    With from_features=True the batch is treated as feature embeddings and
    only the classifier sees gradients (phase-2 mode).
    """
    batch = np.asarray(batch, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if batch.shape[0] == 0:
        raise ShapeMismatch("empty batch")
    if from_features and FEATURES not in frozen:
        frozen = frozen | {FEATURES}
    loss, grads = _loss_and_grads(model, batch, labels, from_features)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is not finite: {loss} (lr={lr}, batch={batch.shape})")

    def update(key, layer: Layer, gw, gb):
        vw, vb = model.momenta.get(key, (np.zeros_like(layer.w), np.zeros_like(layer.b)))
        vw = momentum * vw - lr * gw
        vb = momentum * vb - lr * gb
        layer.w += vw
        layer.b += vb
        model.momenta[key] = (vw, vb)

    if CLASSIFIER not in frozen:
        update(("c", 0), model.classifier, *grads[CLASSIFIER])
    if FEATURES not in frozen and not from_features:
        for i, (gw, gb) in enumerate(grads[FEATURES]):
            update(("f", i), model.feature_layers[i], gw, gb)
    return loss


@dataclass(frozen=True)
class AccuracyReport:
    """Top-1 accuracies overall, per report group and per class.

    Groups with no evaluation samples are omitted, not reported as zero.
    """

    overall: float
    per_group: dict[str, float]
    per_class: dict[int, float]

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "per_group": dict(self.per_group),
            "per_class": {str(k): v for k, v in self.per_class.items()},
        }


def evaluate(model: Model, x: np.ndarray, labels: np.ndarray, groups: dict[str, set[int]] | None = None) -> AccuracyReport:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ShapeMismatch("empty evaluation set")
    _, probs = forward(model, x)
    pred = probs.argmax(axis=1)
    hits = pred == labels
    per_class = {int(c): float(hits[labels == c].mean()) for c in np.unique(labels)}
    per_group = {}
    for name, members in (groups or {}).items():
        mask = np.isin(labels, sorted(members))
        if mask.any():
            per_group[name] = float(hits[mask].mean())
    return AccuracyReport(float(hits.mean()), per_group, per_class)


def save_model(model: Model, path) -> None:
    """Checkpoint: magic GPMD, version u32, layer count u32, then per layer
    (in u32, out u32), then per layer W row-major + b as float64 LE. The
    classifier is the last layer."""
    layers = model.feature_layers + [model.classifier]
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(layers)))
        for layer in layers:
            fh.write(struct.pack("<II", *layer.w.shape))
        for layer in layers:
            fh.write(layer.w.astype("<f8").tobytes())
            fh.write(layer.b.astype("<f8").tobytes())


def load_model(path) -> Model:
    blob = Path(path).read_bytes()
    if blob[:4] != CKPT_MAGIC:
        raise ParseError(f"{path}: offset 0: bad magic {blob[:4]!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != CKPT_VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    if count < 2:
        raise ParseError(f"{path}: need at least 2 layers, found {count}")
    off = 12
    dims = []
    for _ in range(count):
        dims.append(struct.unpack_from("<II", blob, off))
        off += 8
    layers = []
    for n_in, n_out in dims:
        w = np.frombuffer(blob, dtype="<f8", count=n_in * n_out, offset=off).reshape(n_in, n_out).copy()
        off += 8 * n_in * n_out
        b = np.frombuffer(blob, dtype="<f8", count=n_out, offset=off).copy()
        off += 8 * n_out
        layers.append(Layer(w, b))
    if off != len(blob):
        raise ParseError(f"{path}: {len(blob) - off} trailing bytes")
    return Model(layers[:-1], layers[-1])
