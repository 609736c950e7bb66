"""Siamese MLP pair classifier: 128-ReLU / 64-ReLU hidden layers with dropout
and a sigmoid output, trained with mini-batch Adam on binary cross-entropy.

Both cascade stages use this same network, differing only in input features.
All arithmetic is float64 and seeded, so training is bit-reproducible.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MODEL_MAGIC = b"ALERMLP1"
HIDDEN_1 = 128
HIDDEN_2 = 64
_LOGIT_CLIP = 30.0  # keeps sigmoid output strictly inside (0, 1) in float64


class SingleClassError(ValueError):
    """Training set contains only one label value."""


@dataclass
class TrainConfig:
    batch_size: int = 64
    max_epochs: int = 15
    learning_rate: float = 1e-3
    dropout_rate: float = 0.2
    seed: int = 0

    def validate(self):
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be >= 1 and max_epochs >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")


@dataclass
class ThresholdResult:
    threshold: float
    f1_at_threshold: float


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -_LOGIT_CLIP, _LOGIT_CLIP)))


@dataclass
class MlpModel:
    input_dim: int
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    dropout_rate: float = 0.2
    loss_history: list[float] = field(default_factory=list)

    @classmethod
    def initialize(cls, input_dim: int, seed: int, dropout_rate: float = 0.2) -> "MlpModel":
        """Fresh parameters: uniform scaled by fan-in, zero biases."""
        rng = np.random.Generator(np.random.PCG64(seed))

        def layer(fan_in, fan_out):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=(fan_in, fan_out))

        return cls(
            input_dim=input_dim,
            w1=layer(input_dim, HIDDEN_1), b1=np.zeros(HIDDEN_1),
            w2=layer(HIDDEN_1, HIDDEN_2), b2=np.zeros(HIDDEN_2),
            w3=layer(HIDDEN_2, 1), b3=np.zeros(1),
            dropout_rate=dropout_rate,
        )

    def parameters(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    def _forward(self, x: np.ndarray, rng: np.random.Generator | None = None):
        """Forward pass; a generator enables inverted dropout (training mode)."""
        z1 = x @ self.w1 + self.b1
        a1 = np.maximum(z1, 0.0)
        if rng is not None and self.dropout_rate > 0.0:
            mask1 = (rng.random(a1.shape) >= self.dropout_rate) / (1.0 - self.dropout_rate)
        else:
            mask1 = None
        d1 = a1 if mask1 is None else a1 * mask1
        z2 = d1 @ self.w2 + self.b2
        a2 = np.maximum(z2, 0.0)
        if rng is not None and self.dropout_rate > 0.0:
            mask2 = (rng.random(a2.shape) >= self.dropout_rate) / (1.0 - self.dropout_rate)
        else:
            mask2 = None
        d2 = a2 if mask2 is None else a2 * mask2
        z3 = d2 @ self.w3 + self.b3
        p = _sigmoid(z3)
        return p, (x, z1, d1, mask1, z2, d2, mask2, z3)

    def loss_and_gradients(self, x: np.ndarray, y: np.ndarray,
                           rng: np.random.Generator | None = None,
                           loss_scale: float = 1.0):
        """Mean binary cross-entropy and its gradients w.r.t. every parameter."""
        n = x.shape[0]
        p, (x0, z1, d1, mask1, z2, d2, mask2, z3) = self._forward(x, rng)
        p = p[:, 0]
        loss = -loss_scale * float(np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
        delta3 = loss_scale * (p - y)[:, None] / n
        delta3 = delta3 * (np.abs(z3) < _LOGIT_CLIP)  # clipped logits have zero slope
        g_w3 = d2.T @ delta3
        g_b3 = delta3.sum(axis=0)
        back2 = delta3 @ self.w3.T
        if mask2 is not None:
            back2 = back2 * mask2
        delta2 = back2 * (z2 > 0.0)
        g_w2 = d1.T @ delta2
        g_b2 = delta2.sum(axis=0)
        back1 = delta2 @ self.w2.T
        if mask1 is not None:
            back1 = back1 * mask1
        delta1 = back1 * (z1 > 0.0)
        g_w1 = x0.T @ delta1
        g_b1 = delta1.sum(axis=0)
        return loss, [g_w1, g_b1, g_w2, g_b2, g_w3, g_b3]

    def save(self, path: str | Path):
        with open(Path(path), "wb") as fh:
            fh.write(MODEL_MAGIC)
            fh.write(struct.pack("<HH", 1, 0))
            fh.write(struct.pack("<If", self.input_dim, self.dropout_rate))
            for p in self.parameters():
                fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "MlpModel":
        with open(Path(path), "rb") as fh:
            data = fh.read()
        if data[: len(MODEL_MAGIC)] != MODEL_MAGIC:
            raise ValueError(f"{path}: not a model file")
        off = len(MODEL_MAGIC)
        version, _ = struct.unpack_from("<HH", data, off)
        off += 4
        if version != 1:
            raise ValueError(f"{path}: unsupported model version {version}")
        input_dim, dropout_rate = struct.unpack_from("<If", data, off)
        off += 8
        shapes = [(input_dim, HIDDEN_1), (HIDDEN_1,), (HIDDEN_1, HIDDEN_2), (HIDDEN_2,), (HIDDEN_2, 1), (1,)]
        params = []
        for shape in shapes:
            count = int(np.prod(shape))
            params.append(np.frombuffer(data, dtype="<f4", count=count, offset=off)
                          .astype(np.float64).reshape(shape))
            off += 4 * count
        if off != len(data):
            raise ValueError(f"{path}: {len(data) - off} trailing bytes")
        return cls(input_dim, *params, dropout_rate=float(dropout_rate))


def _as_matrix(features, expected_dim: int | None = None) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {x.shape}")
    if expected_dim is not None and x.shape[1] != expected_dim:
        raise ValueError(f"feature dim {x.shape[1]} does not match model input_dim {expected_dim}")
    return x


def train(features, labels, config: TrainConfig) -> MlpModel:
    """Train a fresh model with mini-batch Adam; bit-reproducible for a fixed seed."""
    config.validate()
    x = _as_matrix(features)
    y = np.asarray(labels, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise ValueError("features and labels differ in length")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 training examples")
    if len(np.unique(y)) < 2:
        raise SingleClassError("single-class training set; widen the seed set")
    model = MlpModel.initialize(x.shape[1], config.seed, config.dropout_rate)
    rng = np.random.Generator(np.random.PCG64(config.seed + 1))
    params = model.parameters()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    n = x.shape[0]
    for _ in range(config.max_epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            _, grads = model.loss_and_gradients(x[batch], y[batch], rng=rng)
            step += 1
            for i, (p, g) in enumerate(zip(params, grads)):
                m[i] = beta1 * m[i] + (1.0 - beta1) * g
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
                m_hat = m[i] / (1.0 - beta1 ** step)
                v_hat = v[i] / (1.0 - beta2 ** step)
                p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        epoch_loss, _ = model.loss_and_gradients(x, y, rng=None)
        model.loss_history.append(epoch_loss)
    return model


def predict_batch(model: MlpModel, features, batch_size: int = 8192) -> np.ndarray:
    """Probabilities in input order; dropout disabled."""
    x = _as_matrix(features, model.input_dim)
    out = np.empty(x.shape[0], dtype=np.float64)
    for start in range(0, x.shape[0], batch_size):
        p, _ = model._forward(x[start:start + batch_size], rng=None)
        out[start:start + p.shape[0]] = p[:, 0]
    return out


def optimal_threshold(probs, labels) -> ThresholdResult:
    """Exhaustive scan over sorted unique probabilities (predict match when
    prob >= threshold); the maximizer, ties broken toward the largest threshold."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if p.shape != y.shape:
        raise ValueError("probs and labels differ in length")
    total_pos = int(y.sum())
    if total_pos == 0:
        raise ValueError("no positive labels; cannot pick a threshold")
    best_theta, best_f1 = 0.0, -1.0
    for theta in np.unique(p)[::-1]:  # descending: strict improvement favors large theta
        pred = p >= theta
        tp = int(np.sum(pred & (y == 1)))
        predicted = int(pred.sum())
        f1 = 0.0 if tp == 0 else 2.0 * tp / (predicted + total_pos)
        if f1 > best_f1:
            best_theta, best_f1 = float(theta), f1
    return ThresholdResult(threshold=best_theta, f1_at_threshold=best_f1)


def gradient_check(model: MlpModel, feature, label: int, h: float = 1e-5,
                   n_params: int = 100, seed: int = 0) -> float:
    """Max relative error between analytic gradients and central finite
    differences over a random parameter subset, dropout disabled."""
    x = _as_matrix(feature, model.input_dim)
    y = np.asarray([label], dtype=np.float64)
    _, grads = model.loss_and_gradients(x, y, rng=None)
    params = model.parameters()
    sizes = [p.size for p in params]
    total = sum(sizes)
    rng = np.random.Generator(np.random.PCG64(seed))
    picks = rng.choice(total, size=min(n_params, total), replace=False)
    bounds = np.cumsum([0] + sizes)
    worst = 0.0
    for flat_idx in picks:
        layer = int(np.searchsorted(bounds, flat_idx, side="right")) - 1
        local = int(flat_idx - bounds[layer])
        p_flat = params[layer].reshape(-1)
        orig = p_flat[local]
        p_flat[local] = orig + h
        loss_plus, _ = model.loss_and_gradients(x, y, rng=None)
        p_flat[local] = orig - h
        loss_minus, _ = model.loss_and_gradients(x, y, rng=None)
        p_flat[local] = orig
        numeric = (loss_plus - loss_minus) / (2.0 * h)
        analytic = grads[layer].reshape(-1)[local]
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
