"""Two-hidden-layer network that learns a link probability from the
difference of two document vectors.

Architecture: ``x -> ReLU(W1 x + b1) -> dropout -> tanh(W2 . + b2) -> dropout
-> sigmoid(W3 . + b3)``. Dropout is inverted (survivors scaled by
``1 / (1 - rate)``) and only active when a generator is passed to ``forward``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .corpus import TaskDataset
from .docvec import DocumentVector, diff_vector
from .errors import (
    DimensionMismatch,
    MalformedModelFile,
    NoNegativesAvailable,
    ShapeMismatch,
    StaleCache,
)

logger = logging.getLogger(__name__)

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")
_P_CLAMP = 1e-7


@dataclass
class MlpModel:
    input_dim: int
    h1: int
    h2: int
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: float
    dropout_rate: float = 0.0

    def __post_init__(self):
        for name in PARAM_NAMES[:-1]:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        self.b3 = float(self.b3)
        self.check()

    def check(self) -> None:
        expected = {
            "W1": (self.h1, self.input_dim),
            "b1": (self.h1,),
            "W2": (self.h2, self.h1),
            "b2": (self.h2,),
            "W3": (1, self.h2),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise ShapeMismatch(f"{name} has shape {actual}, expected {shape}")
        if min(self.input_dim, self.h1, self.h2) <= 0:
            raise ShapeMismatch("layer sizes must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate {self.dropout_rate} not in [0, 1)")
        if not all(np.isfinite(p).all() for p in self.parameters().values()):
            raise ValueError("non-finite parameter")

    @classmethod
    def zeros(cls, input_dim: int, h1: int, h2: int, dropout_rate: float = 0.0) -> "MlpModel":
        return cls(
            input_dim, h1, h2,
            np.zeros((h1, input_dim)), np.zeros(h1),
            np.zeros((h2, h1)), np.zeros(h2),
            np.zeros((1, h2)), 0.0,
            dropout_rate,
        )

    @classmethod
    def initialize(
        cls,
        input_dim: int,
        h1: int,
        h2: int,
        rng: np.random.Generator,
        dropout_rate: float = 0.0,
    ) -> "MlpModel":
        """Glorot-uniform weights, zero biases."""

        def glorot(fan_out, fan_in):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_out, fan_in))

        return cls(
            input_dim, h1, h2,
            glorot(h1, input_dim), np.zeros(h1),
            glorot(h2, h1), np.zeros(h2),
            glorot(1, h2), 0.0,
            dropout_rate,
        )

    def parameters(self) -> dict[str, np.ndarray]:
        """Parameter arrays by name; ``b3`` as a 0-d array. Arrays are shared."""
        params = {name: getattr(self, name) for name in PARAM_NAMES[:-1]}
        params["b3"] = np.asarray(self.b3)
        return params

    def with_parameters(self, params: Mapping[str, np.ndarray]) -> "MlpModel":
        return MlpModel(
            self.input_dim, self.h1, self.h2,
            params["W1"], params["b1"], params["W2"], params["b2"], params["W3"],
            float(params["b3"]), self.dropout_rate,
        )


class ForwardCache(NamedTuple):
    x: np.ndarray
    z1: np.ndarray
    a1: np.ndarray  # after dropout
    mask1: np.ndarray | None  # already scaled by 1/(1-rate)
    a2: np.ndarray  # tanh output after dropout
    t2: np.ndarray  # tanh output before dropout
    mask2: np.ndarray | None
    p: np.ndarray


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


def forward(model: MlpModel, x, rng: np.random.Generator | None = None):
    """Link probability for one difference vector (1-d ``x``) or a batch (2-d).

    Passing ``rng`` selects train mode, which samples dropout masks from it;
    without it the network runs in inference mode. Returns ``(p, cache)``
    where ``p`` is a float for 1-d input and an array for a batch.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise DimensionMismatch(
            f"input has {X.shape[-1]} features, model expects {model.input_dim}"
        )
    train = rng is not None and model.dropout_rate > 0.0
    keep = 1.0 - model.dropout_rate

    z1 = X @ model.W1.T + model.b1
    a1 = np.maximum(z1, 0.0)
    mask1 = None
    if train:
        mask1 = (rng.random(a1.shape) < keep) / keep
        a1 = a1 * mask1
    t2 = np.tanh(a1 @ model.W2.T + model.b2)
    a2, mask2 = t2, None
    if train:
        mask2 = (rng.random(t2.shape) < keep) / keep
        a2 = t2 * mask2
    p = _sigmoid(a2 @ model.W3[0] + model.b3)
    cache = ForwardCache(X, z1, a1, mask1, a2, t2, mask2, p)
    return (float(p[0]) if single else p), cache


def predict(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Inference-mode probabilities for a batch of difference vectors."""
    p, _ = forward(model, np.atleast_2d(X))
    return p


def bce_loss(p, label):
    """Binary cross-entropy with ``p`` clamped to ``[1e-7, 1 - 1e-7]``."""
    p = np.clip(p, _P_CLAMP, 1.0 - _P_CLAMP)
    loss = -(label * np.log(p) + (1 - label) * np.log1p(-p))
    return float(loss) if np.ndim(loss) == 0 else loss


def backward(model: MlpModel, cache: ForwardCache, label) -> dict[str, np.ndarray]:
    """Gradients of the BCE loss w.r.t. every parameter.

    For a batch, gradients are averaged over the rows. The dropout masks
    stored in ``cache`` are reused.
    """
    X = cache.x
    n = X.shape[0]
    if (
        X.shape[1] != model.input_dim
        or cache.z1.shape != (n, model.h1)
        or cache.t2.shape != (n, model.h2)
    ):
        raise StaleCache("cache does not match the model's layer sizes")
    y = np.broadcast_to(np.asarray(label, dtype=np.float64), (n,))

    dz3 = (cache.p - y) / n  # sigmoid + BCE
    grads = {"W3": (dz3 @ cache.a2)[None, :], "b3": np.asarray(dz3.sum())}
    da2 = np.outer(dz3, model.W3[0])
    if cache.mask2 is not None:
        da2 = da2 * cache.mask2
    dz2 = da2 * (1.0 - cache.t2**2)
    grads["W2"] = dz2.T @ cache.a1
    grads["b2"] = dz2.sum(axis=0)
    da1 = dz2 @ model.W2
    if cache.mask1 is not None:
        da1 = da1 * cache.mask1
    dz1 = da1 * (cache.z1 > 0)
    grads["W1"] = dz1.T @ X
    grads["b1"] = dz1.sum(axis=0)
    return {name: grads[name] for name in PARAM_NAMES}


# -- training ---------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 50
    batch_size: int = 64
    negative_ratio: int = 1
    seed: int = 0
    h1: int = 256
    h2: int = 64
    dropout_rate: float = 0.2
    mode: str = "full_overlap"  # or "split"
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.epochs < 0 or self.batch_size <= 0 or self.negative_ratio <= 0:
            raise ValueError("epochs >= 0, batch_size > 0 and negative_ratio > 0 required")
        if self.mode not in ("full_overlap", "split"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "split" and not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")

    @classmethod
    def from_dict(cls, data: Mapping) -> "TrainConfig":
        known = cls.__dataclass_fields__
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls(
            {k: np.zeros_like(p, dtype=np.float64) for k, p in params.items()},
            {k: np.zeros_like(p, dtype=np.float64) for k, p in params.items()},
        )


def adam_step(params, grads, state: AdamState, config: TrainConfig):
    """One Adam update. Returns ``(new_params, new_state)``; inputs are untouched."""
    t = state.t + 1
    b1, b2 = config.beta1, config.beta2
    new_params, m, v = {}, {}, {}
    for k, theta in params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        m[k] = b1 * state.m[k] + (1 - b1) * g
        v[k] = b2 * state.v[k] + (1 - b2) * g * g
        m_hat = m[k] / (1 - b1**t)
        v_hat = v[k] / (1 - b2**t)
        new_params[k] = theta - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return new_params, AdamState(m, v, t)


@dataclass(frozen=True)
class TrainingPair:
    diff: np.ndarray
    label: int
    source_id: str = field(default="", compare=False)
    target_id: str = field(default="", compare=False)


def split_sources(
    dataset: TaskDataset, train_fraction: float, seed: int
) -> tuple[list[str], list[str]]:
    """Seeded partition of source ids into (train, eval)."""
    ids = dataset.source_ids
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = min(len(ids) - 1, max(1, round(train_fraction * len(ids))))
    train_ids = sorted(order[:n_train])
    eval_ids = sorted(order[n_train:])
    return [ids[i] for i in train_ids], [ids[i] for i in eval_ids]


def _seeds(seed: int) -> tuple[np.random.Generator, ...]:
    # independent streams: (split, sampling, init, shuffle/dropout)
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))


def sample_pairs(
    dataset: TaskDataset,
    vectors: Mapping[str, DocumentVector] | tuple[Mapping, Mapping],
    config: TrainConfig,
    rng: np.random.Generator | None = None,
) -> list[TrainingPair]:
    """One positive per link plus ``negative_ratio`` seeded negatives each.

    Negatives keep the source and draw a target uniformly from the targets
    not linked to it. ``vectors`` is either one id -> vector map or a pair
    ``(source_vectors, target_vectors)`` when ids overlap between roles.
    In split mode only links of training sources are used.
    """
    src_vecs, tgt_vecs = vectors if isinstance(vectors, tuple) else (vectors, vectors)
    split_rng, sample_rng, _, _ = _seeds(config.seed)
    rng = rng or sample_rng
    links = dataset.links
    if config.mode == "split":
        train_ids, _ = split_sources(dataset, config.train_fraction, config.seed)
        keep = set(train_ids)
        links = tuple(l for l in links if l[0] in keep)

    target_ids = dataset.target_ids
    excluded = dataset.excluded_pairs
    linked = dataset.links_by_source
    pairs: list[TrainingPair] = []
    candidates: dict[str, list[str]] = {}
    for s, t in links:
        src = src_vecs[s]
        pairs.append(TrainingPair(diff_vector(src, tgt_vecs[t]), 1, s, t))
        if s not in candidates:
            candidates[s] = [
                c for c in target_ids if c not in linked[s] and (s, c) not in excluded
            ]
        pool = candidates[s]
        if not pool:
            raise NoNegativesAvailable(f"source {s!r} is linked to every target")
        for j in rng.integers(0, len(pool), size=config.negative_ratio):
            neg = pool[j]
            pairs.append(TrainingPair(diff_vector(src, tgt_vecs[neg]), 0, s, neg))
    return pairs


def train_on_pairs(
    pairs: Sequence[TrainingPair],
    config: TrainConfig,
    input_dim: int | None = None,
) -> tuple[MlpModel, list[float]]:
    """Mini-batch Adam on prepared pairs. Returns the model and per-epoch mean loss."""
    _, _, init_rng, shuffle_rng = _seeds(config.seed)
    if input_dim is None:
        if not pairs:
            raise ValueError("input_dim required when there are no pairs")
        input_dim = pairs[0].diff.shape[0]
    model = MlpModel.initialize(
        input_dim, config.h1, config.h2, init_rng, config.dropout_rate
    )
    if config.epochs == 0 or not pairs:
        return model, []
    X = np.vstack([p.diff for p in pairs])
    y = np.array([p.label for p in pairs], dtype=np.float64)
    params = model.parameters()
    params = {k: np.array(v, copy=True) for k, v in params.items()}
    state = AdamState.zeros_like(params)
    history = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(y))
        losses = []
        for start in range(0, len(y), config.batch_size):
            idx = order[start:start + config.batch_size]
            current = model.with_parameters(params)
            p, cache = forward(current, X[idx], rng=shuffle_rng)
            losses.append(float(np.mean(bce_loss(p, y[idx]))))
            grads = backward(current, cache, y[idx])
            params, state = adam_step(params, grads, state, config)
        history.append(float(np.mean(losses)))
        logger.debug("epoch %d: loss %.5f", epoch + 1, history[-1])
    return model.with_parameters(params), history


def train(
    dataset: TaskDataset,
    vectors: Mapping[str, DocumentVector] | tuple[Mapping, Mapping],
    config: TrainConfig,
) -> tuple[MlpModel, list[float]]:
    pairs = sample_pairs(dataset, vectors, config)
    return train_on_pairs(pairs, config, input_dim=pairs[0].diff.shape[0])


# -- persistence ------------------------------------------------------------


def model_to_dict(model: MlpModel) -> dict:
    return {
        "input_dim": model.input_dim,
        "h1": model.h1,
        "h2": model.h2,
        "dropout_rate": model.dropout_rate,
        "W1": model.W1.tolist(),
        "b1": model.b1.tolist(),
        "W2": model.W2.tolist(),
        "b2": model.b2.tolist(),
        "W3": model.W3.tolist(),
        "b3": model.b3,
    }


def save_model(model: MlpModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> MlpModel:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedModelFile(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise MalformedModelFile(f"{path}: expected a JSON object")
    missing = {"input_dim", "h1", "h2", "dropout_rate", *PARAM_NAMES} - set(data)
    if missing:
        raise MalformedModelFile(f"{path}: missing fields {sorted(missing)}")
    try:
        arrays = {}
        for name in PARAM_NAMES[:-1]:
            arr = np.array(data[name], dtype=np.float64)
            if arr.dtype == object:
                raise ShapeMismatch(f"{name} is a ragged array")
            arrays[name] = arr
        return MlpModel(
            int(data["input_dim"]), int(data["h1"]), int(data["h2"]),
            b3=float(data["b3"]), dropout_rate=float(data["dropout_rate"]), **arrays,
        )
    except ShapeMismatch:
        raise
    except (TypeError, ValueError) as exc:
        if "inhomogeneous" in str(exc):
            raise ShapeMismatch(f"{path}: ragged parameter array") from None
        raise MalformedModelFile(f"{path}: {exc}") from None
