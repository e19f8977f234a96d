"""Dense layers with hand-written backpropagation.

Tensors are plain ``numpy.ndarray`` objects in float64. Batched inputs have
shape ``(batch, features)``; a 1-D input is treated as a batch of one and the
output keeps the 1-D shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DENSE_RELU = "dense-relu"
DENSE_LINEAR = "dense-linear"
LAYER_KINDS = (DENSE_RELU, DENSE_LINEAR)

CUT_ROLES = ("client", "auxiliary-head", "server", "global")


class DimensionError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    pass


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    kind: str = DENSE_RELU

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise DimensionError(
                f"weights {self.weights.shape} and bias {self.bias.shape} disagree"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class SubModel:
    """An ordered chain of dense layers owned by one side of the cut."""

    layers: tuple[Layer, ...]
    role: str = "client"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise DimensionError("a sub-model needs at least one layer")
        if self.role not in CUT_ROLES:
            raise ValueError(f"unknown cut role {self.role!r}")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise DimensionError(
                    f"layer chain broken: {prev.out_dim} -> {nxt.in_dim}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def n_params(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)

    def params(self) -> list[np.ndarray]:
        """Flat parameter list ``[W0, b0, W1, b1, ...]`` (views, do not mutate)."""
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.bias))
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "SubModel":
        if len(params) != 2 * len(self.layers):
            raise DimensionError("parameter list does not match layer count")
        layers = []
        for i, layer in enumerate(self.layers):
            w, b = params[2 * i], params[2 * i + 1]
            if w.shape != layer.weights.shape or b.shape != layer.bias.shape:
                raise DimensionError("parameter shape mismatch")
            layers.append(Layer(np.array(w, dtype=np.float64), np.array(b, dtype=np.float64), layer.kind))
        return SubModel(tuple(layers), self.role)

    def copy(self, role: str | None = None) -> "SubModel":
        return SubModel(
            tuple(Layer(l.weights.copy(), l.bias.copy(), l.kind) for l in self.layers),
            self.role if role is None else role,
        )

    def same_architecture(self, other: "SubModel") -> bool:
        return len(self.layers) == len(other.layers) and all(
            a.weights.shape == b.weights.shape and a.kind == b.kind
            for a, b in zip(self.layers, other.layers)
        )


@dataclass
class Cache:
    """Intermediate values from :func:`forward`, consumed by :func:`backward`."""

    model: SubModel
    inputs: list[np.ndarray] = field(default_factory=list)
    pre_acts: list[np.ndarray] = field(default_factory=list)
    squeeze: bool = False


def init_layer(in_dim: int, out_dim: int, kind: str, rng: np.random.Generator) -> Layer:
    bound = 1.0 / np.sqrt(in_dim)
    w = rng.uniform(-bound, bound, size=(out_dim, in_dim))
    b = rng.uniform(-bound, bound, size=out_dim)
    return Layer(w, b, kind)


def init_submodel(
    dims: Sequence[int],
    rng: np.random.Generator,
    role: str = "client",
    last_linear: bool = False,
) -> SubModel:
    """Build a chain ``dims[0] -> dims[1] -> ... -> dims[-1]``.

    Every layer is ReLU except the last when ``last_linear`` is set.
    """
    if len(dims) < 2:
        raise DimensionError("need at least input and output dimensions")
    layers = []
    n = len(dims) - 1
    for i in range(n):
        kind = DENSE_LINEAR if (last_linear and i == n - 1) else DENSE_RELU
        layers.append(init_layer(dims[i], dims[i + 1], kind, rng))
    return SubModel(tuple(layers), role)


def identity_model(dim: int, role: str = "client") -> SubModel:
    return SubModel((Layer(np.eye(dim), np.zeros(dim), DENSE_LINEAR),), role)


def forward(model: SubModel, x: np.ndarray) -> tuple[np.ndarray, Cache]:
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.ndim != 2 or h.shape[1] != model.in_dim:
        raise DimensionError(f"input shape {x.shape} does not match in_dim {model.in_dim}")
    cache = Cache(model=model, squeeze=squeeze)
    for layer in model.layers:
        cache.inputs.append(h)
        z = h @ layer.weights.T + layer.bias
        cache.pre_acts.append(z)
        h = np.maximum(z, 0.0) if layer.kind == DENSE_RELU else z
    return (h[0] if squeeze else h), cache


def predict(model: SubModel, x: np.ndarray) -> np.ndarray:
    return forward(model, x)[0]


def backward(
    model: SubModel, cache: Cache, output_grad: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Return ``(param_grads, input_grad)``; ``param_grads`` follows :meth:`SubModel.params`."""
    if cache.model is not model or len(cache.inputs) != len(model.layers):
        raise StaleCacheError("cache was produced by a different model")
    g = np.asarray(output_grad, dtype=np.float64)
    if cache.squeeze:
        g = g[None, :]
    if g.shape != (cache.inputs[0].shape[0], model.out_dim):
        raise DimensionError(f"output_grad shape {np.shape(output_grad)} is wrong")
    grads: list[np.ndarray] = [None] * (2 * len(model.layers))  # type: ignore[list-item]
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if layer.kind == DENSE_RELU:
            g = g * (cache.pre_acts[i] > 0.0)
        grads[2 * i] = g.T @ cache.inputs[i]
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.weights
    return grads, (g[0] if cache.squeeze else g)


def sgd_step(model: SubModel, grads: Sequence[np.ndarray], learning_rate: float) -> SubModel:
    params = model.params()
    if len(grads) != len(params) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise DimensionError("gradient shapes do not match parameters")
    return model.with_params([p - learning_rate * g for p, g in zip(params, grads)])


def add_grads(a: Sequence[np.ndarray], b: Sequence[np.ndarray], scale: float = 1.0) -> list[np.ndarray]:
    return [x + scale * y for x, y in zip(a, b)]


def zero_grads(model: SubModel) -> list[np.ndarray]:
    return [np.zeros_like(p) for p in model.params()]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros(labels.shape + (n_classes,))
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


def softmax_cross_entropy(logits: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Cross-entropy of ``softmax(logits)`` against a class distribution.

    For a batch ``(B, M)`` the loss is the batch mean and the gradient is
    already divided by ``B``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if logits.shape != target.shape:
        raise DimensionError(f"logits {logits.shape} vs target {target.shape}")
    if np.any(target < 0) or not np.allclose(target.sum(axis=-1), 1.0, rtol=0, atol=1e-9):
        raise ValueError("target must be a probability distribution")
    logp = log_softmax(logits)
    grad = softmax(logits) - target
    if logits.ndim == 1:
        return float(-(target * logp).sum()), grad
    n = logits.shape[0]
    return float(-(target * logp).sum() / n), grad / n


def compose(*models: SubModel) -> SubModel:
    """Concatenate sub-models into one chain."""
    layers: list[Layer] = []
    for m in models:
        layers.extend(m.layers)
    return SubModel(tuple(layers), "global")
