"""Client-side semi-supervised training pieces.

The student is a pair ``(client, head)``: the satellite's client sub-model and
its auxiliary head. The teacher is a pair of the same shape holding an
exponential moving average of the student weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn

THRESHOLD_FLOOR = 0.01


@dataclass(frozen=True)
class PseudoLabeled:
    features: np.ndarray
    pseudo_label: int
    confidence: float


@dataclass(frozen=True)
class ClassCounts:
    labeled: np.ndarray  # per class, int
    pseudo: np.ndarray  # per class, int

    def __post_init__(self):
        object.__setattr__(self, "labeled", np.asarray(self.labeled, dtype=np.int64))
        object.__setattr__(self, "pseudo", np.asarray(self.pseudo, dtype=np.int64))
        if self.labeled.shape != self.pseudo.shape or self.labeled.ndim != 1:
            raise ValueError("labeled and pseudo counts must be equal-length vectors")
        if np.any(self.labeled < 0) or np.any(self.pseudo < 0):
            raise ValueError("counts must be nonnegative")

    @property
    def total(self) -> np.ndarray:
        return self.labeled + self.pseudo

    @classmethod
    def zeros(cls, n_classes: int) -> "ClassCounts":
        return cls(np.zeros(n_classes, np.int64), np.zeros(n_classes, np.int64))


@dataclass(frozen=True)
class ThresholdTable:
    tau: np.ndarray  # (N, M)
    base: float
    cap: float
    class_dist: np.ndarray | None = None  # q~_t(m), when computed from counts
    size_ratio: np.ndarray | None = None  # r~_{i,t}

    def for_satellite(self, i: int) -> np.ndarray:
        return self.tau[i]

    @classmethod
    def constant(cls, n_sats: int, n_classes: int, base: float, cap: float) -> "ThresholdTable":
        return cls(np.full((n_sats, n_classes), float(base)), base, cap)


@dataclass(frozen=True)
class SslHyper:
    lambda_u: float = 1.0
    lambda_v: float = 0.1
    phi: float = 0.5
    ema_decay: float = 0.99
    aug_strength: float = 0.05
    normalize_features: bool = True

    def __post_init__(self):
        if self.lambda_u < 0 or self.lambda_v < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.phi <= 0:
            raise ValueError("temperature phi must be positive")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in [0, 1)")


def weak_augment(x: np.ndarray, rng: np.random.Generator, strength: float = 0.05) -> np.ndarray:
    """Uniform jitter in ``[-strength, strength]``; with probability 0.5 per row
    the jitter is added to a one-position circular shift of the row instead.

    The shifted displacement is clipped so ``|aug(x) - x| <= strength`` holds
    coordinatewise. Strength 0 is the identity.
    """
    x = np.asarray(x, dtype=np.float64)
    if strength == 0:
        return x.copy()
    batch = x[None, :] if x.ndim == 1 else x
    noise = rng.uniform(-strength, strength, size=batch.shape)
    shift = rng.random(batch.shape[0]) < 0.5
    step = np.where(shift[:, None], np.roll(batch, 1, axis=1) - batch + noise, noise)
    out = batch + np.clip(step, -strength, strength)
    return out[0] if x.ndim == 1 else out


def ema_update(teacher: nn.SubModel, student: nn.SubModel, decay: float) -> nn.SubModel:
    if not teacher.same_architecture(student):
        raise nn.DimensionError("teacher and student architectures differ")
    return teacher.with_params(
        [decay * t + (1.0 - decay) * s for t, s in zip(teacher.params(), student.params())]
    )


def _check_batch(x, targets):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch must be a nonempty 2-D array")
    if len(targets) != x.shape[0]:
        raise ValueError("features and targets differ in length")
    return x


def supervised_loss(
    client: nn.SubModel,
    head: nn.SubModel,
    x: np.ndarray,
    targets: np.ndarray,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean cross-entropy of ``head(client(x))`` against class distributions.

    Returns ``(loss, client_grads, head_grads)``.
    """
    z, c_cache = nn.forward(client, x)
    logits, h_cache = nn.forward(head, z)
    loss, g = nn.softmax_cross_entropy(logits, targets)
    head_grads, gz = nn.backward(head, h_cache, g)
    client_grads, _ = nn.backward(client, c_cache, gz)
    return loss, client_grads, head_grads


def auxiliary_loss(
    client: nn.SubModel,
    head: nn.SubModel,
    x: np.ndarray,
    labels: Sequence[int],
    rng: np.random.Generator,
    strength: float = 0.05,
):
    """Cross-entropy on weakly augmented labeled data through student + auxiliary head."""
    x = _check_batch(x, labels)
    targets = nn.one_hot(labels, head.out_dim)
    return supervised_loss(client, head, weak_augment(x, rng, strength), targets)


def unsupervised_loss(
    client: nn.SubModel,
    head: nn.SubModel,
    batch: Sequence[PseudoLabeled] | tuple[np.ndarray, np.ndarray],
    rng: np.random.Generator,
    strength: float = 0.05,
):
    """Same form as :func:`auxiliary_loss`, with pseudo-labels as targets.

    ``batch`` is either a list of :class:`PseudoLabeled` or an ``(x, labels)`` pair.
    """
    if isinstance(batch, tuple):
        x, labels = batch
    else:
        if not batch:
            raise ValueError("batch must be nonempty")
        x = np.stack([b.features for b in batch])
        labels = [b.pseudo_label for b in batch]
    return auxiliary_loss(client, head, x, labels, rng, strength)


def population_std(values: np.ndarray) -> float:
    return float(np.std(values))


def compute_thresholds(
    all_counts: Sequence[ClassCounts],
    base: float,
    cap: float = 0.95,
    use_class: bool = True,
    use_quantity: bool = True,
    floor: float = THRESHOLD_FLOOR,
) -> ThresholdTable:
    """Per-satellite, per-class pseudo-label thresholds from pooled class counts.

    ``tau[i, m] = r[i] * (q[m] + base - std(q))`` clipped to ``[floor, cap]``,
    where ``q`` is the constellation-wide class distribution and ``r[i]`` the
    share of samples held by satellite ``i``. ``use_class=False`` drops the
    ``q - std(q)`` term; ``use_quantity=False`` drops the ``r`` factor.
    """
    if not all_counts:
        raise ValueError("need counts from at least one satellite")
    theta = np.stack([c.total for c in all_counts]).astype(np.float64)  # (N, M)
    if theta.shape[1] < 1:
        raise ValueError("need at least one class")
    grand = theta.sum()
    if grand <= 0:
        raise ValueError("all counts are zero; class distribution undefined")
    q = theta.sum(axis=0) / grand
    r = theta.sum(axis=1) / grand
    class_term = q + base - population_std(q) if use_class else np.full_like(q, base)
    ratio = r if use_quantity else np.ones_like(r)
    tau = ratio[:, None] * class_term[None, :]
    tau = np.minimum(tau, cap)
    tau = np.maximum(tau, floor)
    return ThresholdTable(tau=tau, base=base, cap=cap, class_dist=q, size_ratio=r)


def teacher_probs(client: nn.SubModel, head: nn.SubModel, x: np.ndarray) -> np.ndarray:
    return nn.softmax(nn.predict(head, nn.predict(client, x)))


def pseudo_label_batch(
    client: nn.SubModel, head: nn.SubModel, x: np.ndarray, thresholds: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised :func:`pseudo_label`. Returns ``(admitted_mask, labels, confidences)``."""
    p = teacher_probs(client, head, x)
    labels = p.argmax(axis=1)
    conf = p[np.arange(len(labels)), labels]
    return conf >= np.asarray(thresholds)[labels], labels, conf


def pseudo_label(
    client: nn.SubModel, head: nn.SubModel, x: np.ndarray, thresholds: np.ndarray
) -> PseudoLabeled | None:
    """Label ``x`` with the teacher's argmax class, or return ``None`` when the
    confidence falls below that class's threshold (a low-confidence sample)."""
    x = np.asarray(x, dtype=np.float64)
    p = teacher_probs(client, head, x)
    m = int(p.argmax())
    if p[m] >= thresholds[m]:
        return PseudoLabeled(x, m, float(p[m]))
    return None


def contrastive_loss(
    student_feats: np.ndarray, teacher_feats: np.ndarray, phi: float
) -> tuple[float, np.ndarray]:
    """InfoNCE over low-confidence samples, summed over anchors.

    The positive for anchor ``k`` is the teacher feature of the same sample;
    negatives are the student features of the other samples. Returns the loss
    and its gradient with respect to ``student_feats``.
    """
    z = np.asarray(student_feats, dtype=np.float64)
    zt = np.asarray(teacher_feats, dtype=np.float64)
    if z.shape != zt.shape:
        raise ValueError("student and teacher feature lists differ in length")
    if z.ndim != 2 or z.shape[0] < 1:
        raise ValueError("need at least one feature pair")
    n = z.shape[0]
    s = (z @ z.T) / phi
    pos = np.einsum("kd,kd->k", z, zt) / phi
    logits = s.copy()
    np.fill_diagonal(logits, pos)  # column k of row k holds the positive
    mx = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - mx)
    denom = e.sum(axis=1, keepdims=True)
    loss = float(np.sum(np.log(denom[:, 0]) + mx[:, 0] - pos))
    w = e / denom  # softmax weights per anchor row
    w_pos = np.diag(w).copy()
    w_neg = w.copy()
    np.fill_diagonal(w_neg, 0.0)
    # d/dz_k of the positive term and of anchor k's own negatives
    grad = ((w_pos - 1.0)[:, None] * zt + w_neg @ z) / phi
    # z_j also appears as a negative inside other anchors' denominators
    grad += (w_neg.T @ z) / phi
    return loss, grad


def normalized_contrastive_loss(
    student_feats: np.ndarray, teacher_feats: np.ndarray, phi: float, eps: float = 1e-12
) -> tuple[float, np.ndarray]:
    """:func:`contrastive_loss` on unit-normalised features (cosine scores).

    Raw dot products of ReLU activations are unbounded and the summed loss
    drives feature norms to overflow during training; on the unit sphere the
    scores stay within ``[-1/phi, 1/phi]``.
    """
    z = np.asarray(student_feats, dtype=np.float64)
    zt = np.asarray(teacher_feats, dtype=np.float64)
    nz = np.maximum(np.linalg.norm(z, axis=1, keepdims=True), eps)
    nt = np.maximum(np.linalg.norm(zt, axis=1, keepdims=True), eps)
    u = z / nz
    loss, gu = contrastive_loss(u, zt / nt, phi)
    grad = (gu - u * np.sum(u * gu, axis=1, keepdims=True)) / nz
    return loss, grad


def client_loss(loss_x: float, loss_u: float, loss_v: float, lambda_u: float, lambda_v: float) -> float:
    return loss_x + lambda_u * loss_u + lambda_v * loss_v
