"""Server-side activation interpolation steered toward a target class mix."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .link import ActivationRecord

# MSE values this close to the minimum count as ties (lowest index wins).
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class InterpConfig:
    J: int = 0
    beta: float = 0.75
    target_dist: np.ndarray | None = None

    def __post_init__(self):
        if self.J < 0:
            raise ValueError("J must be nonnegative")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.target_dist is not None:
            t = np.asarray(self.target_dist, dtype=np.float64)
            object.__setattr__(self, "target_dist", t)
            if np.any(t < 0) or abs(t.sum() - 1.0) > 1e-9:
                raise ValueError("target_dist must sum to 1")


def class_mse(dist_a: Sequence[float], dist_b: Sequence[float]) -> float:
    a = np.asarray(dist_a, dtype=np.float64)
    b = np.asarray(dist_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("distributions differ in length")
    return float(np.mean((a - b) ** 2))


def fractional_counts(records: Sequence[ActivationRecord], n_classes: int | None = None) -> np.ndarray:
    """Per-class mass; soft labels contribute fractionally."""
    if not records:
        return np.zeros(n_classes or 0)
    return np.sum([r.label for r in records], axis=0)


def choose_partner(
    labels: np.ndarray, anchor: int, alpha: float, target: np.ndarray
) -> tuple[int, np.ndarray]:
    """Index of the partner whose mix brings the class distribution closest to
    ``target``, plus the per-candidate MSE vector (``inf`` at the anchor)."""
    gamma = labels.sum(axis=0)
    hat = (gamma + alpha * labels[anchor])[None, :] + (1.0 - alpha) * labels
    q = hat / hat.sum(axis=1, keepdims=True)
    mse = np.mean((q - target[None, :]) ** 2, axis=1)
    mse[anchor] = np.inf
    best = np.flatnonzero(mse <= mse.min() + TIE_TOLERANCE)[0]
    return int(best), mse


def interpolate_round(
    selected: Sequence[ActivationRecord],
    cfg: InterpConfig,
    rng: np.random.Generator,
) -> list[ActivationRecord]:
    """Grow ``selected`` by ``cfg.J`` mixed records.

    Each step draws an anchor uniformly from the current set, then
    ``alpha ~ Beta(beta, beta)``, and mixes the anchor with whichever other
    record keeps the set's class distribution closest to ``cfg.target_dist``.
    New records join the set and can be drawn in later steps.
    """
    out = list(selected)
    if cfg.J == 0:
        return out
    if len(out) < 2:
        raise ValueError("interpolation needs at least two records")
    n_classes = out[0].label.size
    target = (
        np.full(n_classes, 1.0 / n_classes) if cfg.target_dist is None else cfg.target_dist
    )
    if target.size != n_classes:
        raise ValueError("target_dist length does not match label length")
    n0 = len(out)
    feats = np.empty((n0 + cfg.J, out[0].features.size))
    labels = np.empty((n0 + cfg.J, n_classes))
    feats[:n0] = [r.features for r in out]
    labels[:n0] = [r.label for r in out]
    for j in range(cfg.J):
        n = n0 + j
        k1 = int(rng.integers(n))
        alpha = float(rng.beta(cfg.beta, cfg.beta))
        k2, _ = choose_partner(labels[:n], k1, alpha, target)
        feats[n] = alpha * feats[k1] + (1.0 - alpha) * feats[k2]
        labels[n] = alpha * labels[k1] + (1.0 - alpha) * labels[k2]
        out.append(ActivationRecord(feats[n].copy(), labels[n].copy(), -1, "interpolated"))
    return out
