"""Byte budgets and activation selection inside a contact window."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .orbit import ContactWindow

RECORD_HEADER_BYTES = 64
BYTES_PER_ELEMENT = 8

ORIGINS = ("labeled", "pseudo", "interpolated")
POLICIES = ("random", "class-cycling-largest")


def record_size(n_elements: int) -> int:
    return n_elements * BYTES_PER_ELEMENT + RECORD_HEADER_BYTES


def counts_bytes(n_classes: int) -> int:
    """Cost of uploading one satellite's per-class counts."""
    return 4 * n_classes


@dataclass(frozen=True)
class ActivationRecord:
    features: np.ndarray
    label: np.ndarray  # class distribution
    source_satellite: int = -1
    origin: str = "labeled"

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        label = np.asarray(self.label, dtype=np.float64)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "label", label)
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")
        if np.any(label < -1e-12) or abs(label.sum() - 1.0) > 1e-9:
            raise ValueError("label must be a class distribution")

    @property
    def class_hint(self) -> int:
        return int(np.argmax(self.label))

    @property
    def magnitude(self) -> float:
        return float(np.linalg.norm(self.features))

    @property
    def size_bytes(self) -> int:
        return record_size(self.features.size)


@dataclass
class TransferBudget:
    """Running byte counters for one window, one satellite."""

    window: ContactWindow
    bytes_down: int = 0
    bytes_up: int = 0
    used_down: int = field(default=0)
    used_up: int = field(default=0)

    @classmethod
    def from_window(cls, window: ContactWindow) -> "TransferBudget":
        down, up = budget_bytes(window)
        return cls(window, down, up)

    @property
    def remaining_down(self) -> int:
        return max(self.bytes_down - self.used_down, 0)

    @property
    def remaining_up(self) -> int:
        return max(self.bytes_up - self.used_up, 0)

    def charge_down(self, n: int, force: bool = False) -> bool:
        if not force and n > self.remaining_down:
            return False
        self.used_down += n
        return True

    def charge_up(self, n: int) -> bool:
        if n > self.remaining_up:
            return False
        self.used_up += n
        return True


def budget_bytes(window: ContactWindow) -> tuple[int, int]:
    """``(satellite->GS, GS->satellite)`` byte budgets for a window."""
    d = window.duration_s
    return int(window.downlink_bps * d // 8), int(window.uplink_bps * d // 8)


def _greedy_fill(order: Sequence[int], pool: Sequence[ActivationRecord], budget: int) -> list[int]:
    used = 0
    picked = []
    for i in order:
        size = pool[i].size_bytes
        if used + size > budget:
            break
        used += size
        picked.append(i)
    return picked


def class_cycling_order(pool: Sequence[ActivationRecord]) -> list[int]:
    """Visit classes 0..M-1 in turn, each time taking that class's largest
    remaining record; exhausted classes are skipped."""
    if not pool:
        return []
    by_class: dict[int, list[int]] = {}
    for i, rec in enumerate(pool):
        by_class.setdefault(rec.class_hint, []).append(i)
    for idx in by_class.values():
        # largest magnitude first; stable on index for equal magnitudes
        idx.sort(key=lambda i: (-pool[i].magnitude, i))
    order = []
    classes = sorted(by_class)
    pos = dict.fromkeys(classes, 0)
    while len(order) < len(pool):
        for m in classes:
            if pos[m] < len(by_class[m]):
                order.append(by_class[m][pos[m]])
                pos[m] += 1
    return order


def select_for_upload(
    pool: Sequence[ActivationRecord],
    budget: int,
    policy: str = "class-cycling-largest",
    rng: np.random.Generator | None = None,
) -> list[ActivationRecord]:
    """Greedy fill of ``budget`` bytes, stopping at the first record that does not fit."""
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    if any(r.origin == "interpolated" for r in pool):
        raise ValueError("only labeled and pseudo-labeled records can be uploaded")
    if policy == "random":
        if rng is None:
            raise ValueError("random policy needs an rng")
        order = list(rng.permutation(len(pool)))
    else:
        order = class_cycling_order(pool)
    return [pool[i] for i in _greedy_fill(order, pool, budget)]
