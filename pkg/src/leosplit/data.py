"""Desk-scale datasets and non-IID partitioning across satellites."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray  # (n, d)
    y: np.ndarray  # (n,) int

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=np.float64))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.int64))
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise ValueError("features must be (n, d) and labels (n,)")

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx])


@dataclass(frozen=True)
class SatelliteData:
    labeled: Dataset
    unlabeled_x: np.ndarray
    # hidden ground truth for the unlabeled part, used only for diagnostics
    unlabeled_y: np.ndarray

    @property
    def size(self) -> int:
        return len(self.labeled) + len(self.unlabeled_x)


class GaussianMixtureTask:
    """Classes are Gaussian blobs in a low-dimensional informative subspace,
    buried among nuisance coordinates and mixed by a random rotation.

    ``separation`` sets the spread of class means, ``nuisance_scale`` the
    standard deviation of the uninformative coordinates.
    """

    def __init__(
        self,
        n_classes: int = 10,
        dim: int = 32,
        informative_dims: int = 8,
        separation: float = 3.0,
        nuisance_scale: float = 1.0,
        seed: int = 0,
    ):
        if not 0 < informative_dims <= dim:
            raise ValueError("informative_dims must lie in (0, dim]")
        rng = np.random.default_rng(seed)
        self.n_classes = n_classes
        self.dim = dim
        self.informative_dims = informative_dims
        self.means = rng.normal(size=(n_classes, informative_dims)) * separation / np.sqrt(2.0)
        self.nuisance_scale = nuisance_scale
        q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
        self.rotation = q * np.sign(np.diag(r))

    def sample(self, n: int, rng: np.random.Generator, class_probs=None) -> Dataset:
        probs = np.full(self.n_classes, 1.0 / self.n_classes) if class_probs is None else class_probs
        y = rng.choice(self.n_classes, size=n, p=probs)
        return self.sample_classes(y, rng)

    def sample_balanced(self, n: int, rng: np.random.Generator) -> Dataset:
        y = np.arange(n) % self.n_classes
        return self.sample_classes(rng.permutation(y), rng)

    def sample_classes(self, y: np.ndarray, rng: np.random.Generator) -> Dataset:
        y = np.asarray(y, dtype=np.int64)
        latent = np.empty((len(y), self.dim))
        k = self.informative_dims
        latent[:, :k] = self.means[y] + rng.normal(size=(len(y), k))
        latent[:, k:] = rng.normal(size=(len(y), self.dim - k)) * self.nuisance_scale
        return Dataset(latent @ self.rotation.T, y)


def load_csv_dataset(path: str | Path) -> Dataset:
    """Rows of ``label,f0,...,f{d-1}``; a header row is skipped if present."""
    rows = []
    labels = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if line_no == 1 and row[0].strip().lower() == "label":
                continue
            try:
                labels.append(int(row[0]))
                rows.append([float(c) for c in row[1:]])
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no samples")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: rows have differing feature counts")
    return Dataset(np.array(rows), np.array(labels))


def group_sizes(n_total: int, n_sats: int, ratios: Sequence[float]) -> list[int]:
    """Per-satellite sample counts. Satellites are split into ``len(ratios)``
    contiguous groups (sizes differ by at most one) and sized by group ratio."""
    if n_sats < 1:
        raise ValueError("need at least one satellite")
    ratios = [float(r) for r in ratios]
    if not ratios or any(r <= 0 for r in ratios) or len(ratios) > n_sats:
        raise ValueError("ratios must be positive and no more numerous than satellites")
    groups = [i * len(ratios) // n_sats for i in range(n_sats)]
    weights = np.array([ratios[g] for g in groups])
    raw = n_total * weights / weights.sum()
    sizes = np.floor(raw).astype(int)
    return [int(s) for s in sizes]


def _dirichlet_class_counts(size: int, props: np.ndarray, available: np.ndarray) -> np.ndarray:
    """Largest-remainder rounding of ``size * props``, capped by availability;
    any shortfall is taken from the classes with the most samples left."""
    raw = size * props
    counts = np.floor(raw).astype(int)
    rem = size - counts.sum()
    for m in np.argsort(-(raw - counts), kind="stable")[:rem]:
        counts[m] += 1
    counts = np.minimum(counts, available)
    short = size - counts.sum()
    while short > 0:
        slack = available - counts
        m = int(np.argmax(slack))
        if slack[m] <= 0:
            raise ValueError("dataset too small for requested satellite sizes")
        take = min(short, slack[m])
        counts[m] += take
        short -= take
    return counts


def partition_dataset(
    dataset: Dataset,
    n_sats: int,
    dirichlet_alpha: float,
    quantity_ratios: Sequence[float],
    labeling_rate: float,
    rng: np.random.Generator,
    n_classes: int | None = None,
    n_total: int | None = None,
) -> list[SatelliteData]:
    """Split ``dataset`` into per-satellite labeled/unlabeled shards.

    Each satellite's class mix is drawn from ``Dirichlet(alpha * 1_M)`` and its
    size follows ``quantity_ratios``. Within a satellite a ``labeling_rate``
    fraction keeps its labels (at least one sample). ``n_total`` caps how many
    samples are handed out; drawing from a larger pool lets skewed class mixes
    be honoured instead of being bent by exhausted classes.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if dirichlet_alpha <= 0:
        raise ValueError("dirichlet_alpha must be positive")
    if not 0.0 < labeling_rate <= 1.0:
        raise ValueError("labeling_rate must lie in (0, 1]")
    m = int(dataset.y.max()) + 1 if n_classes is None else n_classes
    if n_total is None:
        n_total = len(dataset)
    if n_total > len(dataset):
        raise ValueError("n_total exceeds dataset size")
    sizes = group_sizes(n_total, n_sats, quantity_ratios)
    if min(sizes) < 1:
        raise ValueError("quantity ratios leave a satellite without data")
    pools = [list(rng.permutation(np.flatnonzero(dataset.y == c))) for c in range(m)]
    out = []
    for size in sizes:
        props = rng.dirichlet(np.full(m, dirichlet_alpha))
        available = np.array([len(p) for p in pools])
        counts = _dirichlet_class_counts(size, props, available)
        idx = []
        for c in range(m):
            idx.extend(pools[c][: counts[c]])
            pools[c] = pools[c][counts[c]:]
        idx = rng.permutation(np.array(idx, dtype=np.int64))
        n_lab = min(max(1, int(round(labeling_rate * len(idx)))), len(idx))
        lab, unl = idx[:n_lab], idx[n_lab:]
        out.append(
            SatelliteData(
                labeled=dataset.subset(lab),
                unlabeled_x=dataset.x[unl],
                unlabeled_y=dataset.y[unl],
            )
        )
    return out
