import numpy as np
import pytest

from leosplit.data import (
    Dataset,
    GaussianMixtureTask,
    group_sizes,
    load_csv_dataset,
    partition_dataset,
)


def balanced_pool(n=3000, m=10, seed=0):
    return GaussianMixtureTask(n_classes=m, seed=seed).sample_balanced(n, np.random.default_rng(seed))


def test_task_shapes_and_determinism():
    task = GaussianMixtureTask(seed=3)
    a = task.sample(50, np.random.default_rng(1))
    b = GaussianMixtureTask(seed=3).sample(50, np.random.default_rng(1))
    assert a.x.shape == (50, 32)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)


def test_rotation_is_orthogonal():
    q = GaussianMixtureTask(seed=0).rotation
    np.testing.assert_allclose(q @ q.T, np.eye(32), atol=1e-12)


def test_balanced_sampling():
    d = balanced_pool(1000)
    assert np.all(np.bincount(d.y) == 100)


def test_nearest_mean_is_accurate_at_default_separation():
    task = GaussianMixtureTask(seed=0)
    d = task.sample_balanced(2000, np.random.default_rng(0))
    latent = d.x @ task.rotation
    dist = ((latent[:, None, :8] - task.means[None]) ** 2).sum(-1)
    assert np.mean(dist.argmin(1) == d.y) > 0.9


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros(2))


def test_group_sizes_ratios():
    assert group_sizes(700, 3, (1, 2, 4)) == [100, 200, 400]
    sizes = group_sizes(1400, 6, (1, 2, 4))
    assert sizes == [100, 100, 200, 200, 400, 400]


def test_group_sizes_non_divisible():
    sizes = group_sizes(1000, 5, (1, 2, 4))
    # groups of sizes 2, 2, 1 (contiguous)
    assert sizes[0] == sizes[1] and sizes[2] == sizes[3]
    assert sizes[2] == 2 * sizes[0] and sizes[4] == 4 * sizes[0]
    assert sum(sizes) <= 1000


def test_group_sizes_errors():
    with pytest.raises(ValueError):
        group_sizes(10, 0, (1,))
    with pytest.raises(ValueError):
        group_sizes(10, 2, (1, 2, 4))


def test_partition_ratios_and_labels():
    shards = partition_dataset(balanced_pool(), 3, 0.5, (1, 2, 4), 0.1, np.random.default_rng(0), n_total=2100)
    sizes = [s.size for s in shards]
    assert sizes == [300, 600, 1200]
    for s in shards:
        assert len(s.labeled) == round(0.1 * s.size)


def test_partition_full_labeling_leaves_no_unlabeled():
    shards = partition_dataset(balanced_pool(), 4, 0.5, (1,), 1.0, np.random.default_rng(0))
    assert all(len(s.unlabeled_x) == 0 for s in shards)


def test_partition_at_least_one_label():
    shards = partition_dataset(balanced_pool(200), 4, 0.5, (1,), 0.001, np.random.default_rng(0))
    assert all(len(s.labeled) >= 1 for s in shards)


def test_partition_no_sample_reused():
    pool = balanced_pool()
    shards = partition_dataset(pool, 5, 0.3, (1,), 0.2, np.random.default_rng(1), n_total=2000)
    rows = np.concatenate([np.r_[s.labeled.x, s.unlabeled_x] for s in shards])
    assert len(np.unique(rows, axis=0)) == len(rows) == 2000


def test_partition_deterministic():
    pool = balanced_pool()
    a = partition_dataset(pool, 5, 0.3, (1,), 0.2, np.random.default_rng(1))
    b = partition_dataset(pool, 5, 0.3, (1,), 0.2, np.random.default_rng(1))
    for s, t in zip(a, b):
        assert np.array_equal(s.labeled.x, t.labeled.x) and np.array_equal(s.unlabeled_y, t.unlabeled_y)


def test_large_alpha_approaches_global_mix():
    pool = balanced_pool(6000)
    worst = 0.0
    for seed in range(20):
        shards = partition_dataset(pool, 5, 1000.0, (1,), 0.1, np.random.default_rng(seed), n_total=3000)
        for s in shards:
            y = np.r_[s.labeled.y, s.unlabeled_y]
            worst = max(worst, np.abs(np.bincount(y, minlength=10) / len(y) - 0.1).max())
    assert worst < 0.05


def test_small_alpha_is_skewed():
    shards = partition_dataset(balanced_pool(6000), 5, 0.1, (1,), 0.1, np.random.default_rng(0), n_total=3000)
    tops = [np.bincount(np.r_[s.labeled.y, s.unlabeled_y], minlength=10).max() / s.size for s in shards]
    assert np.mean(tops) > 0.4


def test_partition_errors():
    pool = balanced_pool(100)
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        partition_dataset(pool, 3, 0.0, (1,), 0.1, rng)
    with pytest.raises(ValueError):
        partition_dataset(pool, 3, 0.5, (1,), 0.0, rng)
    with pytest.raises(ValueError):
        partition_dataset(pool, 3, 0.5, (1,), 0.1, rng, n_total=101)
    with pytest.raises(ValueError):
        partition_dataset(pool, 200, 0.5, (1,), 0.1, rng)


def test_csv_dataset(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("label,f0,f1\n1,0.5,2\n0,-1,3\n", encoding="utf-8")
    d = load_csv_dataset(p)
    assert d.x.shape == (2, 2) and list(d.y) == [1, 0]
    bad = tmp_path / "bad.csv"
    bad.write_text("1,0.5\n0,x\n", encoding="utf-8")
    with pytest.raises(ValueError, match=":2:"):
        load_csv_dataset(bad)
