import itertools

import numpy as np
import pytest

from leosplit.link import (
    ActivationRecord,
    TransferBudget,
    budget_bytes,
    class_cycling_order,
    counts_bytes,
    record_size,
    select_for_upload,
)
from leosplit.orbit import ContactWindow


def rec(cls, magnitude, m=3, dim=4, origin="labeled"):
    f = np.zeros(dim)
    f[0] = magnitude
    return ActivationRecord(f, np.eye(m)[cls], 0, origin)


def test_budget_100mbps_252s():
    down, up = budget_bytes(ContactWindow(0.0, 252.0, 100e6, 12e6))
    assert down == 3_150_000_000
    assert up == 378_000_000


def test_budget_scales_with_duration():
    a = budget_bytes(ContactWindow(0.0, 10.0, 8e3, 8e3))
    b = budget_bytes(ContactWindow(0.0, 20.0, 8e3, 8e3))
    assert b == (2 * a[0], 2 * a[1])


def test_budget_floors():
    assert budget_bytes(ContactWindow(0.0, 1.0, 15.0, 7.0)) == (1, 0)


def test_record_size_and_counts():
    assert record_size(64) == 576
    assert rec(0, 1.0, dim=4).size_bytes == 96
    assert counts_bytes(10) == 40


def test_record_validation():
    with pytest.raises(ValueError):
        ActivationRecord(np.zeros(2), np.array([0.5, 0.4]))
    with pytest.raises(ValueError):
        ActivationRecord(np.zeros(2), np.array([1.0, 0.0]), origin="other")


def test_soft_label_record():
    r = ActivationRecord(np.array([3.0, 4.0]), np.array([0.3, 0.7]), 2, "interpolated")
    assert r.class_hint == 1 and r.magnitude == 5.0


def test_zero_budget_selects_nothing():
    pool = [rec(0, 1.0), rec(1, 2.0)]
    assert select_for_upload(pool, 0) == []


def test_hand_traced_cycle():
    # class A magnitudes [5, 1], class B [3]; room for 3 records
    pool = [rec(0, 1.0), rec(1, 3.0), rec(0, 5.0)]
    picked = select_for_upload(pool, 3 * pool[0].size_bytes)
    assert [(r.class_hint, r.magnitude) for r in picked] == [(0, 5.0), (1, 3.0), (0, 1.0)]


def test_cycle_skips_exhausted_classes():
    pool = [rec(0, 1.0), rec(2, 9.0), rec(2, 8.0), rec(2, 7.0)]
    order = class_cycling_order(pool)
    assert [pool[i].magnitude for i in order] == [1.0, 9.0, 8.0, 7.0]


def test_random_policy_count_and_reproducibility():
    rng = np.random.default_rng(0)
    pool = [rec(int(c), float(m)) for c, m in zip(rng.integers(3, size=40), rng.random(40))]
    size = pool[0].size_bytes
    budget = 7 * size + size // 2
    a = select_for_upload(pool, budget, "random", np.random.default_rng(5))
    b = select_for_upload(pool, budget, "random", np.random.default_rng(5))
    assert len(a) == 7
    assert [id(r) for r in a] == [id(r) for r in b]


def test_random_policy_needs_rng():
    with pytest.raises(ValueError):
        select_for_upload([rec(0, 1.0)], 1000, "random")


def test_whole_pool_fits():
    pool = [rec(i % 3, float(i)) for i in range(9)]
    assert len(select_for_upload(pool, 10**9)) == 9


def test_greedy_stops_at_first_misfit():
    big = ActivationRecord(np.ones(100), np.eye(3)[0])
    small = rec(1, 1.0)
    # class 0 (big) is visited first and does not fit; nothing after it is taken
    assert select_for_upload([big, small], big.size_bytes - 1) == []


def test_interpolated_records_cannot_be_uploaded():
    r = ActivationRecord(np.zeros(4), np.array([0.5, 0.5, 0.0]), -1, "interpolated")
    with pytest.raises(ValueError):
        select_for_upload([r], 1000)


def test_unknown_policy():
    with pytest.raises(ValueError):
        select_for_upload([], 10, "largest")


def test_budget_never_exceeded_random_pools():
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = int(rng.integers(0, 15))
        pool = [ActivationRecord(rng.normal(size=int(rng.integers(1, 9))), np.eye(4)[rng.integers(4)]) for _ in range(n)]
        budget = int(rng.integers(0, 600))
        for policy in ("random", "class-cycling-largest"):
            picked = select_for_upload(pool, budget, policy, rng)
            assert sum(r.size_bytes for r in picked) <= budget


def test_cycle_counts_balanced_without_exhaustion():
    rng = np.random.default_rng(4)
    for _ in range(100):
        pool = [rec(int(c), float(m)) for c in range(3) for m in rng.random(6)]
        k = int(rng.integers(0, 19))
        picked = select_for_upload(pool, k * pool[0].size_bytes)
        per = np.bincount([r.class_hint for r in picked], minlength=3)
        assert per.max() - per.min() <= 1


def brute_force_best(pool, k):
    """Exhaustive maximiser of (min per-class count over present classes, total magnitude)."""
    classes = sorted({r.class_hint for r in pool})
    best, best_key = None, None
    for combo in itertools.combinations(range(len(pool)), k):
        per = [sum(pool[i].class_hint == c for i in combo) for c in classes]
        key = (min(per), sum(pool[i].magnitude for i in combo))
        if best_key is None or key > best_key:
            best, best_key = set(combo), key
    return best


def test_cycle_matches_brute_force_objective():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 40:
        m = int(rng.integers(1, 4))
        n = int(rng.integers(2, 13))
        labels = rng.integers(m, size=n)
        present = len(set(labels.tolist()))
        c = int(rng.integers(1, n // present + 1))
        if any(np.sum(labels == l) < c for l in set(labels.tolist())):
            continue  # a class would run out: lexicographic optimum is not unique in counts
        pool = [rec(int(l), float(v), m=m) for l, v in zip(labels, rng.permutation(n) + 1.0)]
        k = c * present
        picked = select_for_upload(pool, k * pool[0].size_bytes)
        assert {id(r) for r in picked} == {id(pool[i]) for i in brute_force_best(pool, k)}
        checked += 1


def test_transfer_budget_counters():
    b = TransferBudget.from_window(ContactWindow(0.0, 8.0, 100.0, 10.0))
    assert (b.bytes_down, b.bytes_up) == (100, 10)
    assert b.charge_down(60) and not b.charge_down(50)
    assert b.remaining_down == 40
    assert b.charge_down(50, force=True)
    assert b.remaining_down == 0 and b.used_down == 110
    assert b.charge_up(10) and not b.charge_up(1)
