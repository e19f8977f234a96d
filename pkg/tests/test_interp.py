import numpy as np
import pytest

from leosplit.interp import InterpConfig, choose_partner, class_mse, fractional_counts, interpolate_round
from leosplit.link import ActivationRecord


def make_set(rng, n, m, dim=3, soft=False):
    out = []
    for _ in range(n):
        label = rng.dirichlet(np.ones(m)) if soft else np.eye(m)[rng.integers(m)]
        out.append(ActivationRecord(rng.normal(size=dim), label, int(rng.integers(5)), "pseudo"))
    return out


def brute_force(records, J, beta, target, rng):
    """Step-by-step exhaustive argmin with plain Python loops over candidates."""
    feats = [list(r.features) for r in records]
    labels = [list(r.label) for r in records]
    m = len(target)
    for _ in range(J):
        n = len(labels)
        k1 = int(rng.integers(n))
        alpha = float(rng.beta(beta, beta))
        gamma = [sum(labels[i][c] for i in range(n)) for c in range(m)]
        best, best_mse = None, None
        for k2 in range(n):
            if k2 == k1:
                continue
            hat = [gamma[c] + alpha * labels[k1][c] + (1 - alpha) * labels[k2][c] for c in range(m)]
            tot = sum(hat)
            mse = sum((hat[c] / tot - target[c]) ** 2 for c in range(m)) / m
            if best is None or mse < best_mse - 1e-12:
                best, best_mse = k2, mse
        feats.append([alpha * a + (1 - alpha) * b for a, b in zip(feats[k1], feats[best])])
        labels.append([alpha * a + (1 - alpha) * b for a, b in zip(labels[k1], labels[best])])
    return np.array(feats), np.array(labels)


def test_class_mse_values():
    assert class_mse([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert class_mse([1, 0], [0, 1]) == 1.0
    assert class_mse([0.7, 0.3], [0.5, 0.5]) == pytest.approx(0.04, abs=1e-15)
    with pytest.raises(ValueError):
        class_mse([1.0], [0.5, 0.5])


def test_fractional_counts():
    assert not fractional_counts([], 3).any()
    two = [ActivationRecord(np.zeros(1), np.array([1.0, 0.0, 0.0]))] * 2
    np.testing.assert_array_equal(fractional_counts(two), [2, 0, 0])
    soft = [ActivationRecord(np.zeros(1), np.array([0.5, 0.5]))]
    np.testing.assert_array_equal(fractional_counts(soft), [0.5, 0.5])


def test_j_zero_is_identity(rng):
    recs = make_set(rng, 4, 3)
    out = interpolate_round(recs, InterpConfig(J=0), rng)
    assert [id(r) for r in out] == [id(r) for r in recs]


class HalfBeta:
    """Degenerate generator: always anchor 0, always alpha = 0.5."""

    def integers(self, n):
        return 0

    def beta(self, a, b):
        return 0.5


def test_two_records_midpoint():
    a = ActivationRecord(np.array([0.0, 2.0]), np.array([1.0, 0.0]))
    b = ActivationRecord(np.array([4.0, 6.0]), np.array([0.0, 1.0]))
    out = interpolate_round([a, b], InterpConfig(J=1), HalfBeta())
    assert len(out) == 3
    np.testing.assert_array_equal(out[2].label, [0.5, 0.5])
    np.testing.assert_array_equal(out[2].features, [2.0, 4.0])
    assert out[2].origin == "interpolated"


def test_needs_two_records(rng):
    with pytest.raises(ValueError):
        interpolate_round(make_set(rng, 1, 2), InterpConfig(J=1), rng)


def test_config_validation():
    with pytest.raises(ValueError):
        InterpConfig(J=-1)
    with pytest.raises(ValueError):
        InterpConfig(J=1, beta=0.0)
    with pytest.raises(ValueError):
        InterpConfig(J=1, target_dist=np.array([0.5, 0.6]))


def test_target_length_checked(rng):
    with pytest.raises(ValueError):
        interpolate_round(make_set(rng, 3, 3), InterpConfig(J=1, target_dist=np.array([0.5, 0.5])), rng)


def test_small_fixed_instance_matches_brute_force():
    rng = np.random.default_rng(2024)
    recs = make_set(rng, 5, 3)
    target = np.array([0.2, 0.3, 0.5])
    out = interpolate_round(recs, InterpConfig(4, 0.75, target), np.random.default_rng(9))
    feats, labels = brute_force(recs, 4, 0.75, target, np.random.default_rng(9))
    assert np.array_equal(np.stack([r.features for r in out]), feats)
    assert np.array_equal(np.stack([r.label for r in out]), labels)


def test_random_instances_match_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n, m, j = int(rng.integers(2, 13)), int(rng.integers(1, 6)), int(rng.integers(0, 7))
        recs = make_set(rng, n, m, soft=bool(rng.integers(2)))
        target = rng.dirichlet(np.ones(m))
        seed = int(rng.integers(1 << 30))
        out = interpolate_round(recs, InterpConfig(j, 0.75, target), np.random.default_rng(seed))
        feats, labels = brute_force(recs, j, 0.75, target, np.random.default_rng(seed))
        assert len(out) == n + j
        assert np.array_equal(np.stack([r.features for r in out]), feats)
        assert np.array_equal(np.stack([r.label for r in out]), labels)


def test_ties_go_to_lowest_index():
    labels = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]])
    k2, mse = choose_partner(labels, 0, 0.5, np.array([0.5, 0.5]))
    assert k2 == 1
    assert mse[0] == np.inf and mse[1] == mse[2] == mse[3]


def test_simplex_and_convexity_invariants():
    rng = np.random.default_rng(5)
    for _ in range(30):
        recs = make_set(rng, int(rng.integers(2, 10)), 4, dim=5)
        out = interpolate_round(recs, InterpConfig(8, 0.75, rng.dirichlet(np.ones(4))), rng)
        for r in out:
            assert np.all(r.label >= 0) and abs(r.label.sum() - 1) < 1e-12
        # every new record lies on the segment between two earlier records
        for j in range(len(recs), len(out)):
            f = out[j].features
            ok = False
            for a in range(j):
                for b in range(j):
                    lo = np.minimum(out[a].features, out[b].features) - 1e-12
                    hi = np.maximum(out[a].features, out[b].features) + 1e-12
                    if a != b and np.all((lo <= f) & (f <= hi)):
                        ok = True
            assert ok


def test_steering_beats_random_partner():
    finals_argmin, finals_random = [], []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        m = 4
        labels = rng.choice(m, size=12, p=[0.6, 0.2, 0.15, 0.05])
        recs = [ActivationRecord(rng.normal(size=2), np.eye(m)[l]) for l in labels]
        target = np.full(m, 1 / m)
        out = interpolate_round(recs, InterpConfig(30, 0.75, target), np.random.default_rng(seed))
        finals_argmin.append(class_mse(fractional_counts(out) / len(out), target))
        # same anchors and mixing weights, partner drawn uniformly instead
        r2 = np.random.default_rng(seed)
        lab = [r.label for r in recs]
        for _ in range(30):
            k1 = int(r2.integers(len(lab)))
            a = float(r2.beta(0.75, 0.75))
            k2 = int(r2.choice([k for k in range(len(lab)) if k != k1]))
            lab.append(a * lab[k1] + (1 - a) * lab[k2])
        finals_random.append(class_mse(np.sum(lab, axis=0) / len(lab), target))
    assert np.mean(finals_argmin) <= np.mean(finals_random)
