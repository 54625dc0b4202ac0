import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn import metrics as skm

from sentspace.cluster import (
    METRICS,
    KMeans,
    contingency,
    evaluate,
    evaluate_clustering,
    kmeans,
)
from sentspace.exceptions import DimensionError, EmptyInputError, ParameterError


def brute_force_metrics(clusters, labels):
    """Every metric straight from its definition: pair loops and raw counts."""
    n = len(clusters)
    tp = fp = fn = tn = 0
    for i, j in itertools.combinations(range(n), 2):
        same_c = clusters[i] == clusters[j]
        same_l = labels[i] == labels[j]
        tp += same_c and same_l
        fp += same_c and not same_l
        fn += same_l and not same_c
        tn += not same_c and not same_l
    joint = Counter(zip(clusters, labels))
    c_count = Counter(clusters)
    l_count = Counter(labels)

    def h(counter):
        return -sum(v / n * math.log(v / n) for v in counter.values())

    h_l_given_c = -sum(v / n * math.log(v / c_count[c]) for (c, _), v in joint.items())
    h_c_given_l = -sum(v / n * math.log(v / l_count[l]) for (_, l), v in joint.items())
    h_l, h_c = h(l_count), h(c_count)
    hom = 1.0 if h_l == 0 else 1 - h_l_given_c / h_l
    com = 1.0 if h_c == 0 else 1 - h_c_given_l / h_c
    v = 0.0 if hom + com == 0 else 2 * hom * com / (hom + com)
    mi = sum(v_ / n * math.log(n * v_ / (c_count[c] * l_count[l]))
             for (c, l), v_ in joint.items())
    purity = sum(max(v_ for (c2, _), v_ in joint.items() if c2 == c)
                 for c in c_count) / n
    pairs = n * (n - 1) / 2
    rand = 1.0 if pairs == 0 else (tp + tn) / pairs
    if tp + fp == 0 and tp + fn == 0:
        fm = f1 = 1.0
    elif tp + fp == 0 or tp + fn == 0:
        fm = f1 = 0.0
    else:
        fm = tp / math.sqrt((tp + fp) * (tp + fn))
        f1 = 2 * tp / (2 * tp + fp + fn)
    return {
        "purity": purity, "f_measure": f1, "rand_index": rand, "homogeneity": hom,
        "mutual_information": mi, "completeness": com, "v_measure": v,
        "fowlkes_mallows": fm,
    }


def random_instance(rng):
    n = int(rng.integers(1, 13))
    k = int(rng.integers(1, 5))
    m = int(rng.integers(1, 5))
    return rng.integers(0, k, n), rng.choice(list("ABCD")[:m], n)


class TestContingency:
    def test_examples(self):
        t = contingency([0, 0, 1, 1], ["A", "A", "B", "B"])
        np.testing.assert_array_equal(t.counts, [[2, 0], [0, 2]])
        t = contingency([0, 0, 0, 0], ["A", "A", "B", "B"])
        np.testing.assert_array_equal(t.counts, [[2, 2]])
        assert t.n == 4
        np.testing.assert_array_equal(t.cluster_sizes, [4])
        np.testing.assert_array_equal(t.label_sizes, [2, 2])

    def test_nested_loop_oracle(self):
        rng = np.random.default_rng(20)
        clusters = rng.integers(0, 5, 50)
        labels = rng.choice(["p", "q", "r"], 50)
        t = contingency(clusters, labels)
        for i, c in enumerate(t.clusters):
            for j, lab in enumerate(t.labels):
                expected = sum(1 for a, b in zip(clusters, labels) if a == c and b == lab)
                assert t.counts[i, j] == expected

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            contingency([0, 1], ["A"])


class TestEvaluate:
    def test_perfect(self):
        r = evaluate_clustering([0, 0, 1, 1, 2], ["A", "A", "B", "B", "C"])
        for name in ("homogeneity", "completeness", "v_measure", "purity",
                     "rand_index", "fowlkes_mallows", "f_measure"):
            assert getattr(r, name) == pytest.approx(1.0)

    def test_single_cluster_two_labels(self):
        r = evaluate_clustering([0, 0, 0, 0], ["A", "A", "B", "B"])
        assert r.homogeneity == pytest.approx(0.0, abs=1e-15)
        assert r.completeness == 1.0
        assert r.purity == 0.5

    def test_crossed(self):
        # Pairs: (0,1) diff cluster same label, (0,2) same cluster diff label,
        # (0,3) diff/diff, (1,2) diff/diff, (1,3) same cluster diff label,
        # (2,3) diff cluster same label -> TP=0, TN=2.
        r = evaluate_clustering([0, 1, 0, 1], ["A", "A", "B", "B"])
        assert r.homogeneity == pytest.approx(0.0, abs=1e-15)
        assert r.rand_index == pytest.approx(1 / 3)
        assert r.fowlkes_mallows == 0.0
        assert r.f_measure == 0.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            clusters, labels = random_instance(rng)
            got = evaluate_clustering(clusters, labels).as_dict()
            expected = brute_force_metrics(list(clusters), list(labels))
            for name in METRICS:
                assert abs(got[name] - expected[name]) <= 1e-9, name

    def test_matches_sklearn(self):
        rng = np.random.default_rng(22)
        for _ in range(50):
            labels = rng.integers(0, 4, 40)
            clusters = rng.integers(0, 3, 40)
            r = evaluate_clustering(clusters, labels)
            assert r.homogeneity == pytest.approx(
                skm.homogeneity_score(labels, clusters), abs=1e-12)
            assert r.completeness == pytest.approx(
                skm.completeness_score(labels, clusters), abs=1e-12)
            assert r.v_measure == pytest.approx(
                skm.v_measure_score(labels, clusters), abs=1e-12)
            assert r.mutual_information == pytest.approx(
                skm.mutual_info_score(labels, clusters), abs=1e-12)
            assert r.fowlkes_mallows == pytest.approx(
                skm.fowlkes_mallows_score(labels, clusters), abs=1e-12)
            assert r.rand_index == pytest.approx(skm.rand_score(labels, clusters),
                                                 abs=1e-12)

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1,
                    max_size=20),
           st.permutations(range(4)), st.permutations(range(4)))
    def test_permutation_invariance_and_ranges(self, pairs, perm_c, perm_l):
        clusters = [c for c, _ in pairs]
        labels = [lab for _, lab in pairs]
        base = evaluate_clustering(clusters, labels).as_dict()
        moved = evaluate_clustering([perm_c[c] for c in clusters],
                                    [perm_l[lab] for lab in labels]).as_dict()
        for name in METRICS:
            assert moved[name] == pytest.approx(base[name], abs=1e-12)
            if name != "mutual_information":
                assert 0.0 <= base[name] <= 1.0
        assert base["mutual_information"] >= 0
        h, c = base["homogeneity"], base["completeness"]
        expected_v = 0.0 if h + c == 0 else 2 * h * c / (h + c)
        assert abs(base["v_measure"] - expected_v) <= 1e-12

    def test_monotone_under_corruption(self):
        n, k = 120, 4
        truth = np.arange(n) % k
        fractions = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
        means = {name: [] for name in METRICS}
        for frac in fractions:
            acc = {name: 0.0 for name in METRICS}
            for seed in range(100):
                rng = np.random.default_rng(seed)
                clusters = truth.copy()
                swap = rng.choice(n, size=int(frac * n), replace=False)
                clusters[swap] = rng.integers(0, k, len(swap))
                r = evaluate_clustering(clusters, truth).as_dict()
                for name in METRICS:
                    acc[name] += r[name] / 100
            for name in METRICS:
                means[name].append(acc[name])
        for name in METRICS:
            assert np.all(np.diff(means[name]) <= 1e-12), name

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            evaluate(contingency([], []))


class TestKMeans:
    def test_single_cluster(self):
        x = np.random.default_rng(23).standard_normal((50, 3))
        r = kmeans(x, 1)
        assert np.all(r.assignments == 0)
        np.testing.assert_allclose(r.centers[0], x.mean(axis=0))
        assert r.inertia == pytest.approx(len(x) * np.var(x, axis=0).sum())

    def test_every_point_own_cluster(self):
        x = np.random.default_rng(24).standard_normal((15, 2))
        r = kmeans(x, 15)
        assert len(set(r.assignments.tolist())) == 15
        assert r.inertia == pytest.approx(0.0, abs=1e-12)

    def test_two_blobs(self, blobs):
        x, truth = blobs(200, [[0, 0], [10, 0]], 1.0, seed=25)
        r = kmeans(x, 2, seed=3)
        assert evaluate_clustering(r.assignments, truth).rand_index == 1.0

    def test_inertia_non_increasing(self, blobs):
        x, _ = blobs(300, np.random.default_rng(1).standard_normal((6, 4)) * 3, 1.0, 26)
        r = kmeans(x, 6, seed=0, tol=0)
        assert np.all(np.diff(r.inertia_history) <= 1e-9)

    def test_deterministic(self):
        x = np.random.default_rng(27).standard_normal((200, 5))
        a = kmeans(x, 7, seed=9)
        b = kmeans(x.copy(), 7, seed=9)
        assert np.array_equal(a.assignments, b.assignments)
        assert a.inertia == b.inertia

    def test_empty_cluster_repaired(self):
        # The third centroid starts far from every point and captures nothing;
        # the repair hands it the point farthest from its centroid (x=9).
        x = np.array([[0.0], [1.0], [2.0], [9.0]])
        r = kmeans(x, 3, init=[[0.5], [1.5], [100.0]], tol=0)
        assert np.all(np.bincount(r.assignments, minlength=3) > 0)
        assert r.assignments[3] == 2
        assert r.centers[2, 0] == 9.0

    def test_parameter_error(self):
        with pytest.raises(ParameterError):
            kmeans(np.zeros((2, 2)), 3)

    def test_estimator(self, blobs):
        x, truth = blobs(90, [[0, 0], [8, 8], [-8, 8]], 0.5, 28)
        est = KMeans(n_clusters=3, random_state=1).fit(x)
        np.testing.assert_array_equal(est.predict(x), est.labels_)
        assert est.get_params()["n_clusters"] == 3
        assert evaluate_clustering(est.labels_, truth).v_measure == pytest.approx(1.0)
