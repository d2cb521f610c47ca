import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actiprofile import clustering as cl
from actiprofile.errors import AlignmentError, DataError, InfeasibleKError


def blobs(n=40, sep=50.0, dim=4, seed=0, centers=2):
    rng = np.random.default_rng(seed)
    means = np.eye(centers, dim) * sep
    X = np.vstack([m + rng.normal(0, 1, (n, dim)) for m in means])
    return X, np.repeat(np.arange(centers), n), means


class TestKMeans:
    def test_distinct_points_zero_inertia(self):
        X = np.array([[0.0, 0], [5, 5], [10, 0]])
        m = cl.kmeans_fit(X, 3, seed=1)
        assert m.inertia == 0
        assert sorted(map(tuple, m.centroids)) == sorted(map(tuple, X))

    def test_two_blobs(self):
        X, truth, _ = blobs()
        m = cl.kmeans_fit(X, 2, seed=3)
        for j in range(2):
            members = X[m.labels == j]
            assert np.allclose(m.centroids[j], members.mean(axis=0), atol=1e-6)
        agree = (m.labels == truth).mean()
        assert agree in (0.0, 1.0)

    def test_k1_grand_mean(self, rng):
        X = rng.normal(size=(30, 5))
        m = cl.kmeans_fit(X, 1)
        assert np.allclose(m.centroids[0], X.mean(axis=0))
        assert m.inertia == pytest.approx(X.var(axis=0).sum() * 30, rel=1e-12)

    def test_too_many_clusters(self):
        with pytest.raises(InfeasibleKError):
            cl.kmeans_fit(np.ones((10, 3)), 2)

    def test_deterministic(self, rng):
        X = rng.normal(size=(60, 6))
        a, b = cl.kmeans_fit(X, 4, seed=9), cl.kmeans_fit(X, 4, seed=9)
        assert np.array_equal(a.centroids, b.centroids) and np.array_equal(a.labels, b.labels)

    def test_jobs_do_not_change_result(self, rng):
        X = rng.normal(size=(60, 6))
        a, b = cl.kmeans_fit(X, 4, seed=9), cl.kmeans_fit(X, 4, seed=9, n_jobs=2)
        assert np.array_equal(a.centroids, b.centroids)

    def test_lloyd_history_nonincreasing(self, rng):
        m = cl.kmeans_fit(rng.normal(size=(200, 8)), 5, seed=2)
        h = np.array(m.inertia_history)
        assert (np.diff(h) <= 1e-9 * h[0]).all()

    def test_close_to_reference_implementation(self, rng):
        from sklearn.cluster import KMeans
        X, _, _ = blobs(n=50, centers=3, seed=4)
        ours = cl.kmeans_fit(X, 3, seed=0)
        ref = KMeans(3, n_init=10, random_state=0).fit(X)
        assert ours.inertia == pytest.approx(ref.inertia_, rel=1e-6)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=15, deadline=None)
    def test_labels_are_nearest_centroid(self, seed):
        X = np.random.default_rng(seed).normal(size=(40, 3))
        m = cl.kmeans_fit(X, 3, seed=seed, restarts=2)
        assert np.array_equal(cl.assign(m, X), m.labels)


class TestAssign:
    def _model(self):
        C = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
        return cl.ClusterModel(3, C, np.arange(3), 0.0, 0)

    def test_exact_centroid(self):
        assert cl.assign(self._model(), [[10.0, 0.0]])[0] == 1

    def test_tie_lowest(self):
        assert cl.assign(self._model(), [[5.0, 0.0]])[0] == 0
        assert cl.assign(self._model(), [[5.0, 5.0]])[0] == 0

    def test_width_mismatch(self):
        with pytest.raises(AlignmentError):
            cl.assign(self._model(), [[1.0, 2.0, 3.0]])


class TestPredictionStrength:
    def test_k1_is_one(self, rng):
        assert cl.prediction_strength(rng.normal(size=(20, 3)), 1, splits=3).mean == 1.0

    def test_two_blobs_k2(self):
        X, _, _ = blobs()
        assert cl.prediction_strength(X, 2, splits=5, seed=1, restarts=3).mean == 1.0

    def test_two_blobs_k4_mostly_weak(self):
        X, _, _ = blobs(n=30)
        low = sum(cl.prediction_strength(X, 4, splits=2, seed=s, restarts=2).mean < 0.75 for s in range(20))
        assert low >= 16

    def test_too_few_rows(self):
        with pytest.raises(InfeasibleKError):
            cl.prediction_strength(np.zeros((5, 2)), 3)

    def test_strength_counting(self):
        # test cluster 0 = four rows split 2/2 by the train model: 4 of 12 ordered pairs agree
        test_labels = np.array([0, 0, 0, 0, 1, 1])
        predicted = np.array([0, 0, 1, 1, 1, 1])
        assert cl._strength(test_labels, predicted, 2) == pytest.approx(4 / 12)

    def test_curve_caps(self, rng):
        curve = cl.prediction_strength_curve(rng.normal(size=(8, 2)), k_max=50, splits=2, restarts=2)
        assert list(curve.ks) == [1, 2, 3, 4]
        assert list(curve.to_frame().columns) == ["k", "ps_mean", "ps_min", "ps_max"]

    def test_curve_deterministic(self):
        X, _, _ = blobs(n=15, centers=3)
        a = cl.prediction_strength_curve(X, 4, splits=3, seed=7, restarts=2)
        b = cl.prediction_strength_curve(X, 4, splits=3, seed=7, restarts=2)
        assert np.array_equal(a.values, b.values)


class TestSelectK:
    def test_threshold(self):
        assert cl.select_k([1.0, 0.9, 0.8, 0.4]) == (3, "threshold")

    def test_local_max(self):
        assert cl.select_k([1.0, 0.6, 0.7, 0.5]) == (3, "local_max")

    def test_monotone(self):
        assert cl.select_k([1.0, 0.5, 0.4, 0.3]) == (1, "none")

    def test_threshold_inclusive(self):
        assert cl.select_k([1.0, 0.75, 0.2]) == (2, "threshold")

    def test_curve_object(self):
        curve = cl.PredictionStrengthCurve(np.arange(1, 4), np.array([[1.0, 1.0], [0.9, 0.8], [0.2, 0.3]]))
        assert cl.select_k(curve) == (2, "threshold")


class TestMembership:
    def test_four_three_zero(self):
        d = cl.membership_distribution([0, 0, 0, 0, 1, 1, 1], ["p"] * 7, 3)
        assert np.round(d.proportions[0], 4).tolist() == [0.5714, 0.4286, 0.0]

    def test_indicator(self):
        d = cl.membership_distribution([2, 2], ["p", "p"], 3)
        assert d.proportions[0].tolist() == [0, 0, 1]

    def test_even_split(self):
        d = cl.membership_distribution(range(5), ["p"] * 5, 5)
        assert np.allclose(d.proportions, 0.2)

    @given(st.lists(st.tuples(st.integers(0, 4), st.sampled_from("abcd")), min_size=1, max_size=60))
    def test_rows_sum_to_one(self, pairs):
        labels, pids = zip(*pairs)
        d = cl.membership_distribution(labels, pids, 5)
        assert np.allclose(d.proportions.sum(axis=1), 1.0)
        assert d.days.sum() == len(pairs)

    def test_label_range(self):
        with pytest.raises(DataError):
            cl.membership_distribution([3], ["p"], 3)

    def test_frame(self):
        f = cl.membership_distribution([0, 1], ["b", "a"], 2).to_frame()
        assert list(f.columns) == ["participant_id", "days_observed", "C1", "C2"]
        assert list(f["participant_id"]) == ["a", "b"]


class TestReport:
    def test_counting(self):
        m = cl.ClusterModel(2, np.zeros((2, 1)), np.zeros(10, int), 0.0, 0)
        r = cl.cluster_report(m, [f"p{i // 2}" for i in range(10)])
        row = r.iloc[0]
        assert (row["shapes"], row["participants"], row["ratio"]) == (10, 5, 0.5)

    def test_empty(self):
        m = cl.ClusterModel(2, np.zeros((2, 1)), np.zeros(0, int), 0.0, 0)
        assert cl.cluster_report(m, []).empty

    def test_ratio_one_iff_unique(self):
        m = cl.ClusterModel(2, np.zeros((2, 1)), np.array([0, 0, 1, 1]), 0.0, 0)
        r = cl.cluster_report(m, ["a", "b", "c", "c"])
        assert r["ratio"].tolist() == [1.0, 0.5]


def test_centroid_frame_clock():
    m = cl.ClusterModel(2, np.arange(192.0).reshape(2, 96), np.zeros(2, int), 0.0, 0)
    f = cl.centroid_frame(m)
    assert f["clock"].iloc[0] == "07:00" and f["clock"].iloc[95] == "22:50" and len(f) == 192
