import numpy as np
import pytest

from robustflow.errors import ConfigError
from robustflow.flowdata import EncodedColumn, EncodedDataset
from robustflow.models import IsolationParams, train_isolation_forest
from robustflow.models.isolation import average_path_length


def numeric_dataset(X, labels=None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if labels is None:
        labels = ["x"] * X.shape[0]
    columns = [EncodedColumn(f"f{j}", f"f{j}") for j in range(X.shape[1])]
    return EncodedDataset(columns, X, labels)


def gaussian_with_outliers(n_inliers=400, n_outliers=8, seed=0):
    rng = np.random.default_rng(seed)
    inliers = rng.normal(0.0, 1.0, size=(n_inliers, 2))
    outliers = rng.normal(0.0, 1.0, size=(n_outliers, 2)) + 10.0
    return inliers, outliers


class TestIsolationForest:
    def test_contamination_fraction_flagged(self):
        rng = np.random.default_rng(1)
        ds = numeric_dataset(rng.normal(size=(500, 3)))
        model = train_isolation_forest(
            ds, IsolationParams(contamination=0.4), seed=2, benign_label="benign"
        )
        predicted = model.predict_batch(ds.rows)
        frac = np.mean([p == "malicious" for p in predicted])
        assert abs(frac - 0.4) <= 0.01

    def test_planted_outlier_scores_higher(self):
        inliers, _ = gaussian_with_outliers(n_outliers=0)
        planted = np.array([[10.0, 10.0]])
        ds = numeric_dataset(np.vstack([inliers, planted]))
        model = train_isolation_forest(
            ds, IsolationParams(contamination=0.1), seed=3, benign_label="benign"
        )
        scores = model.anomaly_scores(ds.rows)
        dense_point = scores[np.argsort(np.abs(ds.rows[:-1]).sum(axis=1))[0]]
        assert scores[-1] > dense_point
        assert scores[-1] > np.quantile(scores[:-1], 0.95)

    def test_outlier_auc(self):
        inliers, outliers = gaussian_with_outliers()
        ds = numeric_dataset(np.vstack([inliers, outliers]))
        model = train_isolation_forest(
            ds, IsolationParams(contamination=0.1), seed=4, benign_label="benign"
        )
        scores = model.anomaly_scores(ds.rows)
        inl, out = scores[: len(inliers)], scores[len(inliers):]
        # rank-statistic AUC, computed by brute-force pairwise comparison
        wins = sum((o > i) + 0.5 * (o == i) for o in out for i in inl)
        auc = wins / (len(out) * len(inl))
        assert auc >= 0.95

    def test_single_row_is_flagged(self):
        ds = numeric_dataset([[1.0, 2.0]])
        model = train_isolation_forest(
            ds, IsolationParams(contamination=0.4, n_estimators=10), seed=5,
            benign_label="benign",
        )
        assert model.predict_batch(ds.rows) == ["malicious"]
        assert model.anomaly_scores(ds.rows)[0] == model.threshold

    def test_contamination_capped_at_half(self):
        with pytest.raises(ConfigError):
            IsolationParams(contamination=0.6)
        with pytest.raises(ConfigError):
            IsolationParams(contamination=0.0)

    def test_row_order_invariance(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(300, 3))
        ds = numeric_dataset(X)
        perm = rng.permutation(300)
        shuffled = numeric_dataset(X[perm])
        a = train_isolation_forest(
            ds, IsolationParams(n_estimators=20), seed=7, benign_label="benign"
        )
        b = train_isolation_forest(
            shuffled, IsolationParams(n_estimators=20), seed=7, benign_label="benign"
        )
        probe = rng.normal(size=(40, 3))
        assert np.allclose(a.anomaly_scores(probe), b.anomaly_scores(probe))
        assert a.threshold == b.threshold

    def test_labels_ignored_for_tree_building(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(200, 2))
        a = train_isolation_forest(
            numeric_dataset(X, ["x"] * 200), IsolationParams(n_estimators=10),
            seed=9, benign_label="benign",
        )
        b = train_isolation_forest(
            numeric_dataset(X, ["y"] * 200), IsolationParams(n_estimators=10),
            seed=9, benign_label="benign",
        )
        probe = rng.normal(size=(20, 2))
        assert np.allclose(a.anomaly_scores(probe), b.anomaly_scores(probe))

    def test_average_path_length_reference_values(self):
        assert average_path_length(1) == 0.0
        assert average_path_length(2) == 1.0
        # c(n) = 2 H(n-1) - 2 (n-1)/n with H via the Euler-Mascheroni form
        n = 256
        expected = 2.0 * (np.log(n - 1) + 0.5772156649015329) - 2.0 * (n - 1) / n
        assert average_path_length(n) == pytest.approx(expected)
