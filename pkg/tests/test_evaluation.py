import json

import numpy as np
import pytest

from accent_mfcc.classifiers import CLASSIFIERS, ClassifierSpec
from accent_mfcc.dataset import Dataset
from accent_mfcc.evaluation import (
    GRID_Q_LEVELS,
    ConfusionCounts,
    CrossValidationError,
    EvalReport,
    SplitSpec,
    accuracy,
    benchmark_grid,
    confusion,
    rep_seed,
    run_cv,
    splitmix64,
    stratified_split,
    train_count,
)


def balanced(n_per_class=165, p=4, shift=0.0, seed=0):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(2 * n_per_class, p))
    labels = np.r_[np.zeros(n_per_class, int), np.ones(n_per_class, int)]
    pts[labels == 1] += shift
    return Dataset(pts, labels, tuple(f"r{i}" for i in range(2 * n_per_class)))


# splitting


def test_split_counts_for_table_sizes():
    assert train_count(165, 0.7) == 115
    train, test = stratified_split(balanced(), SplitSpec(0.7, 10, 1), 0)
    assert np.bincount(train.labels).tolist() == [115, 115]
    assert np.bincount(test.labels).tolist() == [50, 50]


def test_split_is_deterministic_partition():
    data = balanced()
    spec = SplitSpec(0.7, 10, 99)
    a_tr, a_te = stratified_split(data, spec, 3)
    b_tr, b_te = stratified_split(data, spec, 3)
    assert a_tr.source_ids == b_tr.source_ids and a_te.source_ids == b_te.source_ids
    ids = set(a_tr.source_ids) | set(a_te.source_ids)
    assert ids == set(data.source_ids)
    assert not set(a_tr.source_ids) & set(a_te.source_ids)


def test_split_differs_between_reps_and_seeds():
    data = balanced()
    base = stratified_split(data, SplitSpec(0.7, 10, 1), 0)[0].source_ids
    assert stratified_split(data, SplitSpec(0.7, 10, 1), 1)[0].source_ids != base
    assert stratified_split(data, SplitSpec(0.7, 10, 2), 0)[0].source_ids != base


@pytest.mark.parametrize("fraction", [0.1, 0.33, 0.5, 0.7, 0.9])
def test_stratification_bound(fraction):
    data = Dataset(np.zeros((47, 1)), np.r_[np.zeros(20, int), np.ones(27, int)])
    train, _ = stratified_split(data, SplitSpec(fraction, 1, 5), 0)
    for c, n in ((0, 20), (1, 27)):
        assert abs(np.sum(train.labels == c) - fraction * n) < 1


def test_split_rejects_tiny_class():
    data = Dataset(np.zeros((5, 1)), np.array([0, 0, 0, 0, 1]))
    with pytest.raises(ValueError, match="empty partition"):
        stratified_split(data, SplitSpec(0.7, 1, 0), 0)


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec(train_fraction=1.0)
    with pytest.raises(ValueError):
        SplitSpec(repetitions=0)


def test_splitmix_reference_values():
    # First outputs of the reference generator seeded with 0.
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4
    assert rep_seed(1, 0) != rep_seed(1, 1) != rep_seed(2, 0)


# confusion and accuracy


@pytest.mark.parametrize(
    "preds, truth, expected",
    [
        ([1, 1, 0, 0], [1, 1, 0, 0], ConfusionCounts(2, 2, 0, 0)),
        ([1, 1, 1, 1], [0, 0, 0, 0], ConfusionCounts(0, 0, 4, 0)),
        ([1, 0], [0, 1], ConfusionCounts(0, 0, 1, 1)),
    ],
)
def test_confusion_examples(preds, truth, expected):
    assert confusion(preds, truth) == expected


def test_confusion_length_mismatch():
    with pytest.raises(ValueError, match="length"):
        confusion([1, 0], [1])


def test_accuracy_examples():
    assert accuracy(ConfusionCounts(40, 35, 15, 10)) == 0.75
    assert accuracy(ConfusionCounts(3, 4, 0, 0)) == 1.0
    assert accuracy(ConfusionCounts(0, 0, 5, 6)) == 0.0
    with pytest.raises(ValueError):
        accuracy(ConfusionCounts())


# cross-validation


def test_separable_clusters_score_one():
    data = balanced(40, shift=50.0)
    for name in CLASSIFIERS:
        assert run_cv(data, ClassifierSpec(name), SplitSpec(0.7, 5, 0)).mean_accuracy == 1.0


def test_single_rep_std_is_zero():
    res = run_cv(balanced(40, shift=1.0), ClassifierSpec("lda"), SplitSpec(0.7, 1, 0))
    assert res.repetitions == 1 and res.std_accuracy == 0.0


def test_mean_matches_per_rep_values():
    res = run_cv(balanced(60, shift=0.7), ClassifierSpec("knn"), SplitSpec(0.7, 30, 4))
    assert res.mean_accuracy == pytest.approx(np.mean(res.accuracies), abs=1e-12)
    assert np.all((res.accuracies >= 0) & (res.accuracies <= 1))
    assert res.confusion.total == 30 * 36
    assert res.train_seconds >= 0 and res.predict_seconds >= 0


def test_null_model_near_chance():
    # Labels carry no information.  A holdout accuracy on N test points has
    # standard error sqrt(0.25 / N) under the null.
    rng = np.random.default_rng(2024)
    data = Dataset(rng.normal(size=(330, 5)), rng.permutation(np.r_[np.zeros(165, int), np.ones(165, int)]))
    res = run_cv(data, ClassifierSpec("lda"), SplitSpec(0.7, 500, 7))
    assert abs(res.mean_accuracy - 0.5) <= 3 * np.sqrt(0.25 / 100)


def test_null_model_over_independent_datasets():
    means = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(120, 3))
        labels = rng.permutation(np.r_[np.zeros(60, int), np.ones(60, int)])
        means.append(run_cv(Dataset(pts, labels), ClassifierSpec("knn"), SplitSpec(0.7, 20, seed)).mean_accuracy)
    means = np.array(means)
    assert abs(means.mean() - 0.5) <= 3 * means.std(ddof=1) / np.sqrt(means.size)


def test_failures_name_the_repetition():
    # Constant features make the pooled covariance singular once ridge is zero.
    data = Dataset(np.ones((20, 2)), np.r_[np.zeros(10, int), np.ones(10, int)])
    with pytest.raises(CrossValidationError, match="repetition 0"):
        run_cv(data, ClassifierSpec("lda", ridge=0.0), SplitSpec(0.7, 3, 0))


def test_threads_do_not_change_accuracies():
    data = balanced(50, shift=0.6)
    spec = SplitSpec(0.7, 12, 3)
    a = run_cv(data, ClassifierSpec("svm-rbf"), spec)
    b = run_cv(data, ClassifierSpec("svm-rbf"), spec, threads=3)
    np.testing.assert_array_equal(a.accuracies, b.accuracies)


# grid


def test_grid_shape_and_order():
    data = balanced(30, p=39, shift=0.4)
    specs = [ClassifierSpec(n) for n in CLASSIFIERS]
    report = benchmark_grid(data, GRID_Q_LEVELS, specs, SplitSpec(0.7, 2, 0))
    assert len(report.rows) == 25
    assert [(r.q, r.classifier) for r in report.rows] == [(q, n) for q in GRID_Q_LEVELS for n in CLASSIFIERS]
    for r in report.rows:
        assert 0 <= r.mean_acc <= 1 and r.std_acc >= 0 and r.train_s >= 0 and r.reps == 2


def test_single_cell_grid_equals_run_cv():
    data = balanced(40, p=6, shift=0.5)
    spec = SplitSpec(0.7, 8, 11)
    report = benchmark_grid(data, [4], [ClassifierSpec("qda")], spec)
    res = run_cv(data.truncate(4), ClassifierSpec("qda"), spec)
    (row,) = report.rows
    assert (row.mean_acc, row.std_acc, row.reps) == (res.mean_accuracy, res.std_accuracy, 8)


def test_grid_rows_independent_of_order():
    data = balanced(30, p=8, shift=0.5)
    spec = SplitSpec(0.7, 4, 2)
    fwd = benchmark_grid(data, [3, 8], [ClassifierSpec("lda"), ClassifierSpec("knn")], spec)
    rev = benchmark_grid(data, [8, 3], [ClassifierSpec("knn"), ClassifierSpec("lda")], spec)
    for r in fwd.rows:
        assert rev.get(r.classifier, r.q).mean_acc == r.mean_acc


def test_grid_rejects_missing_columns():
    with pytest.raises(ValueError, match="exceeds"):
        benchmark_grid(balanced(20, p=5), [6], [ClassifierSpec("lda")], SplitSpec(0.7, 1, 0))


def test_report_serialization(tmp_path):
    data = balanced(30, p=4, shift=0.5)
    report = benchmark_grid(data, [2, 4], [ClassifierSpec("lda")], SplitSpec(0.7, 3, 0))
    report.header.append("mfcc num_filters=40")
    report.write(tmp_path / "r.csv", tmp_path / "r.json", tmp_path / "plot")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].startswith("# ") and lines[2] == ",".join(EvalReport.CSV_COLUMNS)
    assert len(lines) == 5
    doc = json.loads((tmp_path / "r.json").read_text())
    assert len(doc["rows"]) == 2 and "total_s" in doc["rows"][0]
    assert (tmp_path / "plot_accuracy.csv").read_text().startswith("classifier,q,mean_acc,std_acc\n")
    assert (tmp_path / "plot_time.csv").read_text().startswith("classifier,q,total_s\n")


def test_knn_training_cheaper_than_svm():
    data = balanced(80, p=13, shift=0.5)
    spec = SplitSpec(0.7, 10, 0)
    knn = run_cv(data, ClassifierSpec("knn"), spec)
    svm = run_cv(data, ClassifierSpec("svm-rbf"), spec)
    assert knn.train_seconds < svm.train_seconds
