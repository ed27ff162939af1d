import numpy as np
import pytest
from scipy.stats import multivariate_normal

from accent_mfcc.classifiers import (
    ClassifierSpec,
    ConvergenceError,
    KernelSpec,
    KnnModel,
    SingularCovarianceError,
    SvmModel,
    discriminant_predict,
    fit,
    kernel_eval,
    kkt_residuals,
    knn_distance,
    knn_predict,
    knn_train,
    lda_score,
    lda_train,
    qda_score,
    qda_train,
    svm_train,
)
from accent_mfcc.classifiers.io import ModelFormatError, dumps, load_model, loads, save_model
from accent_mfcc.classifiers.knn import nearest_neighbors
from accent_mfcc.classifiers.svm import full_alphas
from accent_mfcc.dataset import Dataset

# 1 / (1 - exp(-4)), evaluated independently at 50 digits.
TWO_POINT_ALPHA = 1.0186573603637740
EXP_MINUS_12_5 = 3.72665317207867e-6


def gaussian_pair(seed, n=100, p=5, shift=1.5, scale1=1.0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, p))
    b = rng.normal(size=(n, p)) * scale1 + shift
    return Dataset(np.vstack([a, b]), np.r_[np.zeros(n, int), np.ones(n, int)])


def one_d(values0, values1):
    pts = np.array(list(values0) + list(values1), dtype=float)[:, None]
    return Dataset(pts, np.r_[np.zeros(len(values0), int), np.ones(len(values1), int)])


# LDA / QDA


def test_lda_means_and_priors():
    m = lda_train(one_d([0, 0.1, -0.1], [4, 4.1, 3.9]))
    np.testing.assert_allclose(m.class_means[:, 0], [0, 4], atol=1e-15)
    np.testing.assert_allclose(np.exp(m.log_priors), [0.5, 0.5])


def test_lda_degenerate_covariance_is_ridge():
    data = Dataset(np.array([[1.0, 2.0]] * 3 + [[5.0, 1.0]] * 3), np.r_[[0] * 3, [1] * 3])
    m = lda_train(data, ridge=0.01)
    np.testing.assert_allclose(np.linalg.inv(m.pooled_cov_inverse), 0.01 * np.eye(2), rtol=1e-12)
    assert np.all(np.isfinite(lda_train(data).pooled_cov_inverse))


def test_lda_singular_without_ridge_names_deficiency():
    data = Dataset(np.array([[1.0, 2.0], [1.0, 3.0], [5.0, 1.0], [5.0, 2.0]]), np.array([0, 0, 1, 1]))
    with pytest.raises(SingularCovarianceError, match="1 of 2 dimensions"):
        lda_train(data, ridge=0.0)


def test_lda_pooled_covariance_monte_carlo():
    rng = np.random.default_rng(7)
    cov = np.diag([2.0, 0.5])
    a = rng.multivariate_normal([0, 0], cov, 200)
    b = rng.multivariate_normal([3, 3], cov, 200)
    m = lda_train(Dataset(np.vstack([a, b]), np.r_[np.zeros(200, int), np.ones(200, int)]))
    pooled = np.linalg.inv(m.pooled_cov_inverse)
    np.testing.assert_allclose(np.diag(pooled), np.diag(cov), rtol=0.2)
    assert abs(pooled[0, 1]) < 0.2


def test_lda_needs_two_points_per_class():
    with pytest.raises(ValueError, match="at least 2"):
        lda_train(one_d([0], [1, 2]))


def unit_lda():
    from accent_mfcc.classifiers import LdaModel

    return LdaModel(np.array([0, 1]), np.array([[0.0], [4.0]]), np.array([[1.0]]), np.log([0.5, 0.5]))


def test_lda_score_examples():
    m = unit_lda()
    s1 = lda_score(m, [1.0])
    assert s1[0] > s1[1]
    s2 = lda_score(m, [2.0])
    assert abs(s2[0] - s2[1]) < 1e-12


def test_lda_score_difference_is_affine():
    m = lda_train(gaussian_pair(0))
    rng = np.random.default_rng(1)
    for _ in range(20):
        x, y = rng.normal(size=(2, 5)) * 3
        d = lambda z: np.subtract(*lda_score(m, z))
        assert d((x + y) / 2) == pytest.approx((d(x) + d(y)) / 2, rel=1e-9, abs=1e-9)


def test_lda_score_dimension_mismatch():
    with pytest.raises(ValueError, match="features"):
        lda_score(unit_lda(), [1.0, 2.0])


def test_qda_mean_query_wins():
    m = qda_train(gaussian_pair(3, scale1=1.0))
    for k in range(2):
        assert discriminant_predict(qda_score(m, m.class_means[k])) == k


def test_qda_with_pooled_covariances_matches_lda():
    data = gaussian_pair(4, scale1=2.0)
    lda = lda_train(data, ridge=0.0)
    pooled = np.linalg.inv(lda.pooled_cov_inverse)
    qda = type(qda_train(data)).from_covariances(
        lda.classes, lda.class_means, [pooled, pooled], np.exp(lda.log_priors)
    )
    queries = np.random.default_rng(5).normal(size=(1000, 5)) * 3 + 0.75
    np.testing.assert_array_equal(qda.predict(queries), lda.predict(queries))


def brute_force_bayes(data, covs, queries):
    classes = np.unique(data.labels)
    logs = []
    for c, cov in zip(classes, covs):
        g = data.points[data.labels == c]
        prior = g.shape[0] / len(data)
        logs.append(np.log(prior) + multivariate_normal(g.mean(axis=0), cov).logpdf(queries))
    return np.argmax(np.column_stack(logs), axis=1)


def test_bayes_oracle_equivalence():
    data = gaussian_pair(11, scale1=1.7)
    queries = np.random.default_rng(12).normal(size=(1000, 5)) * 2.5 + 0.75
    groups = [data.points[data.labels == c] for c in (0, 1)]
    scatter = sum((g - g.mean(0)).T @ (g - g.mean(0)) for g in groups)
    pooled = scatter / (len(data) - 2)
    pooled += 1e-6 * np.trace(pooled) / 5 * np.eye(5)
    per_class = []
    for g in groups:
        cov = np.cov(g, rowvar=False)
        per_class.append(cov + 1e-6 * np.trace(cov) / 5 * np.eye(5))
    np.testing.assert_array_equal(lda_train(data).predict(queries), brute_force_bayes(data, [pooled] * 2, queries))
    np.testing.assert_array_equal(qda_train(data).predict(queries), brute_force_bayes(data, per_class, queries))


def test_qda_scores_equal_log_density_plus_constant():
    data = gaussian_pair(2, scale1=1.3)
    m = qda_train(data, ridge=0.0)
    covs = [np.cov(data.points[data.labels == c], rowvar=False) for c in (0, 1)]
    queries = np.random.default_rng(0).normal(size=(50, 5))
    for k, cov in enumerate(covs):
        direct = np.log(0.5) + multivariate_normal(m.class_means[k], cov).logpdf(queries)
        offset = qda_score(m, queries)[:, k] - direct
        np.testing.assert_allclose(offset, 2.5 * np.log(2 * np.pi), rtol=1e-9)


@pytest.mark.parametrize("scores, expected", [([0.2, 0.9], 1), ([0.5, 0.5], 0), ([3.0, 1.0, 3.0], 0)])
def test_discriminant_predict(scores, expected):
    assert discriminant_predict(scores) == expected
    assert discriminant_predict(np.array(scores) + 123.25) == expected


def test_discriminant_permutation_invariance():
    data = gaussian_pair(21, scale1=1.5)
    perm = np.random.default_rng(0).permutation(len(data))
    shuffled = data.subset(perm)
    queries = np.random.default_rng(1).normal(size=(500, 5)) * 2
    for train in (lda_train, qda_train):
        np.testing.assert_array_equal(train(data).predict(queries), train(shuffled).predict(queries))


# kernels and SVM


def test_kernel_examples():
    assert kernel_eval(KernelSpec("rbf", 1.0), [1, 2], [1, 2]) == 1.0
    assert kernel_eval(KernelSpec("polynomial", 1.0, 2, 1.0), [1, 1], [1, 1]) == 9.0
    assert kernel_eval(KernelSpec("rbf", 0.5), [0, 0], [3, 4]) == pytest.approx(EXP_MINUS_12_5, rel=1e-12)


def test_kernel_errors():
    with pytest.raises(ValueError, match="mismatch"):
        kernel_eval(KernelSpec("rbf", 1.0), [1, 2], [1])
    with pytest.raises(ValueError):
        KernelSpec("rbf", gamma=-1.0)
    with pytest.raises(ValueError):
        KernelSpec("sigmoid")


def test_rbf_bounds():
    rng = np.random.default_rng(0)
    spec = KernelSpec("rbf", 0.3)
    for _ in range(100):
        a, b = rng.normal(size=(2, 4))
        assert 0 < kernel_eval(spec, a, b) < 1


def test_two_point_closed_form():
    data = one_d([-1.0], [1.0])
    m = svm_train(data, KernelSpec("rbf", 1.0), C=10.0, tol=1e-9)
    np.testing.assert_allclose(m.alphas, [TWO_POINT_ALPHA, TWO_POINT_ALPHA], rtol=1e-6)
    assert abs(m.bias) < 1e-9
    np.testing.assert_array_equal(m.predict([[-1.0], [1.0]]), [0, 1])
    assert m.predict([1.0]) == 1


def test_separable_clusters_fit_perfectly():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(40, 2)) * 0.3
    b = rng.normal(size=(40, 2)) * 0.3 + 6
    data = Dataset(np.vstack([a, b]), np.r_[np.zeros(40, int), np.ones(40, int)])
    for kind in ("rbf", "polynomial"):
        m = svm_train(data, KernelSpec(kind), C=10.0)
        assert np.all(m.predict(data.points) == data.labels)


@pytest.mark.parametrize("kind", ["rbf", "polynomial"])
@pytest.mark.parametrize("seed", range(5))
def test_kkt_and_feasibility(kind, seed):
    data = gaussian_pair(100 + seed, n=50, shift=1.0)
    m = svm_train(data, KernelSpec(kind), C=1.0, tol=1e-3, seed=seed)
    assert kkt_residuals(m, data).max() <= 1e-3
    alpha = full_alphas(m, len(data))
    assert np.all(alpha >= 0) and np.all(alpha <= m.C)
    y = np.where(data.labels == 1, 1.0, -1.0)
    assert abs(np.dot(alpha, y)) < 1e-8


def test_svm_deterministic_given_seed():
    data = gaussian_pair(9, n=40, shift=0.8)
    a = svm_train(data, KernelSpec("rbf"), seed=4)
    b = svm_train(data, KernelSpec("rbf"), seed=4)
    np.testing.assert_array_equal(a.alphas, b.alphas)
    assert a.bias == b.bias


def test_svm_iteration_cap():
    data = gaussian_pair(9, n=40, shift=0.3)
    with pytest.raises(ConvergenceError, match="worst KKT violation"):
        svm_train(data, KernelSpec("rbf"), C=100.0, max_iter=2)


def test_svm_empty_sum_uses_bias():
    m = SvmModel(np.zeros((0, 2)), np.zeros(0), np.zeros(0), -0.5, KernelSpec("rbf", 1.0), 1.0)
    np.testing.assert_array_equal(m.predict(np.ones((3, 2))), [0, 0, 0])
    m = SvmModel(np.zeros((0, 2)), np.zeros(0), np.zeros(0), 0.5, KernelSpec("rbf", 1.0), 1.0)
    np.testing.assert_array_equal(m.predict(np.ones((3, 2))), [1, 1, 1])


def test_svm_zero_alpha_terms_change_nothing():
    data = gaussian_pair(5, n=30)
    m = svm_train(data, KernelSpec("rbf", 0.2))
    padded = SvmModel(
        np.vstack([m.support_vectors, data.points[:3]]),
        np.r_[m.support_labels, [1.0, -1.0, 1.0]],
        np.r_[m.alphas, [0.0, 0.0, 0.0]],
        m.bias, m.kernel, m.C, m.classes,
    )
    q = np.random.default_rng(0).normal(size=(100, 5))
    np.testing.assert_array_equal(m.predict(q), padded.predict(q))


def test_svm_rejects_bad_queries():
    m = svm_train(gaussian_pair(5, n=20), KernelSpec("rbf"))
    with pytest.raises(ValueError, match="features"):
        m.predict(np.ones((2, 3)))


# k-NN


def test_knn_distance_examples():
    assert knn_distance("euclidean", [0, 0], [3, 4]) == 5.0
    assert knn_distance("manhattan", [0, 0], [3, 4]) == 7.0
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = rng.normal(size=(2, 6))
        for metric in ("euclidean", "manhattan"):
            assert knn_distance(metric, a, a) == 0.0
            assert knn_distance(metric, a, b) == knn_distance(metric, b, a)
    with pytest.raises(ValueError):
        knn_distance("euclidean", [0, 0], [1])


def test_knn_examples():
    m1 = knn_train(one_d([0.0], [10.0]), k=1)
    assert knn_predict(m1, [1.0]) == 0
    m3 = knn_train(one_d([0.0, 1.0], [10.0]), k=3)
    assert knn_predict(m3, [0.5]) == 0


def test_knn_self_neighbour():
    data = gaussian_pair(6)
    m = knn_train(data, k=1)
    np.testing.assert_array_equal(m.predict(data.points), data.labels)


def test_knn_rejects_even_k_for_two_classes():
    with pytest.raises(ValueError, match="odd"):
        knn_train(gaussian_pair(0), k=4)
    with pytest.raises(ValueError):
        knn_train(gaussian_pair(0), k=1000)


def test_knn_index_tie_break():
    # Query at 0 is equidistant from stored points 1 and 2; lower index wins.
    pts = np.array([[5.0], [-1.0], [1.0], [7.0]])
    m = KnnModel(pts, np.array([0, 1, 0, 1]), k=1)
    assert m.predict([0.0]) == 1


def test_knn_majority_tie_uses_distance_then_label():
    pts = np.array([[1.0], [-2.0], [3.0], [-3.0]])
    labels = np.array([0, 1, 2, 2])
    m = KnnModel(pts, labels, k=2)
    assert m.predict([0.0]) == 0
    # Equal summed distances fall through to the smaller label.
    m = KnnModel(np.array([[1.0], [-1.0], [5.0]]), np.array([2, 1, 0]), k=2)
    assert m.predict([0.0]) == 1


@pytest.mark.parametrize("metric", ["euclidean", "manhattan"])
def test_knn_scale_invariance(metric):
    data = gaussian_pair(8, shift=0.5)
    q = np.random.default_rng(2).normal(size=(300, 5))
    base = knn_train(data, 5, metric).predict(q)
    scaled = knn_train(Dataset(data.points * 4.0, data.labels), 5, metric).predict(q * 4.0)
    np.testing.assert_array_equal(base, scaled)


@pytest.mark.parametrize("metric", ["euclidean", "manhattan"])
def test_neighbours_match_stable_sort(metric):
    rng = np.random.default_rng(42)
    for _ in range(50):
        pts = rng.integers(-3, 4, size=(30, 3)).astype(float)
        q = rng.integers(-3, 4, size=(8, 3)).astype(float)
        d = np.array([[knn_distance(metric, a, b) for b in pts] for a in q])
        for k in (1, 3, 9, 30):
            idx, dist = nearest_neighbors(metric, q, pts, k)
            ref = np.argsort(d, axis=1, kind="stable")[:, :k]
            np.testing.assert_array_equal(idx, ref)
            np.testing.assert_array_equal(dist, np.take_along_axis(d, ref, axis=1))


def test_knn_rejects_non_finite():
    m = knn_train(gaussian_pair(0))
    with pytest.raises(ValueError, match="non-finite"):
        m.predict(np.full(5, np.nan))


# shared contract and serialization


@pytest.mark.parametrize("name", ["lda", "qda", "svm-rbf", "svm-poly", "knn"])
def test_model_text_roundtrip(tmp_path, name):
    data = gaussian_pair(31, n=40, shift=1.0)
    model = fit(ClassifierSpec(name), data)
    path = tmp_path / "model.txt"
    save_model(path, model, ["seed=0"])
    again = load_model(path)
    q = np.random.default_rng(0).normal(size=(200, 5)) + 0.5
    np.testing.assert_array_equal(model.predict(q), again.predict(q))
    assert dumps(again).split("\n", 1)[1] == dumps(model).split("\n", 1)[1]


def test_model_file_errors():
    with pytest.raises(ModelFormatError, match="not a model"):
        loads("hello\n")
    with pytest.raises(ModelFormatError, match="version 9"):
        loads("accent-mfcc-model 9\nkind=lda\n")
    with pytest.raises(ModelFormatError, match="kind"):
        loads("accent-mfcc-model 1\nkind=tree\n")


@pytest.mark.parametrize("name", ["lda", "qda", "svm-rbf", "svm-poly", "knn"])
def test_training_is_deterministic(name):
    data = gaussian_pair(17, n=40, shift=1.0)
    a, b = fit(ClassifierSpec(name), data), fit(ClassifierSpec(name), data)
    assert dumps(a) == dumps(b)


def test_unknown_classifier():
    with pytest.raises(ValueError, match="unknown classifier"):
        ClassifierSpec("tree")
