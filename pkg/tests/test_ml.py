import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bladetwin.features import FeatureTable
from bladetwin.ml import (
    ConfusionMatrix,
    MLError,
    ModelKind,
    ModelSpec,
    Normalizer,
    SplitSpec,
    TrainedModel,
    class_order,
    default_specs,
    evaluate,
    pairwise_feature_search,
    predict,
    run_bench,
    split_indices,
    train,
    zscore_apply,
    zscore_fit,
)
from bladetwin.ml.data import round_half_up
from bladetwin.ml.forest import default_max_features, grow_tree
from bladetwin.ml.svm import kkt_violations, rbf_kernel, smo_binary, train_binary


def blobs(n_per=40, centers=((0, 0), (4, 0), (0, 4)), scale=0.6, seed=0, labels=None):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(c, scale, (n_per, len(c))) for c in centers])
    names = labels or [f"C{i}" for i in range(len(centers))]
    y = np.repeat(np.array(names, dtype=object), n_per)
    return X, y


def table_from(X, y, names=None):
    keys = [(str(lab), 1, i) for i, lab in enumerate(y)]
    names = names or [f"f{i}" for i in range(X.shape[1])]
    return FeatureTable(keys, names, X)


# --- normalisation -------------------------------------------------------------

def test_zscore_example():
    norm = zscore_fit([[1.0, 10.0], [2.0, 10.0], [3.0, 10.0]])
    np.testing.assert_allclose(norm.mean, [2.0, 10.0])
    np.testing.assert_allclose(norm.std, [1.0, 0.0])
    assert list(norm.zero_variance) == [False, True]
    np.testing.assert_allclose(zscore_apply(norm, [[4.0, 99.0]]), [[2.0, 0.0]])


def test_zscore_errors_and_roundtrip():
    with pytest.raises(MLError):
        zscore_fit([[1.0, np.nan], [2.0, 3.0]])
    norm = zscore_fit(np.random.default_rng(0).standard_normal((10, 3)))
    with pytest.raises(MLError):
        zscore_apply(norm, np.ones((2, 2)))
    again = Normalizer.from_dict(json.loads(json.dumps(norm.to_dict())))
    np.testing.assert_array_equal(again.mean, norm.mean)
    np.testing.assert_array_equal(again.std, norm.std)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_zscore_standardises_training_rows(seed):
    X = np.random.default_rng(seed).normal(3.0, 5.0, (20, 4))
    Z = zscore_apply(zscore_fit(X), X)
    np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(Z.std(axis=0, ddof=1), 1.0, rtol=1e-12)


# --- split ---------------------------------------------------------------------

def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 1.4, 69.99)] == [1, 2, 3, 1, 70]


def test_default_split_counts():
    labels = np.repeat(["Healthy", "D1", "D2", "D3", "D4", "D5"], 100)
    s = split_indices(labels)
    assert (len(s.train), len(s.test)) == (420, 180)
    for c in set(labels):
        assert np.sum(labels[s.train] == c) == 70
    assert not set(s.train) & set(s.test)
    assert split_indices(labels).identity == s.identity
    assert split_indices(labels, SplitSpec(seed=1)).identity != s.identity


def test_split_small_classes():
    labels = np.array(["A", "A", "B", "B", "B"])
    s = split_indices(labels)
    assert np.sum(labels[s.train] == "A") == 1 and np.sum(labels[s.test] == "A") == 1
    with pytest.raises(MLError):
        split_indices(np.array(["A", "B", "B"]))
    with pytest.raises(MLError):
        SplitSpec(train_fraction=1.0)


@settings(max_examples=30, deadline=None)
@given(sizes=st.lists(st.integers(2, 40), min_size=2, max_size=6), frac=st.floats(0.1, 0.9), seed=st.integers(0, 99))
def test_split_is_stratified_partition(sizes, frac, seed):
    labels = np.concatenate([[f"c{i}"] * n for i, n in enumerate(sizes)])
    s = split_indices(labels, SplitSpec(frac, True, seed))
    assert sorted(np.concatenate([s.train, s.test]).tolist()) == list(range(len(labels)))
    for i, n in enumerate(sizes):
        k = np.sum(labels[s.train] == f"c{i}")
        assert k == min(max(round_half_up(frac * n), 1), n - 1)


# --- classifiers ---------------------------------------------------------------

def test_knn_k1_recovers_training_labels():
    X, y = blobs()
    model = train(ModelSpec.of("KNN", k=1), X, y)
    assert np.all(predict(model, X) == y)


def test_knn_tie_goes_to_smallest_class_index():
    X = np.array([[-1.0], [1.0]])
    y = np.array(["B", "A"])
    model = train(ModelSpec.of("KNN", k=2), X, y, classes=["A", "B"])
    assert predict(model, [[0.0]])[0] == "A"
    model = train(ModelSpec.of("KNN", k=2), X, y, classes=["B", "A"])
    assert predict(model, [[0.0]])[0] == "B"


def test_gaussian_nb_separates_blobs():
    X, y = blobs(n_per=100)
    Xt, yt = blobs(n_per=100, seed=1)
    model = train(ModelSpec.of("NB"), X, y)
    assert evaluate(model, Xt, yt).accuracy >= 0.99


def test_nb_handles_constant_feature():
    X, y = blobs()
    X = np.column_stack([X, np.ones(len(X))])
    model = train(ModelSpec.of("NB"), X, y)
    assert np.all(np.isfinite(model.state["variances"]))
    assert evaluate(model, X, y).accuracy > 0.95


def test_smo_separable_problem_satisfies_kkt():
    rng = np.random.default_rng(2)
    X = np.vstack([rng.normal(-2, 0.5, (30, 2)), rng.normal(2, 0.5, (30, 2))])
    y = np.r_[np.ones(30), -np.ones(30)]
    machine, alpha = train_binary(X, y, C=10.0, gamma=0.5, tol=1e-3)
    assert np.all(np.sign(machine.decision(X)) == y)
    assert kkt_violations(X, y, alpha, machine, 10.0, 1e-3) == 0
    assert abs(np.sum(alpha * y)) < 1e-9
    assert np.all((alpha >= 0) & (alpha <= 10.0))


def test_smo_iteration_cap():
    X, y = blobs(n_per=30, centers=((0, 0), (0.5, 0)), scale=1.0)
    yy = np.where(y == "C0", 1.0, -1.0)
    K = rbf_kernel(X, X, 0.5)
    with pytest.raises(MLError, match="did not converge"):
        smo_binary(K, yy, C=100.0, tol=1e-3, max_iter=3)


def test_svm_multiclass_one_vs_one():
    X, y = blobs()
    model = train(ModelSpec.of("SVM"), X, y)
    assert len(model.state["machines"]) == 3
    assert evaluate(model, X, y).accuracy > 0.97


def test_random_forest_tree_properties():
    X, y = blobs()
    codes = np.searchsorted(["C0", "C1", "C2"], y)
    tree = grow_tree(X, codes, 3, 2, np.random.default_rng(0))
    assert np.all(tree.apply(X) == codes)  # unrestricted tree fits the training data
    assert default_max_features(2) == 2 and default_max_features(16) == 4 and default_max_features(17) == 5


def test_random_forest_oob_and_accuracy():
    X, y = blobs()
    model = train(ModelSpec.of("RF", n_trees=30, oob=True, seed=3), X, y)
    assert 0.9 < model.state["oob_accuracy"] <= 1.0
    Xt, yt = blobs(seed=5)
    assert evaluate(model, Xt, yt).accuracy > 0.95


def test_model_spec_validation():
    with pytest.raises(MLError):
        ModelSpec.of("KNN", depth=3)
    with pytest.raises(MLError):
        ModelSpec.of("SVM", c=-1.0)
    with pytest.raises(ValueError):
        ModelSpec.of("LDA")
    assert [s.kind for s in default_specs(1)] == [ModelKind.RF, ModelKind.SVM, ModelKind.KNN, ModelKind.NB]


def test_training_errors():
    X, y = blobs()
    with pytest.raises(MLError):
        train(ModelSpec.of("KNN"), X, np.repeat("A", len(X)))
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(MLError):
        train(ModelSpec.of("NB"), bad, y)
    model = train(ModelSpec.of("KNN"), X, y)
    with pytest.raises(MLError):
        predict(model, np.ones((1, 3)))


@pytest.mark.parametrize("kind", ["RF", "SVM", "KNN", "NB"])
def test_serialisation_roundtrip(kind):
    X, y = blobs()
    spec = ModelSpec.of(kind, **({"n_trees": 10} if kind == "RF" else {}))
    model = train(spec, X, y)
    again = TrainedModel.from_dict(json.loads(json.dumps(model.to_dict())))
    Xt, _ = blobs(seed=7)
    np.testing.assert_array_equal(predict(again, Xt), predict(model, Xt))


@pytest.mark.parametrize("kind", ["RF", "SVM", "KNN"])
def test_training_is_thread_invariant(kind):
    X, y = blobs()
    spec = ModelSpec.of(kind, **({"n_trees": 20} if kind == "RF" else {}))
    a = train(spec, X, y, threads=1)
    b = train(spec, X, y, threads=4)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


@settings(max_examples=10, deadline=None)
@given(scale=st.floats(0.1, 100.0), shift=st.floats(-100.0, 100.0))
def test_bench_invariant_to_affine_feature_maps(scale, shift):
    X, y = blobs(n_per=20, scale=1.5)
    a = run_bench(table_from(X, y), ["f0", "f1"], [ModelSpec.of("KNN"), ModelSpec.of("NB")])
    b = run_bench(table_from(scale * X + shift, y), ["f0", "f1"], [ModelSpec.of("KNN"), ModelSpec.of("NB")])
    for k in a.confusion:
        np.testing.assert_array_equal(a.confusion[k].counts, b.confusion[k].counts)


# --- confusion and bench -------------------------------------------------------

def test_confusion_matrix():
    cm = ConfusionMatrix.from_labels(["A", "A", "B", "B"], ["A", "B", "B", "B"], ["A", "B"])
    np.testing.assert_array_equal(cm.counts, [[1, 1], [0, 2]])
    assert cm.accuracy == 0.75
    np.testing.assert_array_equal(cm.row_totals, [2, 2])


def test_class_order_puts_healthy_first():
    assert class_order(["D2", "Healthy", "D1", "D2"]) == ["Healthy", "D1", "D2"]


def test_bench_drops_rows_with_missing_values():
    X, y = blobs()
    X[3, 0] = np.nan
    res = run_bench(table_from(X, y), ["f0", "f1"], [ModelSpec.of("KNN")])
    assert res.n_dropped == 1
    in_test = 3 in set(res.split.test.tolist())
    assert res.confusion["KNN"].counts.sum() == len(res.split.test) - int(in_test)


def test_pair_search_finds_informative_pair():
    rng = np.random.default_rng(4)
    n = 30
    y = np.repeat(np.array(["Healthy", "D1", "D2", "D3"], dtype=object), n)
    code = np.repeat(np.arange(4), n)
    cols = {
        "a": (code % 2) * 3.0 + 0.3 * rng.standard_normal(4 * n),
        "b": (code // 2) * 3.0 + 0.3 * rng.standard_normal(4 * n),
        "c": rng.standard_normal(4 * n),
        "d": rng.standard_normal(4 * n),
    }
    X = np.column_stack(list(cols.values()))
    res = pairwise_feature_search(table_from(X, y, list(cols)), list(cols), default_specs(0))
    assert res.n_evaluations == 6 * 4
    assert res.scores[0].pair == ("a", "b")
    assert res.scores[0].best == 1.0
    assert len(res.top(5)) == 5


# --- independent implementations ------------------------------------------------

def test_against_scikit_learn():
    sk_svm = pytest.importorskip("sklearn.svm")
    sk_nb = pytest.importorskip("sklearn.naive_bayes")
    sk_nn = pytest.importorskip("sklearn.neighbors")
    X, y = blobs(n_per=60, scale=1.6, seed=11)
    Xt, yt = blobs(n_per=60, scale=1.6, seed=12)
    norm = zscore_fit(X)
    Z, Zt = zscore_apply(norm, X), zscore_apply(norm, Xt)

    ours = predict(train(ModelSpec.of("SVM", tol=1e-6), Z, y), Zt)
    ref = sk_svm.SVC(C=1.0, gamma=0.5, kernel="rbf", tol=1e-6).fit(Z, y).predict(Zt)
    assert np.mean(ours == ref) >= 0.99

    ours = predict(train(ModelSpec.of("KNN"), Z, y), Zt)
    ref = sk_nn.KNeighborsClassifier(5).fit(Z, y).predict(Zt)
    assert np.mean(ours == ref) >= 0.98

    ours = predict(train(ModelSpec.of("NB"), Z, y), Zt)
    ref = sk_nb.GaussianNB().fit(Z, y).predict(Zt)
    assert np.mean(ours == ref) >= 0.99


def test_svm_dual_matches_scikit_learn():
    sk_svm = pytest.importorskip("sklearn.svm")
    X, y = blobs(n_per=40, centers=((0, 0), (1.5, 1.0)), scale=1.0, seed=3)
    yy = np.where(y == "C0", 1.0, -1.0)
    machine, alpha = train_binary(X, yy, C=1.0, gamma=0.7, tol=1e-8, max_iter=10**6)
    ref = sk_svm.SVC(C=1.0, gamma=0.7, tol=1e-8).fit(X, yy)
    ours_dec = machine.decision(X)
    # sklearn orders classes ascending (-1, +1), so its decision is for +1
    np.testing.assert_allclose(ours_dec, ref.decision_function(X), atol=1e-4)
