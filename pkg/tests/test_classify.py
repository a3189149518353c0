import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohortstrat import CANCER_TYPES, DataError
from cohortstrat.classify import (ClassifierSpec, compare_feature_subsets, cross_validate,
                                  evaluate, make_model, oversample, split_train_test,
                                  stratified_split_indices)
from cohortstrat.classify.evaluation import (oversample_indices, stratified_folds,
                                             write_overall_table, write_per_class_table,
                                             write_reports_json)
from cohortstrat.classify.models import DecisionTree, FeedforwardNN, LogisticRegression
from cohortstrat.cohort import LabeledMatrix, apply_stoplist, build_matrix, frequency_filter
from cohortstrat.synth import SynthConfig, generate


def toy_matrix(counts, n_cols=4, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.array([c for c, n in counts.items() for _ in range(n)], dtype=object)
    X = rng.integers(0, 2, (len(labels), n_cols)).astype(np.uint8)
    cols = [f"P:{j}" for j in range(n_cols)]
    return LabeledMatrix(X, labels, [f"R{i}" for i in range(len(labels))], cols,
                         ["phenotype"] * n_cols)


@pytest.fixture(scope="module")
def cohort_matrix():
    recs = apply_stoplist(generate(SynthConfig(patients_per_class=(40,) * 7, seed=2)))
    return build_matrix(recs, frequency_filter(recs, 5, 3))[0]


def test_split_ten_per_class():
    m = toy_matrix({"lung": 10, "liver": 10, "breast": 10})
    tr, te = split_train_test(m, 0.7, seed=3)
    for c in ("lung", "liver", "breast"):
        assert (tr.labels == c).sum() == 7 and (te.labels == c).sum() == 3


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(2, 40), min_size=2, max_size=7), st.floats(0.1, 0.9),
       st.integers(0, 100))
def test_split_partition_and_proportions(sizes, frac, seed):
    labels = np.array([CANCER_TYPES[i] for i, n in enumerate(sizes) for _ in range(n)])
    tr, te = stratified_split_indices(labels, frac, seed)
    assert sorted(np.r_[tr, te].tolist()) == list(range(len(labels)))
    for i, n in enumerate(sizes):
        k = (labels[tr] == CANCER_TYPES[i]).sum()
        assert abs(k - frac * n) <= 1 and 1 <= k <= n - 1


def test_split_default_cohort_partition(default_cohort):
    labels = np.array([r.label for r in default_cohort])
    tr, te = stratified_split_indices(labels, 0.5, 0)
    assert len(tr) + len(te) == len(default_cohort)


def test_split_tiny_class_errors():
    with pytest.raises(DataError):
        stratified_split_indices(np.array(["lung"] * 5 + ["liver"]), 0.7, 0)


def test_oversample_counts_and_membership():
    m = toy_matrix({"lung": 5, "liver": 2})
    os = oversample(m, seed=1)
    assert (os.labels == "lung").sum() == 5 and (os.labels == "liver").sum() == 5
    originals = {(tuple(r), lab) for r, lab in zip(m.X.tolist(), m.labels)}
    assert all((tuple(r), lab) in originals for r, lab in zip(os.X.tolist(), os.labels))
    bal = toy_matrix({"lung": 3, "liver": 3})
    assert np.array_equal(oversample_indices(bal.labels), np.arange(6))


def test_folds_partition():
    labels = np.array(["a"] * 13 + ["b"] * 7)
    f = stratified_folds(labels, 5, 0)
    assert set(f) == set(range(5))
    for k in range(5):
        assert 2 <= (labels[f == k] == "a").sum() <= 3


def test_cv_singleton_and_selection(cohort_matrix):
    only = ClassifierSpec("gaussian_nb", {})
    assert cross_validate(cohort_matrix, [only], folds=3) == only
    bad = ClassifierSpec("logistic_regression", {"epochs": 0})
    good = ClassifierSpec("logistic_regression", {})
    best, means = cross_validate(cohort_matrix, [bad, good], folds=3, return_scores=True)
    assert best == good and means[1] >= 0.9 and means[0] <= 0.5
    # ties go to the earlier spec
    assert cross_validate(cohort_matrix, [good, good], folds=3) is good


def test_cv_reduces_folds(caplog, cohort_matrix):
    small = cohort_matrix.take_rows(np.r_[np.flatnonzero(cohort_matrix.labels == "lung")[:4],
                                         np.flatnonzero(cohort_matrix.labels == "liver")[:3]])
    spec = ClassifierSpec("gaussian_nb", {})
    with caplog.at_level("WARNING"):
        assert cross_validate(small, [spec], folds=10) == spec
    assert "reducing folds" in caplog.text


def test_lr_separable_toy():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [3.0, 3.0], [3.0, 4.0]])
    y = np.array(["lung", "lung", "liver", "liver"])
    assert (make_model(ClassifierSpec("logistic_regression", {})).fit(X, y).predict(X) == y).all()


def test_lr_shift_invariance(rng):
    X = rng.normal(size=(30, 4))
    y = rng.choice(["a", "b", "c"], 30)
    m = LogisticRegression(epochs=50).fit(X, y)
    proba, pred = m.predict_proba(X), m.predict(X)
    m.b = m.b + 5.0  # the same constant added to every class logit
    assert np.allclose(m.predict_proba(X), proba, atol=1e-12)
    assert np.array_equal(m.predict(X), pred)


def test_gnb_identical_stats_predicts_prior_majority():
    # both classes see the same 0/1 feature distribution; only the prior differs
    X = np.tile([[0.0], [1.0]], (6, 1))
    y = np.array(["lung"] * 8 + ["liver"] * 4)
    pred = make_model(ClassifierSpec("gaussian_nb", {})).fit(X, y).predict(np.array([[0.5], [7]]))
    assert (pred == "lung").all()


def test_gnb_constant_columns_finite():
    X = np.zeros((6, 3))
    y = np.array(["a", "b"] * 3)
    p = make_model(ClassifierSpec("gaussian_nb", {})).fit(X, y).predict_proba(np.ones((2, 3)))
    assert np.isfinite(p).all()


def test_rf_single_tree_equals_tree_on_bootstrap(rng):
    X = rng.integers(0, 2, (80, 10)).astype(float)
    y = np.where(X[:, 0] + X[:, 3] > 1, "lung", "liver")
    y[rng.random(80) < 0.1] = "breast"
    rf = make_model(ClassifierSpec("random_forest", {"trees": 1, "max_features": None}), 11)
    rf.fit(X, y)
    b = rf.bootstrap_indices[0]
    tree = DecisionTree(max_depth=12, min_leaf=2).fit(X[b], y[b])
    Xt = rng.integers(0, 2, (50, 10)).astype(float)
    assert np.array_equal(rf.predict_proba(Xt), tree.predict_proba(Xt)[:, np.searchsorted(
        tree.classes_, rf.classes_)])


def test_tree_fits_training_data(rng):
    X = rng.integers(0, 2, (60, 6)).astype(float)
    y = np.where(X[:, 1] == 1, "a", np.where(X[:, 2] == 1, "b", "c"))
    t = DecisionTree(max_depth=5, min_leaf=1).fit(X, y)
    assert (t.predict(X) == y).all()


def test_fnn_gradient_finite_differences(rng):
    net = FeedforwardNN(hidden=5, l2=1e-3)
    X = rng.normal(size=(3, 4))
    Y = np.eye(3)[[0, 2, 1]]
    params = net.init_params(4, 3, rng)
    params["b1"] += 0.3  # keep pre-activations away from the ReLU kink
    _, grads = net.loss_and_grads(params, X, Y)
    for k, P in params.items():
        fd = np.zeros_like(P)
        for idx in np.ndindex(P.shape):
            old = P[idx]
            P[idx] = old + 1e-5
            up = net.loss_and_grads(params, X, Y)[0]
            P[idx] = old - 1e-5
            down = net.loss_and_grads(params, X, Y)[0]
            P[idx] = old
            fd[idx] = (up - down) / 2e-5
        err = np.linalg.norm(fd - grads[k]) / max(np.linalg.norm(fd), np.linalg.norm(grads[k]), 1e-12)
        assert err <= 1e-4, k


def test_fnn_nan_reports_epoch():
    X = np.array([[1e300, 0.0], [0.0, 1.0]])
    with pytest.raises(FloatingPointError, match="epoch"):
        with np.errstate(all="ignore"):
            FeedforwardNN(hidden=3, lr=1e10, epochs=5).fit(X, ["a", "b"])


@pytest.mark.parametrize("kind", ["logistic_regression", "gaussian_nb", "decision_tree",
                                  "random_forest", "feedforward_nn"])
def test_models_deterministic_and_valid_labels(kind, cohort_matrix):
    params = {"trees": 10} if kind == "random_forest" else {}
    spec = ClassifierSpec(kind, params)
    X, y = cohort_matrix.X.astype(float), cohort_matrix.labels
    a = make_model(spec, 4).fit(X, y).predict(X)
    b = make_model(spec, 4).fit(X, y).predict(X)
    assert np.array_equal(a, b) and set(a) <= set(CANCER_TYPES)
    assert (a == y).mean() > 0.5


@pytest.mark.parametrize("kind,params", [("svm", {}), ("random_forest", {"trees": 0}),
                                         ("decision_tree", {"depth": 3}),
                                         ("logistic_regression", {"lr": -1}),
                                         ("random_forest", {"max_features": "log2"})])
def test_spec_validation(kind, params):
    with pytest.raises(ValueError):
        ClassifierSpec(kind, params)


def test_evaluate_metrics():
    y = ["lung", "lung", "liver", "liver", "breast"]
    p = ["lung", "liver", "liver", "liver", "lung"]
    r = evaluate(y, p)
    assert r.confusion.shape == (7, 7)
    assert r.confusion.sum(axis=1).tolist() == [2, 0, 1, 0, 0, 0, 2]
    assert r.accuracy == pytest.approx(3 / 5)
    f1 = dict(zip(r.classes, r.f1))
    assert f1["breast"] == 0.0 and f1["liver"] == pytest.approx(0.8)
    assert f1["lung"] == pytest.approx(0.5)
    assert r.macro_f1 == pytest.approx((0.5 + 0.8 + 0.0) / 3)
    for v in (r.precision, r.recall, r.f1):
        assert ((0 <= v) & (v <= 1)).all()


def test_compare_subsets(tmp_path, cohort_matrix):
    spec = ClassifierSpec("logistic_regression", {})
    res = compare_feature_subsets(cohort_matrix, spec, seed=0, folds=3)
    assert list(res) == ["joint", "phenotypic", "genetic"]
    for r in res.values():
        assert np.array_equal(r.train_idx, res["joint"].train_idx)
        assert np.array_equal(r.test_idx, res["joint"].test_idx)
        assert r.confusion.sum() == len(r.test_idx)
    assert res["joint"].macro_f1 >= max(res["phenotypic"].macro_f1, res["genetic"].macro_f1) - 0.02
    reps = list(res.values())
    write_reports_json(reps, tmp_path / "r.json")
    write_overall_table(reps, tmp_path / "o.csv")
    write_per_class_table(reps, tmp_path / "p.csv")
    assert json.loads((tmp_path / "r.json").read_text())[0]["subset"] == "joint"
    head = (tmp_path / "o.csv").read_text().splitlines()[0].split(",")
    assert head[0] == "model" and "genetic_f1" in head and len(head) == 10
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "model," + ",".join(CANCER_TYPES)


def test_subset_columns(cohort_matrix):
    from cohortstrat.classify.evaluation import subset_columns
    kinds = cohort_matrix.col_kinds
    assert len(subset_columns(cohort_matrix, "joint")) == len(kinds)
    gen = subset_columns(cohort_matrix, "genetic")
    assert {kinds[j] for j in gen} == {"genetic", "demographic"}
    assert cohort_matrix.columns[gen[-1]] == "D:gender"
