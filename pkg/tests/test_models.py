import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from gridsentry.errors import ContractError, StratificationError, ValidationError
from gridsentry.models import (
    KINDS,
    SUITE,
    DecisionTree,
    GaussianNB,
    KNeighbors,
    LogisticRegression,
    ModelSpec,
    RandomForest,
    evaluate_offline,
    fit,
    grid_search,
    load_model,
    save_model,
    softmax,
    suite_spec,
)
from gridsentry.models import serialize
from gridsentry.models.mlp import MLP, init_params, loss_and_grads
from gridsentry.models.selection import stratified_folds
from gridsentry.prep import LabelEncoder, LabeledDataset

FAST = {
    "decision_tree": {},
    "random_forest": {"n_estimators": 7},
    "extra_trees": {"n_estimators": 7},
    "adaboost": {"n_estimators": 10},
    "gradient_boosting": {"n_estimators": 5},
    "knn": {"n_neighbors": 3},
    "gaussian_nb": {},
    "logistic_regression": {"max_iter": 50},
    "mlp": {"hidden_layers": (8, 8), "epochs": 5, "batch_size": 16},
}


def blobs(n=90, k=3, d=4, seed=0, spread=0.6):
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=3.0, size=(k, d))
    y = np.arange(n) % k
    X = centers[y] + rng.normal(scale=spread, size=(n, d))
    return X, y


def as_dataset(X, y):
    enc = LabelEncoder(np.arange(int(y.max()) + 1))
    return LabeledDataset(np.asarray(X, float), np.asarray(y), enc)


def build(kind, **kw):
    return KINDS[kind](seed=3, **{**FAST[kind], **kw})


# --------------------------------------------------------------------------- contract


@pytest.mark.parametrize("kind", sorted(KINDS))
def test_simplex_and_argmax(kind):
    X, y = blobs()
    m = build(kind).fit(X, y)
    Q = np.random.default_rng(1).normal(scale=4.0, size=(40, X.shape[1]))
    P = m.predict_proba(Q)
    assert P.shape == (40, 3)
    assert np.all(P >= 0) and np.allclose(P.sum(axis=1), 1.0, atol=1e-9)
    assert np.array_equal(m.predict(Q), np.argmax(P, axis=1))


@pytest.mark.parametrize("kind", sorted(KINDS))
def test_bit_stable_given_seed(kind):
    X, y = blobs(seed=4)
    a = build(kind).fit(X, y).predict_proba(X)
    b = build(kind).fit(X, y).predict_proba(X)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kind", sorted(KINDS))
def test_serialization_round_trip(kind, tmp_path):
    X, y = blobs(seed=5)
    m = build(kind).fit(X, y)
    spec = ModelSpec(kind, FAST[kind], None, 3)
    save_model(m, spec, tmp_path / "m.gsm", {"note": "x"})
    back, spec2, header = load_model(tmp_path / "m.gsm")
    assert header["note"] == "x" and spec2.kind == kind
    assert np.array_equal(back.predict_proba(X), m.predict_proba(X))


def test_serialization_is_byte_stable(tmp_path):
    X, y = blobs()
    m = build("random_forest").fit(X, y)
    spec = ModelSpec("random_forest", FAST["random_forest"])
    save_model(m, spec, tmp_path / "a.gsm")
    save_model(m, spec, tmp_path / "b.gsm")
    assert (tmp_path / "a.gsm").read_bytes() == (tmp_path / "b.gsm").read_bytes()


def test_version_mismatch_rejected(tmp_path, monkeypatch):
    X, y = blobs()
    m = build("gaussian_nb").fit(X, y)
    monkeypatch.setattr(serialize, "FORMAT_VERSION", 99)
    save_model(m, ModelSpec("gaussian_nb"), tmp_path / "m.gsm")
    monkeypatch.setattr(serialize, "FORMAT_VERSION", 1)
    with pytest.raises(ValidationError, match="format"):
        load_model(tmp_path / "m.gsm")


def test_width_mismatch():
    X, y = blobs()
    m = build("gaussian_nb").fit(X, y)
    with pytest.raises(ContractError):
        m.predict_proba(np.zeros((2, 3)))


def test_single_class_rejected():
    with pytest.raises(ContractError):
        DecisionTree().fit(np.zeros((4, 2)), np.zeros(4, dtype=int))


@pytest.mark.parametrize("kind,kw", [
    ("knn", {"n_neighbors": 0}), ("decision_tree", {"max_depth": 0}),
    ("gradient_boosting", {"learning_rate": 0.0}), ("mlp", {"hidden_layers": ()}),
    ("random_forest", {"n_estimators": 0}), ("adaboost", {"learning_rate": -1.0}),
    ("logistic_regression", {"learning_rate": 0}), ("gaussian_nb", {"var_smoothing": -1}),
])
def test_bad_hyperparameters(kind, kw):
    with pytest.raises(ValidationError):
        KINDS[kind](**kw)


def test_unknown_hyperparameter_and_model():
    with pytest.raises(ValidationError):
        KNeighbors(k=3)
    with pytest.raises(ValidationError):
        suite_spec("svm")
    with pytest.raises(ValidationError):
        ModelSpec("svm").build()


@pytest.mark.parametrize("kind", ["knn", "gaussian_nb"])
def test_weights_ignored_with_warning(kind):
    X, y = blobs()
    with pytest.warns(UserWarning, match="ignores"):
        KINDS[kind](class_weight="balanced").fit(X, y)


def test_suite_presets():
    assert suite_spec("mlp_wide").hyperparameters["hidden_layers"] == (256, 256, 256)
    assert suite_spec("mlp_3h").hyperparameters["hidden_layers"] == (64, 64, 64)
    assert suite_spec("mlp_2h").hyperparameters["hidden_layers"] == (64, 64)
    assert len(SUITE) == 11 and "svm" not in SUITE


def test_default_hyperparameters():
    assert RandomForest().hyper["n_estimators"] == 100
    assert KINDS["extra_trees"]().hyper["n_estimators"] == 100
    gb = KINDS["gradient_boosting"]().hyper
    assert gb["n_estimators"] == 100 and gb["learning_rate"] == 0.1
    assert KNeighbors().hyper["n_neighbors"] == 5
    h = MLP().hyper
    assert (h["epochs"], h["batch_size"], h["learning_rate"], h["momentum"], h["l2"]) == (
        200, 256, 1e-3, 0.9, 1e-4)


# --------------------------------------------------------------------------- per-model examples


def test_tree_xor():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1, 1, 0])
    m = DecisionTree(max_depth=2).fit(X, y)
    assert np.mean(m.predict(X) == y) == 1.0
    # no single split separates XOR: every depth-1 split leaves impurity 0.5
    assert oracles.gini_best_split(X, y, 2)[0] == pytest.approx(0.5)
    assert np.mean(DecisionTree(max_depth=1).fit(X, y).predict(X) == y) < 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_tree_root_split_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 6, size=(25, 3)).astype(float)
    y = rng.integers(0, 3, size=25)
    if len(np.unique(y)) < 2:
        return
    imp, f, thr = oracles.gini_best_split(X, y, 3)
    if f is None:
        return
    t = DecisionTree(max_depth=1, seed=seed).fit(X, y, n_classes=3).tree_
    if t.n_nodes == 1:
        return
    left = X[:, t.feature[0]] <= t.threshold[0]
    parts = [y[left], y[~left]]
    got = sum(len(p) / len(y) * (1 - sum((np.sum(p == c) / len(p)) ** 2 for c in range(3))) for p in parts)
    assert got == pytest.approx(imp, abs=1e-12)


def test_gnb_symmetry():
    X = np.array([[-1.2], [-0.8], [0.8], [1.2]])
    y = np.array([0, 0, 1, 1])
    P = GaussianNB().fit(X, y).predict_proba(np.array([[0.0]]))
    assert P[0].tolist() == pytest.approx([0.5, 0.5], abs=1e-15)


def test_knn_k1_memorizes():
    X, y = blobs(spread=3.0)
    assert np.mean(KNeighbors(n_neighbors=1).fit(X, y).predict(X) == y) == 1.0


def test_knn_vote_fractions():
    X = np.array([[0.0], [1.0], [2.0], [10.0]])
    y = np.array([0, 0, 1, 1])
    P = KNeighbors(n_neighbors=3).fit(X, y).predict_proba(np.array([[0.9]]))
    assert P[0].tolist() == pytest.approx([2 / 3, 1 / 3])


def test_knn_distance_ties_go_to_lower_index():
    X = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    y = np.array([0, 1, 2, 3])
    m = KNeighbors(n_neighbors=1).fit(X, y)
    assert m.kneighbors(np.array([[0.0]])).tolist() == [[0]]
    assert KNeighbors(n_neighbors=3).fit(X, y).kneighbors(np.array([[0.0]])).tolist() == [[0, 1, 2]]


def test_logistic_zero_weights_uniform():
    m = LogisticRegression(max_iter=1)
    X, y = blobs(k=4)
    m.fit(X, y)
    m.coef_[:] = 0.0
    m.intercept_[:] = 0.0
    assert np.allclose(m.predict_proba(X[:5]), 0.25, atol=0)


def test_forest_is_mean_of_trees():
    X, y = blobs(n=50)
    m = RandomForest(n_estimators=9, seed=2).fit(X, y)
    per_tree = m.tree_probas(X)
    explicit = sum(per_tree[i] for i in range(9)) / 9
    assert np.allclose(m.predict_proba(X), explicit, atol=1e-15, rtol=0)


def test_forest_threads_match_serial(monkeypatch):
    X, y = blobs(n=60)
    a = RandomForest(n_estimators=6, seed=1).fit(X, y).predict_proba(X)
    monkeypatch.setenv("GRIDSENTRY_THREADS", "3")
    b = RandomForest(n_estimators=6, seed=1).fit(X, y).predict_proba(X)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kind", ["random_forest", "extra_trees", "gradient_boosting", "mlp",
                                  "logistic_regression", "decision_tree"])
def test_learns_separable_blobs(kind):
    X, y = blobs(n=150, seed=7)
    kw = {"epochs": 60} if kind == "mlp" else {}
    m = build(kind, **kw).fit(X, y)
    assert np.mean(m.predict(X) == y) >= 0.95


def test_adaboost_is_weak_but_valid():
    X, y = blobs(n=150, seed=7)
    m = build("adaboost").fit(X, y)
    assert np.mean(m.predict(X) == y) > 1 / 3
    assert len(m.alphas_) >= 1


def test_class_weights_shift_decisions():
    rng = np.random.default_rng(0)
    X = np.concatenate([rng.normal(-0.5, 1, (90, 1)), rng.normal(0.5, 1, (10, 1))])
    y = np.array([0] * 90 + [1] * 10)
    plain = LogisticRegression(max_iter=300).fit(X, y).predict(X).mean()
    weighted = LogisticRegression(max_iter=300, class_weight="balanced").fit(X, y).predict(X).mean()
    assert weighted > plain


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8), st.floats(-100, 100))
def test_softmax_shift_invariance(logits, c):
    z = np.array([logits])
    assert np.argmax(softmax(z.copy())) == np.argmax(softmax(z + c))


# --------------------------------------------------------------------------- oracles


@pytest.mark.parametrize("seed", range(10))
def test_knn_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    n, d, k = rng.integers(5, 60), rng.integers(1, 5), rng.integers(1, 8)
    X = rng.integers(-3, 4, size=(n, d)).astype(float)  # integer grid forces distance ties
    y = rng.integers(0, 3, size=n)
    y[:3] = [0, 1, 2]
    Q = rng.integers(-3, 4, size=(15, d)).astype(float)
    got = KNeighbors(n_neighbors=int(k)).fit(X, y, n_classes=3).predict_proba(Q)
    assert np.array_equal(got, oracles.knn_proba(X, y, Q, int(k), 3))


@pytest.mark.parametrize("seed", range(10))
def test_gnb_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    n, d = rng.integers(6, 60), rng.integers(1, 5)
    X = rng.normal(size=(n, d))
    y = np.arange(n) % 3
    Q = rng.normal(size=(10, d))
    got = GaussianNB().fit(X, y).predict_proba(Q)
    assert np.max(np.abs(got - oracles.gnb_proba(X, y, Q, 3))) <= 1e-12


def test_mlp_gradient_check():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(5, 4))
    y = np.array([0, 1, 2, 1, 0])
    sw = np.full(5, 0.2)
    params = [(W.copy(), b + rng.normal(scale=0.1, size=b.shape))
              for W, b in init_params((4, 6, 5, 3), rng, np.float64)]
    _, grads = loss_and_grads(params, X, y, sw, 1e-2)
    for (W, b), (gW, gb) in zip(params, grads):
        for arr, g in ((W, gW), (b, gb)):
            num = oracles.numeric_grad(lambda: loss_and_grads(params, X, y, sw, 1e-2)[0], arr)
            rel = np.linalg.norm(num - g) / max(np.linalg.norm(num) + np.linalg.norm(g), 1e-12)
            assert rel < 1e-4


# --------------------------------------------------------------------------- selection and evaluation


def test_grid_search_single_point():
    X, y = blobs()
    spec, model, table = grid_search(ModelSpec("knn"), [{"n_neighbors": 3}], as_dataset(X, y))
    assert spec.hyperparameters == {"n_neighbors": 3} and len(table) == 1


def test_grid_search_picks_k1_and_scores_are_direct():
    X, y = blobs(n=60, spread=0.3)
    ds = as_dataset(X, y)
    spec, _, table = grid_search(ModelSpec("knn"), {"n_neighbors": [1, 59]}, ds, folds=3, seed=2)
    assert spec.hyperparameters["n_neighbors"] == 1
    folds = stratified_folds(y, 3, seed=2)
    for row in table:
        k = row["params"]["n_neighbors"]
        direct = []
        for val in folds:
            tr = np.setdiff1d(np.arange(len(y)), val)
            m = KNeighbors(n_neighbors=k).fit(X[tr], y[tr], n_classes=3)
            direct.append(float(np.mean(m.predict(X[val]) == y[val])))
        assert row["fold_accuracy"] == direct
    again = grid_search(ModelSpec("knn"), {"n_neighbors": [1, 59]}, ds, folds=3, seed=2)[2]
    assert again == table


def test_grid_search_ties_keep_first():
    X, y = blobs(n=60, spread=0.1)
    spec, _, table = grid_search(ModelSpec("knn"), {"n_neighbors": [3, 1]}, as_dataset(X, y))
    assert table[0]["mean_accuracy"] == table[1]["mean_accuracy"]
    assert spec.hyperparameters["n_neighbors"] == 3


def test_folds_need_enough_members():
    with pytest.raises(StratificationError):
        stratified_folds(np.array([0, 0, 0, 1, 1]), 3)


class _Fixed:
    def __init__(self, pred):
        self.pred = np.asarray(pred)

    def predict(self, X):
        return self.pred


def test_evaluate_offline_cases():
    y = np.array([0, 1] * 5)
    ds = as_dataset(np.zeros((10, 1)), y)
    perfect = evaluate_offline(_Fixed(y), ds)
    assert (perfect.accuracy, perfect.precision, perfect.recall, perfect.f1) == (1.0, 1.0, 1.0, 1.0)
    assert evaluate_offline(_Fixed(np.zeros(10, int)), ds).accuracy == 0.5


def test_evaluate_offline_hand_case():
    # 10 samples, 3 classes; confusion matrix rows=truth
    #   [[3, 1, 0],
    #    [0, 2, 1],
    #    [1, 0, 2]]
    y = np.array([0, 0, 0, 0, 1, 1, 1, 2, 2, 2])
    p = np.array([0, 0, 0, 1, 1, 1, 2, 0, 2, 2])
    m = evaluate_offline(_Fixed(p), as_dataset(np.zeros((10, 1)), y))
    prec = [3 / 4, 2 / 3, 2 / 3]
    rec = [3 / 4, 2 / 3, 2 / 3]
    f1 = [2 * a * b / (a + b) for a, b in zip(prec, rec)]
    w = [0.4, 0.3, 0.3]
    assert m.accuracy == pytest.approx(0.7)
    assert m.precision == pytest.approx(sum(a * b for a, b in zip(w, prec)))
    assert m.recall == pytest.approx(sum(a * b for a, b in zip(w, rec)))
    assert m.f1 == pytest.approx(sum(a * b for a, b in zip(w, f1)))


def test_fit_helper_uses_dataset_classes():
    X, y = blobs()
    m = fit(suite_spec("gaussian_nb"), as_dataset(X, y))
    assert m.n_classes_ == 3
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit(suite_spec("decision_tree", class_weights="balanced"), as_dataset(X, y))
