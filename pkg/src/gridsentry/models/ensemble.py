"""Tree ensembles: random forest, extra trees, AdaBoost (SAMME), gradient boosting."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..errors import ValidationError
from .base import Classifier, softmax
from .tree import (
    Tree,
    TreeBuilder,
    check_tree_params,
    leaf_distribution,
    one_hot,
    presort_columns,
    resolve_max_features,
)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("GRIDSENTRY_THREADS", "1")))
    except ValueError:
        return 1


class _Forest(Classifier):
    bootstrap = True
    splitter = "best"
    defaults = {"n_estimators": 100, "max_depth": None, "min_samples_leaf": 1,
                "max_features": "sqrt"}

    def _validate(self):
        check_tree_params(self.hyper, self.kind)
        if self.hyper["n_estimators"] < 1:
            raise ValidationError(f"{self.kind}: n_estimators must be >= 1")

    def _fit(self, X, y, w):
        n = len(y)
        k = self.n_classes_
        presort = presort_columns(X) if self.splitter == "best" else None
        mf = resolve_max_features(self.hyper["max_features"], X.shape[1])
        seeds = np.random.SeedSequence(self.seed).spawn(self.hyper["n_estimators"])

        def grow(ss):
            rng = np.random.default_rng(ss)
            if self.bootstrap:
                counts = np.bincount(rng.integers(0, n, n), minlength=n)
                wt = w * counts
            else:
                wt = w
            builder = TreeBuilder(self.hyper["max_depth"], self.hyper["min_samples_leaf"], mf,
                                  self.splitter, rng)
            return builder.build(X, one_hot(y, k, wt), wt, presort=presort)

        workers = worker_count()
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                self.trees_ = list(pool.map(grow, seeds))
        else:
            self.trees_ = [grow(ss) for ss in seeds]

    def tree_probas(self, X) -> np.ndarray:
        """Per-tree leaf distributions, shape ``(n_trees, n, K)``."""
        return np.stack([leaf_distribution(t, X) for t in self.trees_])

    def _predict_proba(self, X):
        out = np.zeros((len(X), self.n_classes_))
        for t in self.trees_:
            out += leaf_distribution(t, X)
        return out / len(self.trees_)

    def get_state(self):
        state = {"n_trees": np.array(len(self.trees_))}
        for i, t in enumerate(self.trees_):
            state.update(t.state(f"tree{i}."))
        return state

    def set_state(self, state):
        self.trees_ = [Tree.from_state(state, f"tree{i}.") for i in range(int(state["n_trees"]))]


class RandomForest(_Forest):
    """Bootstrap-aggregated CART trees with sqrt(d) feature subsampling."""

    kind = "random_forest"


class ExtraTrees(_Forest):
    """Extremely randomized trees: random thresholds, no bootstrap."""

    kind = "extra_trees"
    bootstrap = False
    splitter = "random"


class AdaBoost(Classifier):
    """Multi-class SAMME boosting of depth-1 stumps."""

    kind = "adaboost"
    defaults = {"n_estimators": 100, "learning_rate": 0.1, "max_depth": 1}

    def _validate(self):
        if self.hyper["n_estimators"] < 1 or self.hyper["learning_rate"] <= 0:
            raise ValidationError("adaboost: n_estimators >= 1 and learning_rate > 0 required")
        check_tree_params(self.hyper, self.kind)

    def _fit(self, X, y, w):
        k = self.n_classes_
        rng = np.random.default_rng(self.seed)
        presort = presort_columns(X)
        sw = w / w.sum()
        self.stumps_, self.alphas_ = [], []
        for _ in range(self.hyper["n_estimators"]):
            builder = TreeBuilder(max_depth=self.hyper["max_depth"], rng=rng)
            stump = builder.build(X, one_hot(y, k, sw), sw, presort=presort)
            wrong = np.argmax(stump.predict(X), axis=1) != y
            err = float(sw[wrong].sum())
            if err >= 1.0 - 1.0 / k:
                if not self.stumps_:
                    # no better than chance: keep it with zero say so the model is defined
                    self.stumps_.append(stump)
                    self.alphas_.append(0.0)
                break
            err = max(err, 1e-16)
            alpha = self.hyper["learning_rate"] * (np.log((1 - err) / err) + np.log(k - 1))
            self.stumps_.append(stump)
            self.alphas_.append(alpha)
            if err <= 1e-16:
                break
            sw = sw * np.exp(alpha * wrong)
            sw /= sw.sum()
        self.alphas_ = np.array(self.alphas_)

    def decision_function(self, X):
        k = self.n_classes_
        score = np.zeros((len(X), k))
        for stump, a in zip(self.stumps_, self.alphas_):
            vote = np.full((len(X), k), -1.0 / (k - 1))
            vote[np.arange(len(X)), np.argmax(stump.predict(X), axis=1)] = 1.0
            score += a * vote
        total = self.alphas_.sum()
        return score / total if total > 0 else score

    def _predict_proba(self, X):
        return softmax(self.decision_function(X) / (self.n_classes_ - 1))

    def get_state(self):
        state = {"alphas": self.alphas_}
        for i, t in enumerate(self.stumps_):
            state.update(t.state(f"stump{i}."))
        return state

    def set_state(self, state):
        self.alphas_ = np.asarray(state["alphas"])
        self.stumps_ = [Tree.from_state(state, f"stump{i}.") for i in range(len(self.alphas_))]


class GradientBoosting(Classifier):
    """Multinomial-deviance gradient boosting, one regression tree per class per round."""

    kind = "gradient_boosting"
    defaults = {"n_estimators": 100, "learning_rate": 0.1, "max_depth": 3, "min_samples_leaf": 1,
                "subsample": 1.0, "max_features": None}

    def _validate(self):
        h = self.hyper
        if h["n_estimators"] < 1 or h["learning_rate"] <= 0 or not 0 < h["subsample"] <= 1:
            raise ValidationError("gradient_boosting: bad n_estimators/learning_rate/subsample")
        check_tree_params(h, self.kind)

    def _fit(self, X, y, w):
        k = self.n_classes_
        n = len(y)
        rng = np.random.default_rng(self.seed)
        Y = one_hot(y, k)
        prior = (Y * w[:, None]).sum(axis=0) / w.sum()
        self.init_ = np.log(np.clip(prior, 1e-12, None))
        F = np.tile(self.init_, (n, 1))
        presort = presort_columns(X)
        mf = resolve_max_features(self.hyper["max_features"], X.shape[1])
        lr = self.hyper["learning_rate"]
        self.trees_ = []
        for _ in range(self.hyper["n_estimators"]):
            P = softmax(F)
            if self.hyper["subsample"] < 1.0:
                rows = np.sort(rng.choice(n, int(self.hyper["subsample"] * n), replace=False))
            else:
                rows = None
            round_trees = []
            for c in range(k):
                r = Y[:, c] - P[:, c]
                builder = TreeBuilder(self.hyper["max_depth"], self.hyper["min_samples_leaf"], mf,
                                      "best", rng, classification=False)
                tree = builder.build(X, w * r, w, rows=rows, presort=presort)
                leaves = tree.apply(X)
                # one Newton step per leaf
                num = np.bincount(leaves, weights=w * r, minlength=tree.n_nodes)
                den = np.bincount(leaves, weights=w * np.abs(r) * (1 - np.abs(r)), minlength=tree.n_nodes)
                gamma = (k - 1) / k * num / np.where(den > 1e-12, den, 1e-12)
                tree.value = gamma[:, None]
                F[:, c] += lr * gamma[leaves]
                round_trees.append(tree)
            self.trees_.append(round_trees)

    def decision_function(self, X):
        F = np.tile(self.init_, (len(X), 1))
        lr = self.hyper["learning_rate"]
        for round_trees in self.trees_:
            for c, tree in enumerate(round_trees):
                F[:, c] += lr * tree.predict(X)[:, 0]
        return F

    def _predict_proba(self, X):
        return softmax(self.decision_function(X))

    def get_state(self):
        state = {"init": self.init_, "n_rounds": np.array(len(self.trees_))}
        for i, rt in enumerate(self.trees_):
            for c, t in enumerate(rt):
                state.update(t.state(f"r{i}c{c}."))
        return state

    def set_state(self, state):
        self.init_ = np.asarray(state["init"])
        k = len(self.init_)
        self.trees_ = [[Tree.from_state(state, f"r{i}c{c}.") for c in range(k)]
                       for i in range(int(state["n_rounds"]))]
