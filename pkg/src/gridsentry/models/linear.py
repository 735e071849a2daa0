"""Multinomial logistic regression trained by full-batch gradient descent."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .base import Classifier, softmax
from .tree import one_hot


class LogisticRegression(Classifier):
    kind = "logistic_regression"
    defaults = {"learning_rate": 0.5, "max_iter": 300, "l2": 1e-4, "tol": 1e-7}

    def _validate(self):
        h = self.hyper
        if h["learning_rate"] <= 0 or h["max_iter"] < 1 or h["l2"] < 0:
            raise ValidationError("logistic_regression: bad learning_rate/max_iter/l2")

    def _fit(self, X, y, w):
        n, d = X.shape
        k = self.n_classes_
        Y = one_hot(y, k)
        sw = w / w.sum()
        self.coef_ = np.zeros((d, k))
        self.intercept_ = np.zeros(k)
        lr, l2 = self.hyper["learning_rate"], self.hyper["l2"]
        prev = np.inf
        for it in range(self.hyper["max_iter"]):
            P = softmax(X @ self.coef_ + self.intercept_)
            loss = -np.sum(sw * np.log(np.clip(P[np.arange(n), y], 1e-300, None)))
            loss += 0.5 * l2 * np.sum(self.coef_ ** 2)
            G = (P - Y) * sw[:, None]
            self.coef_ -= lr * (X.T @ G + l2 * self.coef_)
            self.intercept_ -= lr * G.sum(axis=0)
            if abs(prev - loss) < self.hyper["tol"]:
                break
            prev = loss
        self.n_iter_ = it + 1

    def _predict_proba(self, X):
        return softmax(X @ self.coef_ + self.intercept_)

    def get_state(self):
        return {"coef": self.coef_, "intercept": self.intercept_}

    def set_state(self, state):
        self.coef_ = np.asarray(state["coef"], dtype=float)
        self.intercept_ = np.asarray(state["intercept"], dtype=float)
