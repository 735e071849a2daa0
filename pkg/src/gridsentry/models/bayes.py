"""Gaussian naive Bayes."""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from ..errors import ValidationError
from .base import Classifier


class GaussianNB(Classifier):
    kind = "gaussian_nb"
    defaults = {"var_smoothing": 1e-9}
    supports_weights = False

    def _validate(self):
        if self.hyper["var_smoothing"] < 0:
            raise ValidationError("gaussian_nb: var_smoothing must be >= 0")

    def _fit(self, X, y, w):
        k, d = self.n_classes_, X.shape[1]
        counts = np.bincount(y, minlength=k).astype(float)
        self.mean_ = np.zeros((k, d))
        self.var_ = np.zeros((k, d))
        for c in range(k):
            xc = X[y == c]
            if len(xc):
                self.mean_[c] = xc.mean(axis=0)
                self.var_[c] = xc.var(axis=0)
        # floor every variance at a fraction of the widest feature variance
        self.var_ += self.hyper["var_smoothing"] * X.var(axis=0).max()
        self.prior_ = counts / counts.sum()

    def joint_log_likelihood(self, X):
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.prior_)
        ll = -0.5 * np.sum(np.log(2.0 * np.pi * self.var_), axis=1)[None, :]
        ll = ll - 0.5 * np.sum((X[:, None, :] - self.mean_[None]) ** 2 / self.var_[None], axis=2)
        return ll + log_prior[None, :]

    def _predict_proba(self, X):
        out = np.empty((len(X), self.n_classes_))
        for s in range(0, len(X), 4096):
            jll = self.joint_log_likelihood(X[s: s + 4096])
            out[s: s + 4096] = np.exp(jll - logsumexp(jll, axis=1, keepdims=True))
        return out

    def get_state(self):
        return {"mean": self.mean_, "var": self.var_, "prior": self.prior_}

    def set_state(self, state):
        self.mean_ = np.asarray(state["mean"])
        self.var_ = np.asarray(state["var"])
        self.prior_ = np.asarray(state["prior"])
