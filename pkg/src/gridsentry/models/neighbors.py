"""Brute-force k-nearest-neighbour classifier."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .base import Classifier

# query rows per distance block; bounds memory at ~block * n_train floats
_BLOCK = 256


class KNeighbors(Classifier):
    """Uniform-vote k-NN under Euclidean distance.

    Equal distances are resolved in favour of the lower training index.
    """

    kind = "knn"
    defaults = {"n_neighbors": 5}
    supports_weights = False

    def _validate(self):
        if int(self.hyper["n_neighbors"]) < 1:
            raise ValidationError("knn: n_neighbors must be >= 1")

    def _fit(self, X, y, w):
        self.X_ = X.copy()
        self.y_ = y.copy()
        self._sq = np.einsum("ij,ij->i", X, X)

    def kneighbors(self, X) -> np.ndarray:
        """Indices of the k nearest training rows, nearest first."""
        k = min(int(self.hyper["n_neighbors"]), len(self.X_))
        out = np.empty((len(X), k), dtype=np.int64)
        for s in range(0, len(X), _BLOCK):
            q = X[s: s + _BLOCK]
            d = self._sq[None, :] - 2.0 * (q @ self.X_.T) + np.einsum("ij,ij->i", q, q)[:, None]
            np.maximum(d, 0.0, out=d)
            if k < d.shape[1]:
                part = np.argpartition(d, k - 1, axis=1)
                kth = np.take_along_axis(d, part[:, k - 1: k], axis=1)
                for r in range(len(q)):
                    # every row at or below the k-th distance competes; sort by (distance, index)
                    cand = np.flatnonzero(d[r] <= kth[r, 0])
                    order = np.lexsort((cand, d[r, cand]))
                    out[s + r] = cand[order[:k]]
            else:
                out[s: s + len(q)] = np.argsort(d, axis=1, kind="stable")[:, :k]
        return out

    def _predict_proba(self, X):
        nb = self.kneighbors(X)
        votes = self.y_[nb]
        k = nb.shape[1]
        proba = np.zeros((len(X), self.n_classes_))
        rows = np.repeat(np.arange(len(X)), k)
        np.add.at(proba, (rows, votes.ravel()), 1.0)
        return proba / k

    def get_state(self):
        return {"X": self.X_, "y": self.y_}

    def set_state(self, state):
        self.X_ = np.asarray(state["X"], dtype=float)
        self.y_ = np.asarray(state["y"], dtype=np.int64)
        self._sq = np.einsum("ij,ij->i", self.X_, self.X_)
