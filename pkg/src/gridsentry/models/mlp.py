"""Dense ReLU network with a softmax output, trained by momentum SGD."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .base import Classifier, softmax

PRESETS = {
    "mlp_2h": (64, 64),
    "mlp_3h": (64, 64, 64),
    "mlp_wide": (256, 256, 256),
}


def init_params(sizes, rng, dtype=np.float64):
    """He-normal weights and zero biases for consecutive layer ``sizes``."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        params.append((W.astype(dtype), np.zeros(fan_out, dtype=dtype)))
    return params


def forward(params, X):
    """Return the list of layer activations; the last entry holds class probabilities."""
    acts = [X]
    h = X
    for W, b in params[:-1]:
        h = np.maximum(h @ W + b, 0.0)
        acts.append(h)
    W, b = params[-1]
    acts.append(softmax(h @ W + b))
    return acts


def loss_and_grads(params, X, y, sw, l2):
    """Weighted mean cross-entropy plus ``l2/2 * sum ||W||^2`` and its gradients.

    ``sw`` are per-row weights summing to one.
    """
    acts = forward(params, X)
    P = acts[-1]
    n = len(y)
    loss = -np.sum(sw * np.log(np.clip(P[np.arange(n), y], 1e-300, None)))
    loss += 0.5 * l2 * sum(float(np.sum(W * W)) for W, _ in params)
    delta = P.copy()
    delta[np.arange(n), y] -= 1.0
    delta *= sw[:, None].astype(P.dtype)
    grads = [None] * len(params)
    for layer in range(len(params) - 1, -1, -1):
        W, _ = params[layer]
        a = acts[layer]
        grads[layer] = (a.T @ delta + l2 * W, delta.sum(axis=0))
        if layer:
            delta = (delta @ W.T) * (a > 0)
    return loss, grads


class MLP(Classifier):
    kind = "mlp"
    defaults = {"hidden_layers": (64, 64), "epochs": 200, "batch_size": 256,
                "learning_rate": 1e-3, "momentum": 0.9, "l2": 1e-4, "dtype": "float32"}

    def _validate(self):
        h = self.hyper
        layers = tuple(int(x) for x in h["hidden_layers"])
        if not layers or min(layers) < 1:
            raise ValidationError("mlp: need at least one hidden layer of width >= 1")
        h["hidden_layers"] = layers
        if h["epochs"] < 1 or h["batch_size"] < 1 or h["learning_rate"] <= 0:
            raise ValidationError("mlp: epochs, batch_size >= 1 and learning_rate > 0 required")
        if not 0 <= h["momentum"] < 1 or h["l2"] < 0:
            raise ValidationError("mlp: momentum in [0, 1) and l2 >= 0 required")
        if h["dtype"] not in ("float32", "float64"):
            raise ValidationError("mlp: dtype must be float32 or float64")

    def _fit(self, X, y, w):
        h = self.hyper
        dtype = np.dtype(h["dtype"])
        rng = np.random.default_rng(self.seed)
        sizes = (X.shape[1], *h["hidden_layers"], self.n_classes_)
        self.params_ = init_params(sizes, rng, dtype)
        velocity = [(np.zeros_like(W), np.zeros_like(b)) for W, b in self.params_]
        Xd = X.astype(dtype)
        n = len(y)
        lr, mom, l2, bs = h["learning_rate"], h["momentum"], h["l2"], h["batch_size"]
        self.loss_curve_ = []
        for _ in range(h["epochs"]):
            perm = rng.permutation(n)
            total = 0.0
            for s in range(0, n, bs):
                rows = perm[s: s + bs]
                wb = w[rows]
                sw = (wb / wb.sum()).astype(dtype)
                loss, grads = loss_and_grads(self.params_, Xd[rows], y[rows], sw, l2)
                total += loss * len(rows)
                for (W, b), (vW, vb), (gW, gb) in zip(self.params_, velocity, grads):
                    vW *= mom
                    vW -= lr * gW
                    vb *= mom
                    vb -= lr * gb
                    W += vW
                    b += vb
            self.loss_curve_.append(total / n)

    def _predict_proba(self, X):
        P = forward(self.params_, X.astype(self.params_[0][0].dtype))[-1]
        return P.astype(float) / P.sum(axis=1, keepdims=True, dtype=float)

    def get_state(self):
        state = {"n_layers": np.array(len(self.params_))}
        for i, (W, b) in enumerate(self.params_):
            state[f"W{i}"] = W
            state[f"b{i}"] = b
        return state

    def set_state(self, state):
        self.params_ = [(np.asarray(state[f"W{i}"]), np.asarray(state[f"b{i}"]))
                        for i in range(int(state["n_layers"]))]
