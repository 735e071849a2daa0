"""Common probabilistic-classifier contract."""

from __future__ import annotations

import warnings

import numpy as np

from ..errors import ContractError, ValidationError


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def resolve_class_weights(class_weight, y: np.ndarray, n_classes: int) -> np.ndarray:
    if class_weight is None:
        return np.ones(n_classes)
    if isinstance(class_weight, str):
        if class_weight != "balanced":
            raise ValidationError(f"unknown class_weight {class_weight!r}")
        counts = np.bincount(y, minlength=n_classes).astype(float)
        with np.errstate(divide="ignore"):
            return np.where(counts > 0, len(y) / (n_classes * counts), 0.0)
    w = np.asarray(class_weight, dtype=float)
    if w.shape != (n_classes,) or np.any(w < 0):
        raise ValidationError(f"class_weight must be {n_classes} non-negative numbers")
    return w


class Classifier:
    """Fit on ``(X, y)`` with ``y`` in ``0..K-1``; emit a K-simplex per row.

    Subclasses implement ``_fit`` and ``_predict_proba`` and list their
    hyperparameters in ``defaults``.
    """

    kind = "base"
    defaults: dict = {}
    supports_weights = True

    def __init__(self, class_weight=None, seed: int = 0, **hyper):
        unknown = set(hyper) - set(self.defaults)
        if unknown:
            raise ValidationError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        self.hyper = {**self.defaults, **hyper}
        self.class_weight = class_weight
        self.seed = int(seed)
        self.n_classes_ = None
        self.n_features_ = None
        self._validate()

    def _validate(self) -> None:
        pass

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.hyper.items())
        return f"{type(self).__name__}({args})"

    @property
    def fitted(self) -> bool:
        return self.n_classes_ is not None

    def fit(self, X, y, sample_weight=None, n_classes: int | None = None):
        X = np.ascontiguousarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or len(X) == 0:
            raise ContractError("training features must be a non-empty 2-D matrix")
        if len(y) != len(X):
            raise ContractError("feature/label length mismatch")
        if y.min() < 0:
            raise ContractError("labels must be encoded as 0..K-1")
        k = int(n_classes if n_classes is not None else y.max() + 1)
        if len(np.unique(y)) < 2:
            raise ContractError("need at least two classes to fit")
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        if w.shape != y.shape or np.any(w < 0):
            raise ContractError("sample_weight must be non-negative, one per row")
        if self.class_weight is not None or sample_weight is not None:
            if not self.supports_weights:
                warnings.warn(f"{self.kind} ignores class and sample weights", UserWarning, stacklevel=2)
        w = w * resolve_class_weights(self.class_weight, y, k)[y]
        self.n_classes_ = k
        self.n_features_ = X.shape[1]
        self._fit(X, y, w)
        return self

    def predict_proba(self, X) -> np.ndarray:
        if not self.fitted:
            raise ContractError(f"{self.kind} is not fitted")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features_:
            raise ContractError(f"expected {self.n_features_} features, got {X.shape[1]}")
        return self._predict_proba(X)

    def predict(self, X) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. the lowest class index on ties
        return np.argmax(self.predict_proba(X), axis=1)

    # serialization hooks
    def get_state(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        raise NotImplementedError

    def _fit(self, X, y, w):
        raise NotImplementedError

    def _predict_proba(self, X):
        raise NotImplementedError
