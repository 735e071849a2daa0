"""Model suite behind one probabilistic-classifier contract."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from .base import Classifier, softmax
from .bayes import GaussianNB
from .ensemble import AdaBoost, ExtraTrees, GradientBoosting, RandomForest
from .linear import LogisticRegression
from .mlp import MLP, PRESETS
from .neighbors import KNeighbors
from .tree import DecisionTree

KINDS: dict[str, type[Classifier]] = {
    cls.kind: cls
    for cls in (DecisionTree, RandomForest, ExtraTrees, AdaBoost, GradientBoosting,
                KNeighbors, GaussianNB, LogisticRegression, MLP)
}

# Named entries of the benchmark suite.
SUITE: dict[str, tuple[str, dict]] = {
    "random_forest": ("random_forest", {}),
    "mlp_wide": ("mlp", {"hidden_layers": PRESETS["mlp_wide"]}),
    "mlp_3h": ("mlp", {"hidden_layers": PRESETS["mlp_3h"]}),
    "gradient_boosting": ("gradient_boosting", {}),
    "mlp_2h": ("mlp", {"hidden_layers": PRESETS["mlp_2h"]}),
    "knn": ("knn", {}),
    "extra_trees": ("extra_trees", {}),
    "decision_tree": ("decision_tree", {}),
    "gaussian_nb": ("gaussian_nb", {}),
    "logistic_regression": ("logistic_regression", {}),
    "adaboost": ("adaboost", {}),
}


@dataclass
class ModelSpec:
    kind: str
    hyperparameters: dict = field(default_factory=dict)
    class_weights: object = None
    seed: int = 0

    def build(self) -> Classifier:
        if self.kind not in KINDS:
            raise ValidationError(f"unknown model kind {self.kind!r}")
        return KINDS[self.kind](class_weight=self.class_weights, seed=self.seed,
                                **self.hyperparameters)

    def to_dict(self) -> dict:
        cw = self.class_weights
        if isinstance(cw, np.ndarray):
            cw = cw.tolist()
        return {"kind": self.kind, "hyperparameters": _jsonable(self.hyperparameters),
                "class_weights": cw, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        hyper = dict(d.get("hyperparameters", {}))
        if "hidden_layers" in hyper:
            hyper["hidden_layers"] = tuple(hyper["hidden_layers"])
        return cls(d["kind"], hyper, d.get("class_weights"), int(d.get("seed", 0)))


def _jsonable(h: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in h.items()}


def suite_spec(name: str, seed: int = 0, class_weights=None, **overrides) -> ModelSpec:
    """Spec of a named suite entry (e.g. ``"mlp_wide"``) with optional overrides."""
    if name not in SUITE:
        raise ValidationError(f"unknown model {name!r}; choose from {sorted(SUITE)}")
    kind, hyper = SUITE[name]
    return ModelSpec(kind, {**hyper, **overrides}, class_weights, seed)


def fit(spec: ModelSpec, train, sample_weights=None) -> Classifier:
    """Fit ``spec`` on a standardized ``LabeledDataset``."""
    model = spec.build()
    return model.fit(train.features, train.labels, sample_weights, n_classes=train.n_classes)


from .selection import evaluate_offline, grid_search, stratified_folds  # noqa: E402
from .serialize import load_model, save_model  # noqa: E402

__all__ = [
    "KINDS", "SUITE", "Classifier", "ModelSpec", "DecisionTree", "RandomForest", "ExtraTrees",
    "AdaBoost", "GradientBoosting", "KNeighbors", "GaussianNB", "LogisticRegression", "MLP",
    "PRESETS", "fit", "suite_spec", "softmax", "evaluate_offline", "grid_search",
    "stratified_folds", "load_model", "save_model",
]
