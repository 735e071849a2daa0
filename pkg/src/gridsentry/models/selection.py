"""Stratified k-fold grid search and offline evaluation."""

from __future__ import annotations

import itertools
from dataclasses import replace

import numpy as np

from ..errors import EmptyDatasetError, StratificationError, ValidationError
from ..metrics import OfflineMetrics, offline_metrics


def stratified_folds(y, n_folds: int = 3, seed: int = 0) -> list[np.ndarray]:
    """Validation index sets; each class is dealt round-robin after a seeded shuffle."""
    y = np.asarray(y)
    if n_folds < 2:
        raise ValidationError("need at least 2 folds")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(y), dtype=np.int64)
    for c in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == c))
        if len(members) < n_folds:
            raise StratificationError(f"class {c} has {len(members)} samples for {n_folds} folds")
        fold_of[members] = np.arange(len(members)) % n_folds
    return [np.flatnonzero(fold_of == f) for f in range(n_folds)]


def expand_grid(grid) -> list[dict]:
    """``{"k": [1, 3]}`` -> ``[{"k": 1}, {"k": 3}]``; lists of dicts pass through."""
    if isinstance(grid, dict):
        keys = list(grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]
    return [dict(g) for g in grid]


def grid_search(spec, grid, train, folds: int = 3, seed: int = 0):
    """Pick the hyperparameters with the best mean fold accuracy, then refit on all of ``train``.

    Returns ``(best_spec, fitted_model, cv_table)``; ties keep grid order.
    """
    points = expand_grid(grid)
    if not points:
        raise ValidationError("empty hyperparameter grid")
    fold_idx = stratified_folds(train.labels, folds, seed)
    all_idx = np.arange(len(train))
    table = []
    best = None
    for point in points:
        cand = replace(spec, hyperparameters={**spec.hyperparameters, **point})
        scores = []
        for val in fold_idx:
            tr = np.setdiff1d(all_idx, val, assume_unique=True)
            model = cand.build().fit(train.features[tr], train.labels[tr], n_classes=train.n_classes)
            scores.append(float(np.mean(model.predict(train.features[val]) == train.labels[val])))
        mean = float(np.mean(scores))
        table.append({"params": point, "fold_accuracy": scores, "mean_accuracy": mean})
        if best is None or mean > best[0]:
            best = (mean, cand)
    best_spec = best[1]
    model = best_spec.build().fit(train.features, train.labels, n_classes=train.n_classes)
    return best_spec, model, table


def evaluate_offline(model, test, average: str = "weighted") -> OfflineMetrics:
    if len(test) == 0:
        raise EmptyDatasetError("empty test set")
    return offline_metrics(test.labels, model.predict(test.features), test.n_classes, average)


# Small default grids for three-fold tuning from the command line.
TUNE_GRIDS: dict[str, dict] = {
    "knn": {"n_neighbors": [1, 3, 5, 7, 9]},
    "decision_tree": {"max_depth": [None, 12, 20], "min_samples_leaf": [1, 5]},
    "random_forest": {"n_estimators": [50, 100], "max_features": ["sqrt", 0.5]},
    "extra_trees": {"n_estimators": [50, 100], "max_features": ["sqrt", 0.5]},
    "gradient_boosting": {"learning_rate": [0.05, 0.1], "max_depth": [2, 3]},
    "adaboost": {"n_estimators": [50, 100], "learning_rate": [0.5, 1.0]},
    "logistic_regression": {"l2": [1e-4, 1e-2], "learning_rate": [0.1, 0.5]},
    "gaussian_nb": {"var_smoothing": [1e-9, 1e-6, 1e-3]},
    "mlp": {"learning_rate": [1e-3, 3e-3], "l2": [1e-4, 1e-3]},
}
