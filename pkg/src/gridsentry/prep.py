"""Cleaning, label encoding, stratified splitting and standardization."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .comtrade import WaveformRecord
from .errors import ContractError, EmptyDatasetError, StratificationError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabelEncoder:
    """Bijection between original class ids and contiguous indices ``0..K-1``."""

    classes: np.ndarray

    @classmethod
    def fit(cls, labels) -> "LabelEncoder":
        return cls(np.unique(np.asarray(labels, dtype=np.int64)))

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def encode(self, labels) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.int64)
        idx = np.searchsorted(self.classes, labels)
        idx = np.clip(idx, 0, len(self.classes) - 1)
        if not np.array_equal(self.classes[idx], labels):
            unknown = sorted(set(labels.tolist()) - set(self.classes.tolist()))
            raise ValidationError(f"labels {unknown} unknown to the encoder")
        return idx

    def decode(self, indices) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= len(self.classes)):
            raise ValidationError("encoded label out of range")
        return self.classes[indices]


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    encoder: LabelEncoder
    feature_names: list[str] | None = None

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return self.encoder.n_classes

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.labels[idx], self.encoder, self.feature_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass
class SplitDataset:
    train: LabeledDataset
    test: LabeledDataset
    train_index: np.ndarray
    test_index: np.ndarray
    seed: int


def clean(record: WaveformRecord | np.ndarray, labels, feature_names=None) -> LabeledDataset:
    """Drop rows with any non-finite feature and label-encode what is left.

    Sample times are never part of the feature matrix.
    """
    if isinstance(record, WaveformRecord):
        features = np.asarray(record.data, dtype=float)
        feature_names = feature_names or record.channel_names
    else:
        features = np.asarray(record, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2:
        raise ContractError("features must be a 2-D matrix")
    if len(labels) != len(features):
        raise ContractError(f"{len(labels)} labels for {len(features)} rows")
    keep = np.all(np.isfinite(features), axis=1)
    dropped = int((~keep).sum())
    if dropped:
        log.info("dropped %d rows with missing values", dropped)
    if not keep.any():
        raise EmptyDatasetError("every row contained missing values")
    labels = labels[keep]
    encoder = LabelEncoder.fit(labels)
    return LabeledDataset(features[keep], encoder.encode(labels), encoder,
                          list(feature_names) if feature_names is not None else None)


def stratified_test_counts(counts: np.ndarray, test_fraction: float) -> np.ndarray:
    """Per-class test sizes by largest remainder, ties to the lower class index."""
    counts = np.asarray(counts, dtype=np.int64)
    quota = counts * test_fraction
    base = np.floor(quota).astype(np.int64)
    target = int(round(counts.sum() * test_fraction))
    remainder = quota - base
    # stable sort on -remainder keeps class order among equal remainders
    order = np.argsort(-remainder, kind="stable")
    for c in order[: max(0, target - base.sum())]:
        base[c] += 1
    present = counts > 0
    return np.where(present, np.clip(base, 1, np.maximum(counts - 1, 1)), 0)


def stratified_split(ds: LabeledDataset, test_fraction: float = 0.2, seed: int = 0) -> SplitDataset:
    if not 0 < test_fraction < 1:
        raise ValidationError("test_fraction must lie in (0, 1)")
    counts = ds.class_counts()
    small = [int(ds.encoder.classes[c]) for c in np.flatnonzero((counts > 0) & (counts < 2))]
    if small:
        raise StratificationError(f"classes {small} have fewer than 2 samples")
    n_test = stratified_test_counts(counts, test_fraction)
    rng = np.random.default_rng(seed)
    test_parts = []
    for c in range(ds.n_classes):
        members = np.flatnonzero(ds.labels == c)
        test_parts.append(np.sort(rng.permutation(members)[: n_test[c]]))
    test_idx = np.sort(np.concatenate(test_parts))
    mask = np.zeros(len(ds), dtype=bool)
    mask[test_idx] = True
    train_idx = np.flatnonzero(~mask)
    return SplitDataset(ds.subset(train_idx), ds.subset(test_idx), train_idx, test_idx, seed)


@dataclass(frozen=True)
class Scaler:
    mu: np.ndarray
    sigma: np.ndarray

    def transform(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if x.shape[-1] != len(self.mu):
            raise ContractError(f"expected {len(self.mu)} features, got {x.shape[-1]}")
        return (x - self.mu) / self.sigma

    def inverse_transform(self, features) -> np.ndarray:
        return np.asarray(features, dtype=float) * self.sigma + self.mu

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "sigma": self.sigma.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.asarray(d["mu"], dtype=float), np.asarray(d["sigma"], dtype=float))


def fit_scaler(features) -> Scaler:
    """Per-column mean and population standard deviation of the training features."""
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or len(x) == 0:
        raise EmptyDatasetError("cannot fit a scaler on an empty matrix")
    mu = x.mean(axis=0)
    sigma = x.std(axis=0)
    flat = sigma == 0
    if flat.any():
        warnings.warn(f"zero-variance feature columns {np.flatnonzero(flat).tolist()}; sigma set to 1",
                      RuntimeWarning, stacklevel=2)
        sigma = np.where(flat, 1.0, sigma)
    return Scaler(mu, sigma)


def transform(scaler: Scaler, features) -> np.ndarray:
    return scaler.transform(features)


def class_weights(labels, n_classes: int | None = None) -> np.ndarray:
    """Inverse-frequency ("balanced") weights: ``n / (K * count_k)``."""
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=n_classes or 0).astype(float)
    k = len(counts)
    with np.errstate(divide="ignore"):
        w = np.where(counts > 0, len(labels) / (k * counts), 0.0)
    return w


def prepare(record: WaveformRecord, labels, test_fraction: float = 0.2, seed: int = 0):
    """clean -> split -> standardize. Returns ``(split, scaler)`` with scaled features."""
    ds = clean(record, labels)
    split = stratified_split(ds, test_fraction, seed)
    scaler = fit_scaler(split.train.features)
    split.train.features = scaler.transform(split.train.features)
    split.test.features = scaler.transform(split.test.features)
    return split, scaler


def export_csv(ds: LabeledDataset, path: str | Path, decode: bool = True) -> None:
    names = ds.feature_names or [f"f{j}" for j in range(ds.features.shape[1])]
    labels = ds.encoder.decode(ds.labels) if decode else ds.labels
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, "label"])
        for row, lab in zip(ds.features.tolist(), labels.tolist()):
            w.writerow([repr(v) for v in row] + [lab])
