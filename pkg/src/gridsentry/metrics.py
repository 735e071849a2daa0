"""Offline and streaming metric suites and the offline-vs-streaming gap report."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, EmptyDatasetError
from .schedule import NORMAL, EventSchedule

ABSTAIN = -1


def confusion_matrix(y_true, y_pred, n_classes: int | None = None) -> np.ndarray:
    """Counts with rows = truth and columns = prediction. Abstentions (-1) are skipped."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ContractError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    keep = y_pred != ABSTAIN
    t, p = y_true[keep], y_pred[keep]
    if n_classes is None:
        n_classes = int(max(t.max(initial=-1), p.max(initial=-1))) + 1
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def precision_recall_f1(cm: np.ndarray, average: str = "weighted") -> tuple[float, float, float]:
    """Per-class scores from a confusion matrix, averaged by support or uniformly.

    Classes with no predictions (or no support) score 0 for the undefined ratio.
    """
    cm = np.asarray(cm, dtype=float)
    tp = np.diag(cm)
    predicted = cm.sum(axis=0)
    support = cm.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        prec = np.where(predicted > 0, tp / predicted, 0.0)
        rec = np.where(support > 0, tp / support, 0.0)
        f1 = np.where(prec + rec > 0, 2 * prec * rec / (prec + rec), 0.0)
    if average == "weighted":
        weights = support / support.sum()
    elif average == "macro":
        present = support > 0
        weights = present / present.sum()
    else:
        raise ValueError(f"unknown average {average!r}")
    return float(weights @ prec), float(weights @ rec), float(weights @ f1)


@dataclass
class OfflineMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


def offline_metrics(y_true, y_pred, n_classes: int | None = None,
                    average: str = "weighted") -> OfflineMetrics:
    y_true = np.asarray(y_true)
    if y_true.size == 0:
        raise EmptyDatasetError("empty test set")
    cm = confusion_matrix(y_true, y_pred, n_classes)
    p, r, f = precision_recall_f1(cm, average)
    return OfflineMetrics(float(np.mean(np.asarray(y_pred) == y_true)), p, r, f)


@dataclass
class StreamMetrics:
    overall_accuracy: float
    anomaly_accuracy: float
    coverage: float  # percent
    total: int
    classified: int
    correct: int
    anomaly_classified: int
    anomaly_correct: int
    per_event: list[dict] = field(default_factory=list)

    def as_row(self) -> dict:
        return {"overall_accuracy": self.overall_accuracy,
                "anomaly_accuracy": self.anomaly_accuracy,
                "coverage": self.coverage}


def score_stream(pred, truth, schedule: EventSchedule | None = None,
                 times=None, include=None) -> StreamMetrics:
    """Selective accuracy and coverage of a decision stream.

    ``pred`` holds class ids or -1 (abstain), aligned with ``truth`` by sample
    index. Accuracies count classified decisions only; with nothing classified
    they are reported as 0.
    """
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ContractError("trace and ground truth are not aligned")
    if include is not None:
        include = np.asarray(include, dtype=bool)
        pred, truth = pred[include], truth[include]
        if times is not None:
            times = np.asarray(times)[include]
    if pred.size == 0:
        raise EmptyDatasetError("empty decision trace")

    classified = pred != ABSTAIN
    correct = classified & (pred == truth)
    anomaly = classified & (truth != NORMAL)
    n_cls = int(classified.sum())
    n_anom = int(anomaly.sum())
    m = StreamMetrics(
        overall_accuracy=_ratio(int(correct.sum()), n_cls),
        anomaly_accuracy=_ratio(int((correct & anomaly).sum()), n_anom),
        coverage=100.0 * n_cls / pred.size,
        total=int(pred.size),
        classified=n_cls,
        correct=int(correct.sum()),
        anomaly_classified=n_anom,
        anomaly_correct=int((correct & anomaly).sum()),
    )
    if schedule is not None:
        if times is None:
            raise ContractError("per-event breakdown needs sample times")
        m.per_event = per_event_breakdown(pred, np.asarray(times), schedule)
    return m


def per_event_breakdown(pred, times, schedule: EventSchedule) -> list[dict]:
    rows = []
    for ev in schedule.events:
        inside = (times >= ev.start) & (times <= ev.end)
        p = pred[inside]
        n = int(inside.sum())
        classified = p != ABSTAIN
        hits = int((p == ev.class_id).sum())
        rows.append({
            "class_id": ev.class_id,
            "start": ev.start,
            "end": ev.end,
            "samples": n,
            "detection_rate": _ratio(hits, n),
            "classified_accuracy": _ratio(hits, int(classified.sum())),
            "coverage": 100.0 * _ratio(int(classified.sum()), n),
        })
    return rows


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


# --------------------------------------------------------------------------- gap report

GAP_COLUMNS = [
    "model", "accuracy", "precision", "recall", "f1",
    "overall_accuracy", "anomaly_accuracy", "coverage",
    "delta_accuracy", "delta_anomaly_accuracy", "flags",
]

HIGH_ACCURACY = 0.95
LOW_COVERAGE = 50.0


def gap_report(offline: dict[str, OfflineMetrics | dict],
               stream: dict[str, StreamMetrics | dict]) -> list[dict]:
    """One row per model: both phases side by side, deltas and flags."""
    rows = []
    for name in sorted(set(offline) | set(stream)):
        off = _as_dict(offline.get(name))
        st = _as_dict(stream.get(name))
        flags = []
        row = {c: None for c in GAP_COLUMNS}
        row["model"] = name
        if off is None:
            flags.append("offline-missing")
        else:
            row.update({k: off[k] for k in ("accuracy", "precision", "recall", "f1")})
        if st is None:
            flags.append("stream-missing")
        else:
            row.update({k: st[k] for k in ("overall_accuracy", "anomaly_accuracy", "coverage")})
        if off is not None and st is not None:
            row["delta_accuracy"] = st["overall_accuracy"] - off["accuracy"]
            row["delta_anomaly_accuracy"] = st["anomaly_accuracy"] - off["accuracy"]
            if off["accuracy"] >= HIGH_ACCURACY and st["coverage"] < LOW_COVERAGE:
                flags.append("high-accuracy/low-coverage")
        row["flags"] = ";".join(flags)
        rows.append(row)
    return rows


def _as_dict(m):
    if m is None:
        return None
    if isinstance(m, dict):
        return m
    return asdict(m)


def write_csv(rows: list[dict], path: str | Path, columns: list[str] | None = None) -> None:
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in columns})


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(round(v, 10))
    return v


def write_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")
