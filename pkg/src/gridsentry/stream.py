"""Cycle-length smoothing, confidence thresholding and abstention over a sample stream.

The engine keeps a ring buffer of the last ``n_cyc`` probability vectors. Once
it is full, every push emits one decision for the sample ``n_half`` positions
back: the window mean is the smoothed vector, its maximum is the confidence,
and the decision abstains (-1) when the confidence is below ``tau``.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, ValidationError

ABSTAIN = -1
SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class StreamConfig:
    n_cyc: int = 80
    tau: float = 0.6

    def __post_init__(self):
        if int(self.n_cyc) != self.n_cyc or self.n_cyc < 2:
            raise ValidationError(f"n_cyc must be an integer >= 2, got {self.n_cyc}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValidationError(f"tau must lie in [0, 1], got {self.tau}")

    @property
    def n_half(self) -> int:
        return self.n_cyc // 2

    @property
    def n_back(self) -> int:
        """Samples before the centre that fall inside the window (``n_cyc - 1 - n_half``)."""
        return self.n_cyc - 1 - self.n_half

    @classmethod
    def from_rates(cls, sample_rate: float, line_frequency: float, tau: float = 0.6) -> "StreamConfig":
        n = sample_rate / line_frequency
        if abs(n - round(n)) > 1e-9:
            raise ValidationError(f"{sample_rate} Hz / {line_frequency} Hz is not a whole cycle")
        return cls(int(round(n)), tau)

    def lag_seconds(self, sample_rate: float) -> float:
        return self.n_half / sample_rate


@dataclass(frozen=True, slots=True)
class Decision:
    emit_index: int
    class_id: int
    confidence: float
    padded: bool = False


def decide(q: np.ndarray, tau: float) -> tuple[int, float]:
    """Class (or ABSTAIN) and confidence of one smoothed probability vector."""
    k = int(np.argmax(q))
    c = float(q[k])
    return (k if c >= tau else ABSTAIN), c


class StreamEngine:
    """Single-producer streaming decision layer. Not thread-safe."""

    def __init__(self, config: StreamConfig, n_classes: int):
        self.config = config
        self.n_classes = n_classes
        self._buf = np.zeros((config.n_cyc, n_classes))
        self._ptr = 0
        self._count = 0
        self._pushed = 0
        self._head: list[np.ndarray] = []

    @property
    def pushed(self) -> int:
        return self._pushed

    def push(self, p) -> Decision | None:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.n_classes,):
            raise ContractError(f"expected {self.n_classes} probabilities, got shape {p.shape}")
        if p.min() < -SIMPLEX_TOL or abs(p.sum() - 1.0) > SIMPLEX_TOL:
            raise ContractError("probability vector is not on the simplex")
        cfg = self.config
        i = self._pushed
        self._pushed += 1
        if len(self._head) < cfg.n_cyc - 1:
            self._head.append(p.copy())
        self._buf[self._ptr] = p
        self._ptr = (self._ptr + 1) % cfg.n_cyc
        self._count += 1
        if self._count < cfg.n_cyc:
            return None
        q = self._buf.sum(axis=0) / cfg.n_cyc
        # the oldest slot is overwritten by the next push
        self._count -= 1
        cls, conf = decide(q, cfg.tau)
        return Decision(i - cfg.n_half, cls, conf)

    def _window(self) -> np.ndarray:
        """Buffered vectors in arrival order (the last ``n_cyc - 1`` pushes)."""
        n = self._count
        start = (self._ptr - n) % self.config.n_cyc
        idx = (start + np.arange(n)) % self.config.n_cyc
        return self._buf[idx]

    def flush(self) -> list[Decision]:
        """Edge-padded decisions for the indices the ring buffer never centred on."""
        cfg = self.config
        n = self._pushed
        if n < cfg.n_cyc:
            raise ContractError(f"stream of {n} samples is shorter than one window ({cfg.n_cyc})")
        out = []
        head = np.array(self._head)
        for e in range(cfg.n_back):
            q = (cfg.n_back - e) * head[0] + head[: e + cfg.n_half + 1].sum(axis=0)
            cls, conf = decide(q / cfg.n_cyc, cfg.tau)
            out.append(Decision(e, cls, conf, padded=True))
        tail = self._window()
        first = n - len(tail)
        for e in range(n - cfg.n_half, n):
            lo = e - cfg.n_back - first
            q = tail[lo:].sum(axis=0) + (e + cfg.n_half - (n - 1)) * tail[-1]
            cls, conf = decide(q / cfg.n_cyc, cfg.tau)
            out.append(Decision(e, cls, conf, padded=True))
        return out


def edge_padded_offline_smooth(P, n_cyc: int) -> np.ndarray:
    """Centered ``n_cyc``-sample moving average with indices clamped to ``[0, N-1]``."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or len(P) < 1:
        raise ContractError("P must be a non-empty N x K matrix")
    n_half = n_cyc // 2
    n_back = n_cyc - 1 - n_half
    padded = np.concatenate([np.repeat(P[:1], n_back, axis=0), P, np.repeat(P[-1:], n_half, axis=0)])
    windows = np.lib.stride_tricks.sliding_window_view(padded, n_cyc, axis=0)
    return windows.sum(axis=-1) / n_cyc


def offline_decisions(P, config: StreamConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized decisions over a whole probability matrix: ``(class_ids, confidence)``."""
    q = edge_padded_offline_smooth(P, config.n_cyc)
    k = np.argmax(q, axis=1)
    conf = q[np.arange(len(q)), k]
    return np.where(conf >= config.tau, k, ABSTAIN), conf


@dataclass
class DecisionTrace:
    decisions: list[Decision]
    config: StreamConfig
    sample_rate: float
    latency_ns: np.ndarray = field(default_factory=lambda: np.zeros(0))
    classes: np.ndarray | None = None

    def __post_init__(self):
        self.emit_index = np.array([d.emit_index for d in self.decisions], dtype=np.int64)
        self.class_index = np.array([d.class_id for d in self.decisions], dtype=np.int64)
        self.confidence = np.array([d.confidence for d in self.decisions])
        self.padded = np.array([d.padded for d in self.decisions], dtype=bool)

    def __len__(self) -> int:
        return len(self.decisions)

    @property
    def class_id(self) -> np.ndarray:
        """Decisions as original class ids (ABSTAIN kept as -1)."""
        if self.classes is None:
            return self.class_index
        return np.where(self.class_index == ABSTAIN, ABSTAIN,
                        self.classes[np.clip(self.class_index, 0, None)])

    @property
    def times(self) -> np.ndarray:
        return self.emit_index / self.sample_rate

    @property
    def n_abstained(self) -> int:
        return int((self.class_index == ABSTAIN).sum())

    @property
    def n_emitted(self) -> int:
        return len(self) - self.n_abstained

    def latency_stats(self) -> dict:
        if not len(self.latency_ns):
            return {}
        us = self.latency_ns / 1e3
        return {
            "mean_us": float(us.mean()),
            "p50_us": float(np.percentile(us, 50)),
            "p95_us": float(np.percentile(us, 95)),
            "p99_us": float(np.percentile(us, 99)),
            "max_us": float(us.max()),
            "samples": int(len(us)),
        }

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["emit_index", "time_s", "class_id", "confidence"])
            for e, t, c, p in zip(self.emit_index.tolist(), self.times.tolist(),
                                  self.class_id.tolist(), self.confidence.tolist()):
                w.writerow([e, repr(round(t, 9)), c, repr(p)])

    def metadata(self, model_id: str = "") -> dict:
        return {
            "tau": self.config.tau,
            "n_cyc": self.config.n_cyc,
            "n_half": self.config.n_half,
            "lag_samples": self.config.n_half,
            "lag_ms": 1e3 * self.config.lag_seconds(self.sample_rate),
            "model_id": model_id,
            "decisions": len(self),
            "emitted": self.n_emitted,
            "abstained": self.n_abstained,
        }

    def write_metadata(self, path: str | Path, model_id: str = "") -> None:
        meta = {**self.metadata(model_id), "latency": self.latency_stats()}
        Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def run_stream(model, X, config: StreamConfig, sample_rate: float = 4800.0,
               batch_size: int = 1, classes=None) -> DecisionTrace:
    """Feed a standardized sample stream through ``model`` and the decision layer.

    With ``batch_size == 1`` each sample is inferred on its own, as a live
    stream would be. Larger batches only amortize inference cost; a model that
    infers in float32 may round the pushed vectors differently in the last
    bits. Every input index gets exactly one decision.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ContractError("stream must be an N x d matrix")
    if len(X) < config.n_cyc:
        raise ContractError(f"stream of {len(X)} samples is shorter than one window ({config.n_cyc})")
    if batch_size < 1:
        raise ValidationError("batch_size must be >= 1")
    engine = StreamEngine(config, model.n_classes_)
    decisions: list[Decision] = []
    latency = np.empty(len(X), dtype=np.int64)
    clock = time.perf_counter_ns
    if batch_size == 1:
        for i in range(len(X)):
            t0 = clock()
            d = engine.push(model.predict_proba(X[i: i + 1])[0])
            latency[i] = clock() - t0
            if d is not None:
                decisions.append(d)
    else:
        for s in range(0, len(X), batch_size):
            t0 = clock()
            P = model.predict_proba(X[s: s + batch_size])
            for p in P:
                d = engine.push(p)
                if d is not None:
                    decisions.append(d)
            latency[s: s + len(P)] = (clock() - t0) // len(P)
    tail = engine.flush()
    head = [d for d in tail if d.emit_index < config.n_back]
    decisions = head + decisions + [d for d in tail if d.emit_index >= config.n_back]
    return DecisionTrace(decisions, config, sample_rate, latency,
                         None if classes is None else np.asarray(classes))
