"""COMTRADE (1999 revision) reader and writer for analog transient records.

Only analog channels are supported. Data files may be ASCII or 16-bit binary.
Sample times are rebuilt from the sample index and the configured rate; the
per-row timestamps of the data file are written but never trusted on read.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ComtradeParseError, DataError, TruncationError, ValidationError
from .schedule import EventSchedule

REV_1999 = "1999"
ASCII = "ascii"
BINARY16 = "binary16"

INT16_LIMIT = 32767
# 0x8000 marks a missing sample in binary data files.
BINARY_MISSING = -32768

_TIME_RE = re.compile(r"^\s*(\d{1,2}):(\d{1,2}):(\d{1,2}(?:\.\d*)?)\s*$")


@dataclass(frozen=True)
class ChannelSpec:
    index: int
    name: str
    unit: str
    scale: float = 1.0
    offset: float = 0.0
    phase: str = ""
    circuit: str = ""

    def __post_init__(self):
        if self.scale == 0 or not math.isfinite(self.scale):
            raise ValidationError(f"channel {self.name!r}: scale must be finite and non-zero")


@dataclass(frozen=True)
class SamplingSpec:
    line_frequency: float
    sample_rate: float
    total_samples: int
    start_timestamp: float = 0.0

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValidationError("sample_rate must be positive")
        if self.total_samples < 1:
            raise ValidationError("total_samples must be >= 1")

    @property
    def samples_per_cycle(self) -> float:
        return self.sample_rate / self.line_frequency

    def times(self) -> np.ndarray:
        return self.start_timestamp + np.arange(self.total_samples) / self.sample_rate


@dataclass
class WaveformRecord:
    channels: list[ChannelSpec]
    sampling: SamplingSpec
    data: np.ndarray
    station: str = "GRIDSENTRY"
    device: str = "SURROGATE"
    version: str = REV_1999

    @property
    def channel_names(self) -> list[str]:
        return [c.name for c in self.channels]

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.sampling.times()

    def validate(self) -> None:
        """Check the structural invariants; raise ``ValidationError`` on violation."""
        if not self.channels:
            raise ValidationError("record has no channels")
        idx = [c.index for c in self.channels]
        if idx != list(range(1, len(idx) + 1)):
            raise ValidationError(f"channel indices must run 1..{len(idx)}, got {idx}")
        if self.data.ndim != 2 or self.data.shape[1] != len(self.channels):
            raise ValidationError(
                f"data shape {self.data.shape} does not match {len(self.channels)} channels"
            )
        if self.data.shape[0] != self.sampling.total_samples:
            raise ValidationError("data row count differs from total_samples")
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("record contains non-finite samples")


# --------------------------------------------------------------------------- reading


def read_record(cfg_text: bytes | str, dat_payload: bytes | str) -> WaveformRecord:
    """Parse a cfg/dat pair into engineering values (``a * raw + b`` per channel)."""
    lines = _decode(cfg_text).splitlines()
    cfg = _parse_cfg(lines)
    n_ch = len(cfg["channels"])
    total = cfg["sampling"].total_samples
    if cfg["format"] == ASCII:
        raw = _read_ascii_dat(_decode(dat_payload, what="dat"), total, n_ch)
    else:
        if isinstance(dat_payload, str):
            raise DataError("binary dat payload must be bytes")
        raw = _read_binary_dat(dat_payload, total, n_ch)
    scale = np.array([c.scale for c in cfg["channels"]])
    offset = np.array([c.offset for c in cfg["channels"]])
    data = raw * scale + offset
    if not np.all(np.isfinite(data)):
        raise DataError("non-finite value after applying channel scaling")
    return WaveformRecord(
        channels=cfg["channels"],
        sampling=cfg["sampling"],
        data=data,
        station=cfg["station"],
        device=cfg["device"],
        version=cfg["version"],
    )


def _decode(payload, what="cfg") -> str:
    if isinstance(payload, str):
        return payload
    try:
        return bytes(payload).decode("utf-8")
    except UnicodeDecodeError as exc:
        if what == "cfg":
            raise ComtradeParseError(f"not valid text: {exc}") from exc
        raise DataError(f"ASCII dat is not valid text: {exc}") from exc


def _fields(line: str) -> list[str]:
    return [f.strip() for f in line.split(",")]


def _num(text: str, lineno: int, what: str, kind=float):
    try:
        value = kind(text)
    except (TypeError, ValueError):
        raise ComtradeParseError(f"{what} is not a number: {text!r}", lineno) from None
    if kind is float and not math.isfinite(value):
        raise ComtradeParseError(f"{what} must be finite", lineno)
    return value


def _parse_cfg(lines: list[str]) -> dict:
    pos = 0

    def take(what: str) -> tuple[int, str]:
        nonlocal pos
        if pos >= len(lines):
            raise ComtradeParseError(f"unexpected end of file, expected {what}", pos + 1)
        pos += 1
        return pos, lines[pos - 1]

    ln, line = take("station line")
    head = _fields(line)
    if len(head) < 2:
        raise ComtradeParseError("expected 'station_name,rec_dev_id[,rev_year]'", ln)
    station, device = head[0], head[1]
    version = head[2] if len(head) > 2 and head[2] else "1991"

    ln, line = take("channel count line")
    counts = _fields(line)
    if len(counts) != 3:
        raise ComtradeParseError("expected 'TT,##A,##D'", ln)
    total_ch = _num(counts[0], ln, "total channel count", int)
    if not (counts[1].upper().endswith("A") and counts[2].upper().endswith("D")):
        raise ComtradeParseError("channel counts must be suffixed with A and D", ln)
    n_analog = _num(counts[1][:-1], ln, "analog channel count", int)
    n_status = _num(counts[2][:-1], ln, "status channel count", int)
    if n_status != 0:
        raise ComtradeParseError("status/digital channels are not supported", ln)
    if n_analog < 1 or total_ch != n_analog + n_status:
        raise ComtradeParseError("inconsistent channel counts", ln)

    channels = []
    for k in range(n_analog):
        ln, line = take(f"analog channel {k + 1}")
        f = _fields(line)
        if len(f) < 10:
            raise ComtradeParseError("analog channel line needs at least 10 fields", ln)
        index = _num(f[0], ln, "channel index", int)
        if index != k + 1:
            raise ComtradeParseError(f"expected channel index {k + 1}, got {index}", ln)
        scale = _num(f[5], ln, "multiplier a")
        if scale == 0:
            raise ComtradeParseError("multiplier a must be non-zero", ln)
        channels.append(
            ChannelSpec(
                index=index,
                name=f[1],
                unit=f[4],
                scale=scale,
                offset=_num(f[6], ln, "offset b"),
                phase=f[2],
                circuit=f[3],
            )
        )

    ln, line = take("line frequency")
    line_frequency = _num(line.strip(), ln, "line frequency")
    if line_frequency <= 0:
        raise ComtradeParseError("line frequency must be positive", ln)
    ln, line = take("nrates")
    nrates = _num(line.strip(), ln, "nrates", int)
    if nrates != 1:
        raise ComtradeParseError("exactly one sampling rate is supported", ln)
    ln, line = take("sample rate line")
    f = _fields(line)
    if len(f) != 2:
        raise ComtradeParseError("expected 'samp,endsamp'", ln)
    rate = _num(f[0], ln, "sample rate")
    total = _num(f[1], ln, "endsamp", int)
    if rate <= 0 or total < 1:
        raise ComtradeParseError("sample rate and endsamp must be positive", ln)

    ln, line = take("start timestamp")
    start = _parse_time_of_day(line, ln)
    take("trigger timestamp")
    ln, line = take("data file type")
    ft = line.strip().upper()
    if ft == "ASCII":
        fmt = ASCII
    elif ft == "BINARY":
        fmt = BINARY16
    else:
        raise ComtradeParseError(f"unsupported data file type {line.strip()!r}", ln)
    if pos < len(lines) and lines[pos].strip():
        _num(lines[pos].strip(), pos + 1, "timemult")

    return {
        "station": station,
        "device": device,
        "version": version,
        "channels": channels,
        "sampling": SamplingSpec(line_frequency, rate, total, start),
        "format": fmt,
    }


def _parse_time_of_day(line: str, ln: int) -> float:
    f = _fields(line)
    if len(f) != 2:
        raise ComtradeParseError("expected 'dd/mm/yyyy,hh:mm:ss.ssssss'", ln)
    m = _TIME_RE.match(f[1])
    if m is None:
        raise ComtradeParseError(f"bad time {f[1]!r}", ln)
    return int(m.group(1)) * 3600 + int(m.group(2)) * 60 + float(m.group(3))


def _read_ascii_dat(text: str, total: int, n_ch: int) -> np.ndarray:
    rows = [r for r in text.splitlines() if r.strip()]
    if len(rows) != total:
        raise TruncationError(f"dat has {len(rows)} rows, cfg declares {total}")
    try:
        arr = np.loadtxt(rows, delimiter=",", dtype=float, ndmin=2)
    except ValueError as exc:
        widths = {len(r.split(",")) for r in rows}
        if widths != {n_ch + 2}:
            raise TruncationError(
                f"dat rows have {sorted(widths)} fields, expected {n_ch + 2}"
            ) from None
        raise DataError(f"unparsable dat value: {exc}") from None
    if arr.shape[1] != n_ch + 2:
        raise TruncationError(f"dat rows have {arr.shape[1]} fields, expected {n_ch + 2}")
    values = arr[:, 2:]
    if not np.all(np.isfinite(values)):
        bad = int(np.argwhere(~np.isfinite(values))[0, 0])
        raise DataError(f"non-finite value in dat row {bad + 1}")
    return values


def _binary_dtype(n_ch: int) -> np.dtype:
    return np.dtype([("n", "<u4"), ("t", "<u4"), ("v", "<i2", (n_ch,))])


def _read_binary_dat(payload: bytes, total: int, n_ch: int) -> np.ndarray:
    dtype = _binary_dtype(n_ch)
    expected = total * dtype.itemsize
    if len(payload) != expected:
        raise TruncationError(
            f"binary dat has {len(payload)} bytes, expected {expected} "
            f"({total} samples x {dtype.itemsize} bytes)"
        )
    rec = np.frombuffer(payload, dtype=dtype)
    raw = rec["v"].reshape(total, n_ch)
    if np.any(raw == BINARY_MISSING):
        bad = int(np.argwhere(raw == BINARY_MISSING)[0, 0])
        raise DataError(f"missing-value marker in binary sample {bad + 1}")
    return raw.astype(float)


# --------------------------------------------------------------------------- writing


def binary16_scaling(values: np.ndarray) -> tuple[float, float]:
    """Pick ``(a, b)`` so that ``(values - b) / a`` spans at most +/-32767."""
    lo, hi = float(np.min(values)), float(np.max(values))
    offset = (hi + lo) / 2.0
    half = (hi - lo) / 2.0
    if half == 0:
        return 1.0, offset
    return half / INT16_LIMIT, offset


def _format_ascii(v: float) -> str:
    if v == 0.0 or abs(v) >= 1.0:
        return f"{v:.6f}"
    return f"{v:.6e}"


def write_record(record: WaveformRecord, format: str = ASCII) -> tuple[str, bytes]:
    """Serialize a record to ``(cfg_text, dat_payload)``."""
    if format not in (ASCII, BINARY16):
        raise ValidationError(f"unknown dat format {format!r}")
    record.validate()
    n, n_ch = record.data.shape
    fs = record.sampling.sample_rate
    stamps = np.rint(np.arange(n) * (1e6 / fs)).astype(np.int64)

    if format == ASCII:
        scaling = [(1.0, 0.0)] * n_ch
        out = io.StringIO()
        for i, row in enumerate(record.data):
            out.write(f"{i + 1},{stamps[i]},")
            out.write(",".join(_format_ascii(v) for v in row.tolist()))
            out.write("\n")
        dat: bytes = out.getvalue().encode("ascii")
        limits = [(float(record.data[:, j].min()), float(record.data[:, j].max())) for j in range(n_ch)]
    else:
        scaling = [binary16_scaling(record.data[:, j]) for j in range(n_ch)]
        a = np.array([s[0] for s in scaling])
        b = np.array([s[1] for s in scaling])
        raw = np.clip(np.rint((record.data - b) / a), -INT16_LIMIT, INT16_LIMIT).astype("<i2")
        rec = np.zeros(n, dtype=_binary_dtype(n_ch))
        rec["n"] = np.arange(1, n + 1)
        rec["t"] = stamps
        rec["v"] = raw
        dat = rec.tobytes()
        limits = [(-INT16_LIMIT, INT16_LIMIT)] * n_ch

    cfg = [f"{record.station},{record.device},{REV_1999}", f"{n_ch},{n_ch}A,0D"]
    for ch, (a, b), (lo, hi) in zip(record.channels, scaling, limits):
        cfg.append(
            f"{ch.index},{ch.name},{ch.phase},{ch.circuit},{ch.unit},"
            f"{a!r},{b!r},0,{lo!r},{hi!r},1,1,P"
        )
    cfg.append(f"{record.sampling.line_frequency:g}")
    cfg.append("1")
    cfg.append(f"{fs:g},{n}")
    stamp = _format_time_of_day(record.sampling.start_timestamp)
    cfg.append(stamp)
    cfg.append(stamp)
    cfg.append("ASCII" if format == ASCII else "BINARY")
    cfg.append("1")
    return "\n".join(cfg) + "\n", dat


def _format_time_of_day(seconds: float) -> str:
    if not 0 <= seconds < 86400:
        raise ValidationError("start_timestamp must lie within one day")
    h, rem = divmod(seconds, 3600)
    m, s = divmod(rem, 60)
    return f"01/01/2000,{int(h):02d}:{int(m):02d}:{s:09.6f}"


# --------------------------------------------------------------------------- labels


def attach_labels(record: WaveformRecord, schedule: EventSchedule) -> np.ndarray:
    """Per-sample class ids: the class of the closed interval covering each sample time."""
    schedule.validate()
    return schedule.label_times(record.times)


def write_labels(path: str | Path, labels: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_index", "label"])
        w.writerows(zip(range(len(labels)), np.asarray(labels).tolist()))


def read_labels(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sample_index", "label"]:
            raise DataError(f"{path}: expected header 'sample_index,label'")
        rows = [(int(i), int(lab)) for i, lab in reader]
    idx = [i for i, _ in rows]
    if idx != list(range(len(rows))):
        raise DataError(f"{path}: sample_index must run 0..N-1")
    return np.array([lab for _, lab in rows], dtype=np.int64)


# --------------------------------------------------------------------------- files


def save(record: WaveformRecord, stem: str | Path, format: str = ASCII,
         labels: np.ndarray | None = None) -> list[Path]:
    """Write ``stem.cfg``/``stem.dat`` (and ``stem.labels.csv``); return the paths."""
    stem = Path(stem)
    cfg, dat = write_record(record, format)
    paths = [stem.with_suffix(".cfg"), stem.with_suffix(".dat")]
    paths[0].write_text(cfg)
    paths[1].write_bytes(dat)
    if labels is not None:
        if len(labels) != record.n_samples:
            raise ValidationError("label vector length differs from sample count")
        paths.append(stem.with_suffix(".labels.csv"))
        write_labels(paths[-1], labels)
    return paths


def load(stem: str | Path) -> tuple[WaveformRecord, np.ndarray | None]:
    """Read a cfg/dat pair and its label sidecar if present."""
    stem = Path(stem)
    if stem.suffix in (".cfg", ".dat"):
        stem = stem.with_suffix("")
    record = read_record(stem.with_suffix(".cfg").read_bytes(), stem.with_suffix(".dat").read_bytes())
    label_path = stem.with_suffix(".labels.csv")
    labels = read_labels(label_path) if label_path.exists() else None
    if labels is not None and len(labels) != record.n_samples:
        raise DataError(f"{label_path}: {len(labels)} labels for {record.n_samples} samples")
    return record, labels


__all__ = [
    "ChannelSpec",
    "SamplingSpec",
    "WaveformRecord",
    "read_record",
    "write_record",
    "attach_labels",
    "binary16_scaling",
    "read_labels",
    "write_labels",
    "save",
    "load",
]
