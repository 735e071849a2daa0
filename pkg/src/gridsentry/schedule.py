"""Anomaly event schedules and sample-time labelling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ScheduleError

NORMAL = 0

CLASS_NAMES: dict[int, str] = {
    0: "Normal Operation",
    1: "Single Line Fault A-N",
    2: "Single Line Fault B-N",
    3: "Single Line Fault C-N",
    4: "CT Ratio Attack on MU32",
    5: "Double Line Fault A-B",
    6: "Double Line Fault A-C",
    7: "Double Line Fault B-C",
    8: "CT Ratio Attack on MU23",
    9: "DLG Fault AB-N",
    10: "DLG Fault AC-N",
    11: "DLG Fault BC-N",
    12: "PT Ratio Attack on MU32",
    13: "PT Ratio Attack on MU23",
    14: "3 Lines Fault AB-C",
    15: "3 Lines Fault ABC-N",
    16: "GPS Spoofing on MU32",
    17: "GPS Spoofing on MU23",
}


@dataclass(frozen=True)
class Event:
    class_id: int
    start: float
    end: float

    def contains(self, t: float) -> bool:
        return self.start <= t <= self.end


@dataclass(frozen=True)
class EventSchedule:
    """Disjoint, closed anomaly intervals inside ``[0, duration]``."""

    events: tuple[Event, ...] = field(default_factory=tuple)
    duration: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, "events", tuple(sorted((_as_event(e) for e in self.events), key=lambda e: e.start))
        )
        self.validate()

    def validate(self) -> None:
        if not np.isfinite(self.duration) or self.duration <= 0:
            raise ScheduleError(f"duration must be positive, got {self.duration}")
        for ev in self.events:
            if ev.class_id not in CLASS_NAMES or ev.class_id == NORMAL:
                raise ScheduleError(f"class id {ev.class_id} outside 1..17")
            if not ev.start < ev.end:
                raise ScheduleError(f"event {ev} has start >= end")
            if ev.start < 0 or ev.end > self.duration:
                raise ScheduleError(f"event {ev} outside [0, {self.duration}]")
        for prev, nxt in zip(self.events, self.events[1:]):
            # closed intervals: a shared endpoint is already an overlap
            if nxt.start <= prev.end:
                raise ScheduleError(f"events {prev} and {nxt} overlap")

    @property
    def class_ids(self) -> list[int]:
        return [e.class_id for e in self.events]

    def label_times(self, times: np.ndarray) -> np.ndarray:
        """Label each time with the class of the interval covering it, else Normal."""
        times = np.asarray(times, dtype=float)
        labels = np.zeros(times.shape, dtype=np.int64)
        for ev in self.events:
            labels[(times >= ev.start) & (times <= ev.end)] = ev.class_id
        return labels

    def to_text(self) -> str:
        lines = [f"duration={_fmt(self.duration)}"]
        lines += [f"{e.class_id}, {_fmt(e.start)}, {_fmt(e.end)}" for e in self.events]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_labels(cls, labels, sample_rate: float) -> "EventSchedule":
        """Events as maximal runs of equal non-zero labels, spanning first to last sample time."""
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size == 0:
            raise ScheduleError("empty label vector")
        edges = np.flatnonzero(np.diff(labels)) + 1
        starts = np.concatenate([[0], edges])
        ends = np.concatenate([edges, [len(labels)]]) - 1
        events = tuple(Event(int(labels[a]), a / sample_rate, b / sample_rate)
                       for a, b in zip(starts, ends) if labels[a] != NORMAL and b > a)
        return cls(events, len(labels) / sample_rate)

    @classmethod
    def from_text(cls, text: str) -> "EventSchedule":
        """Inverse of ``to_text``: a ``duration=`` line plus ``class_id, start, end`` lines."""
        events, duration = [], None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("duration="):
                try:
                    duration = float(line.split("=", 1)[1])
                except ValueError as exc:
                    raise ScheduleError(f"line {lineno}: bad duration") from exc
            else:
                events.append(parse_event_line(line, lineno))
        if duration is None:
            raise ScheduleError("schedule text has no duration= line")
        return cls(tuple(events), duration)


def _fmt(x: float) -> str:
    return repr(float(x))


def _as_event(e) -> Event:
    if isinstance(e, Event):
        return e
    try:
        cid, start, end = e
        return Event(int(cid), float(start), float(end))
    except (TypeError, ValueError) as exc:
        raise ScheduleError(f"cannot interpret {e!r} as (class_id, start, end)") from exc


def parse_event_line(line: str, lineno: int | None = None) -> Event:
    parts = [p.strip() for p in line.replace(";", ",").split(",")]
    if len(parts) != 3:
        parts = line.split()
    where = f" (line {lineno})" if lineno is not None else ""
    if len(parts) != 3:
        raise ScheduleError(f"expected 'class_id, start, end'{where}: {line!r}")
    try:
        return Event(int(parts[0]), float(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise ScheduleError(f"bad event line{where}: {line!r}") from exc


# Training run: 17 scripted events (18 classes with Normal) over 22 s.
TRAINING_SCHEDULE = EventSchedule(
    events=(
        Event(1, 1.0, 1.5),
        Event(2, 2.0, 2.5),
        Event(3, 3.0, 3.5),
        Event(4, 4.0, 4.5),
        Event(5, 6.0, 6.5),
        Event(6, 7.0, 7.5),
        Event(7, 8.0, 8.5),
        Event(8, 9.0, 9.5),
        Event(9, 11.0, 11.5),
        Event(10, 12.0, 12.5),
        Event(11, 13.0, 13.5),
        Event(12, 14.0, 14.5),
        Event(13, 15.0, 15.5),
        Event(14, 17.0, 17.5),
        Event(15, 18.0, 18.5),
        Event(16, 20.0, 20.5),
        Event(17, 21.0, 21.5),
    ),
    duration=22.0,
)

# Five 0.2 s anomalies of the 6 s streaming run.
STREAMING_SCHEDULE = EventSchedule(
    events=(
        Event(1, 1.0, 1.2),
        Event(7, 2.0, 2.2),
        Event(10, 3.0, 3.2),
        Event(4, 4.0, 4.2),
        Event(13, 5.0, 5.2),
    ),
    duration=6.0,
)
