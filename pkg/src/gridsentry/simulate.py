"""Phasor-level surrogate for the two-merging-unit 4.8 kHz testbed.

Each merging unit (MU32, MU23) reports three phase voltages and currents; the
two extra features are the residual (neutral) currents ``-(IA + IB + IC)``.
Physical faults modify the per-phase phasors behind a one-cycle exponential
ramp, cyber attacks manipulate the already-measured samples of one unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .comtrade import ChannelSpec, SamplingSpec, WaveformRecord
from .errors import ScheduleError, ValidationError
from .schedule import (
    STREAMING_SCHEDULE,
    TRAINING_SCHEDULE,
    CLASS_NAMES,
    Event,
    EventSchedule,
    parse_event_line,
)

UNITS = ("MU32", "MU23")
PHASES = ("A", "B", "C")
PHASE_ANGLES = np.array([0.0, -2.0 * np.pi / 3.0, 2.0 * np.pi / 3.0])

CHANNEL_NAMES = (
    [f"{mu}_{q}{p}" for mu in UNITS for q in ("V", "I") for p in PHASES]
    + [f"{mu}_IN" for mu in UNITS]
)

# class id -> (kind, phases involved, grounded)
_FAULTS = {
    1: ("slg", "A", True),
    2: ("slg", "B", True),
    3: ("slg", "C", True),
    5: ("ll", "AB", False),
    6: ("ll", "AC", False),
    7: ("ll", "BC", False),
    9: ("ll", "AB", True),
    10: ("ll", "AC", True),
    11: ("ll", "BC", True),
    14: ("3ph", "ABC", False),
    15: ("3ph", "ABC", True),
}
# class id -> (kind, target unit index)
_ATTACKS = {
    4: ("ct", 0),
    8: ("ct", 1),
    12: ("pt", 0),
    13: ("pt", 1),
    16: ("gps", 0),
    17: ("gps", 1),
}


@dataclass(frozen=True)
class FaultLevels:
    """Per-unit fault signature levels (IBR-limited currents)."""

    slg_sag: float = 0.3
    slg_current: float = 1.4
    ll_sag: float = 0.5
    ll_current: float = 1.3
    three_phase_sag: float = 0.4
    three_phase_current: float = 1.4
    zero_sequence: float = 0.5
    harmonics: tuple[tuple[int, float], ...] = ((5, 0.08), (7, 0.05))


@dataclass(frozen=True)
class GridConfig:
    line_frequency: float = 60.0
    sample_rate: float = 4800.0
    nominal_voltage: float = 11267.7  # 13.8 kV line-to-line, peak per phase
    nominal_current: float = 100.0
    noise_sigma: float = 0.01
    harmonic_profile: tuple[tuple[int, float], ...] = ((5, 0.02), (7, 0.01))
    seed: int = 0
    power_factor_angle: float = np.deg2rad(20.0)
    unit_angles: tuple[float, float] = (0.0, np.deg2rad(-3.0))
    load_scale: float = 1.0
    faults: FaultLevels = field(default_factory=FaultLevels)
    energization: bool = False
    energization_time: float = 0.15
    inrush_amplitude: float = 1.5
    inrush_frequency: float = 540.0
    inrush_tau: float = 0.025

    def validate(self) -> None:
        if self.line_frequency <= 0 or self.sample_rate <= 0:
            raise ValidationError("frequencies must be positive")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")
        if any(a < 0 for _, a in self.harmonic_profile):
            raise ValidationError("harmonic amplitudes must be >= 0")
        if self.nominal_voltage <= 0 or self.nominal_current <= 0:
            raise ValidationError("nominal amplitudes must be positive")

    @property
    def samples_per_cycle(self) -> float:
        return self.sample_rate / self.line_frequency


@dataclass(frozen=True)
class AttackParams:
    ct_ratio_factor: float = 0.5
    pt_ratio_factor: float = 0.5
    gps_shift: float = 2.08e-3

    def validate(self, line_frequency: float = 60.0) -> None:
        for name in ("ct_ratio_factor", "pt_ratio_factor"):
            v = getattr(self, name)
            if v <= 0 or v == 1:
                raise ValidationError(f"{name} must be positive and != 1")
        if not 0 < self.gps_shift < 1.0 / line_frequency:
            raise ValidationError("gps_shift must lie inside one cycle")


@dataclass
class EventEffect:
    """Phasor changes of one event at full strength, indexed ``[unit, phase]``."""

    kind: str
    voltage_gain: np.ndarray = field(default_factory=lambda: np.ones((2, 3)))
    current_gain: np.ndarray = field(default_factory=lambda: np.ones((2, 3)))
    current_shift: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))
    harmonic_gain: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))
    zero_sequence: np.ndarray = field(default_factory=lambda: np.zeros(2))
    unit: int | None = None
    factor: float = 1.0
    shift: float = 0.0

    @property
    def physical(self) -> bool:
        return self.kind not in ("ct", "pt", "gps")


def apply_event(class_id: int, config: GridConfig | None = None,
                attacks: AttackParams | None = None) -> EventEffect:
    """Describe how ``class_id`` transforms the base phasors or measured channels."""
    config = config or GridConfig()
    attacks = attacks or AttackParams()
    lv = config.faults
    if class_id in _ATTACKS:
        kind, unit = _ATTACKS[class_id]
        if kind == "ct":
            return EventEffect(kind, unit=unit, factor=attacks.ct_ratio_factor)
        if kind == "pt":
            return EventEffect(kind, unit=unit, factor=attacks.pt_ratio_factor)
        return EventEffect(kind, unit=unit, shift=attacks.gps_shift)
    if class_id not in _FAULTS:
        raise ValidationError(f"unknown class id {class_id}")

    kind, phases, grounded = _FAULTS[class_id]
    eff = EventEffect(kind)
    idx = [PHASES.index(p) for p in phases]
    sag, cur = {
        "slg": (lv.slg_sag, lv.slg_current),
        "ll": (lv.ll_sag, lv.ll_current),
        "3ph": (lv.three_phase_sag, lv.three_phase_current),
    }[kind]
    eff.voltage_gain[:, idx] = sag
    eff.current_gain[:, idx] = cur
    eff.harmonic_gain[:, idx] = 1.0
    if kind == "ll":
        x, y = idx
        d = np.angle(np.exp(1j * (PHASE_ANGLES[x] - PHASE_ANGLES[y])))
        # pull the two phasors symmetrically to 180 degrees apart
        s = np.sign(d) * (np.pi / 2 - abs(d) / 2)
        eff.current_shift[:, x] = s
        eff.current_shift[:, y] = -s
    if grounded and kind != "slg":
        eff.zero_sequence[:] = lv.zero_sequence
    return eff


def ramp_envelope(t: np.ndarray, start: float, end: float, cycle: float) -> np.ndarray:
    """0 -> 1 over one cycle after ``start``, 1 -> 0 over one cycle after ``end``.

    Both ramps are exponential in shape and land exactly on their end values
    after one cycle.
    """
    rate = 5.0
    norm = 1.0 - np.exp(-rate)

    def rise(s):
        return (1.0 - np.exp(-rate * np.clip(s, 0.0, 1.0))) / norm

    env = np.zeros_like(t, dtype=float)
    on = (t >= start) & (t <= end)
    env[on] = rise((t[on] - start) / cycle)
    level_at_end = float(rise((end - start) / cycle))
    off = (t > end) & (t < end + cycle)
    env[off] = level_at_end * (1.0 - rise((t[off] - end) / cycle))
    return env


class _Generator:
    def __init__(self, config: GridConfig, schedule: EventSchedule, attacks: AttackParams):
        self.cfg = config
        self.attacks = attacks
        self.cycle = 1.0 / config.line_frequency
        self.omega = 2.0 * np.pi * config.line_frequency
        self.physical = []
        self.cyber = []
        for ev in schedule.events:
            eff = apply_event(ev.class_id, config, attacks)
            (self.physical if eff.physical else self.cyber).append((ev, eff))

    def unit_signals(self, unit: int, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Noise-free ``(voltages, currents)`` of one unit, each ``len(t) x 3``."""
        cfg = self.cfg
        n = len(t)
        vg = np.ones((n, 3))
        ig = np.ones((n, 3))
        ishift = np.zeros((n, 3))
        hg = np.zeros((n, 3))
        z0 = np.zeros(n)
        for ev, eff in self.physical:
            env = ramp_envelope(t, ev.start, ev.end, self.cycle)
            if not env.any():
                continue
            e = env[:, None]
            vg += e * (eff.voltage_gain[unit] - 1.0)
            ig += e * (eff.current_gain[unit] - 1.0)
            ishift += e * eff.current_shift[unit]
            hg += e * eff.harmonic_gain[unit]
            z0 += env * eff.zero_sequence[unit]

        theta = self.omega * t[:, None] + PHASE_ANGLES[None, :] + cfg.unit_angles[unit]
        itheta = theta - cfg.power_factor_angle
        v = cfg.nominal_voltage * vg * np.cos(theta)
        i = ig * np.cos(itheta + ishift)
        for order, amp in cfg.harmonic_profile:
            i += amp * np.cos(order * itheta)
        for order, amp in cfg.faults.harmonics:
            i += hg * amp * np.cos(order * (itheta + ishift))
        i += (z0 / 3.0)[:, None] * np.cos(self.omega * t + cfg.unit_angles[unit]
                                          - cfg.power_factor_angle)[:, None]
        if cfg.energization:
            w = np.clip(np.exp(-t / cfg.inrush_tau) - np.exp(-cfg.energization_time / cfg.inrush_tau),
                         0.0, None)[:, None]
            # LC ringing starts from zero at the closing instant and scales with
            # each phase's voltage at that instant
            closing = np.cos(PHASE_ANGLES + cfg.unit_angles[unit])
            ring = np.sin(2.0 * np.pi * cfg.inrush_frequency * t)[:, None] * closing[None, :]
            i += cfg.inrush_amplitude * w * ring
            v += 0.15 * cfg.nominal_voltage * w * ring
        i *= cfg.nominal_current * cfg.load_scale
        return v, i


def synthesize(config: GridConfig, schedule: EventSchedule,
               attacks: AttackParams | None = None) -> tuple[WaveformRecord, np.ndarray]:
    """Generate a 14-channel record and its per-sample class labels."""
    attacks = attacks or AttackParams()
    config.validate()
    attacks.validate(config.line_frequency)
    schedule.validate()
    n = int(round(schedule.duration * config.sample_rate))
    if n < 1:
        raise ScheduleError("schedule duration shorter than one sample")
    t = np.arange(n) / config.sample_rate
    gen = _Generator(config, schedule, attacks)
    rng = np.random.default_rng(config.seed)

    data = np.empty((n, 14))
    for u in range(2):
        v, i = gen.unit_signals(u, t)
        data[:, 6 * u: 6 * u + 3] = v
        data[:, 6 * u + 3: 6 * u + 6] = i

    for ev, eff in gen.cyber:
        if eff.kind != "gps":
            continue
        mask = (t >= ev.start) & (t <= ev.end)
        v, i = gen.unit_signals(eff.unit, t[mask] - eff.shift)
        cols = slice(6 * eff.unit, 6 * eff.unit + 6)
        data[mask, cols] = np.hstack([v, i])

    if config.noise_sigma > 0:
        scale = np.tile(np.repeat([config.nominal_voltage, config.nominal_current], 3), 2)
        data[:, :12] += rng.standard_normal((n, 12)) * (config.noise_sigma * scale)

    for ev, eff in gen.cyber:
        if eff.kind == "gps":
            continue
        mask = (t >= ev.start) & (t <= ev.end)
        first = 6 * eff.unit + (3 if eff.kind == "ct" else 0)
        data[mask, first: first + 3] *= eff.factor

    data[:, 12] = -(data[:, 3] + data[:, 4] + data[:, 5])
    data[:, 13] = -(data[:, 9] + data[:, 10] + data[:, 11])

    record = WaveformRecord(
        channels=make_channels(),
        sampling=SamplingSpec(config.line_frequency, config.sample_rate, n, 0.0),
        data=data,
    )
    return record, schedule.label_times(t)


def make_channels() -> list[ChannelSpec]:
    chans = []
    for k, name in enumerate(CHANNEL_NAMES):
        unit, sig = name.split("_")
        chans.append(ChannelSpec(index=k + 1, name=name, unit="V" if sig[0] == "V" else "A",
                                 phase=sig[1], circuit=unit))
    return chans


class BenchmarkPair(NamedTuple):
    train_record: WaveformRecord
    train_labels: np.ndarray
    train_schedule: EventSchedule
    stream_record: WaveformRecord
    stream_labels: np.ndarray
    stream_schedule: EventSchedule


# The prediction run is recorded at a different operating point: power flow
# between the two units reverses, so MU23 leads MU32 instead of lagging it.
PREDICTION_ANGLE_SHIFT = float(np.deg2rad(17.0))


def benchmark_configs(seed: int = 0, base: GridConfig | None = None,
                      angle_shift: float = PREDICTION_ANGLE_SHIFT) -> tuple[GridConfig, GridConfig]:
    """Training and streaming configurations of the benchmark pair.

    Both records start with an energization transient. The streaming record
    uses the next seed and moves MU23's angle by ``angle_shift`` radians.
    """
    base = base or GridConfig()
    train = replace(base, seed=seed, energization=True)
    a32, a23 = base.unit_angles
    stream = replace(base, seed=seed + 1, energization=True, unit_angles=(a32, a23 + angle_shift))
    return train, stream


def make_benchmark_pair(seed: int = 0, base: GridConfig | None = None,
                        attacks: AttackParams | None = None) -> BenchmarkPair:
    """22 s training record (all 17 event classes) and 6 s streaming record (five events)."""
    train_cfg, stream_cfg = benchmark_configs(seed, base)
    tr, tl = synthesize(train_cfg, TRAINING_SCHEDULE, attacks)
    sr, sl = synthesize(stream_cfg, STREAMING_SCHEDULE, attacks)
    return BenchmarkPair(tr, tl, TRAINING_SCHEDULE, sr, sl, STREAMING_SCHEDULE)


# --------------------------------------------------------------------------- config files

_FLOAT_KEYS = {
    "line_frequency", "sample_rate", "nominal_voltage", "nominal_current", "noise_sigma",
    "load_scale", "energization_time", "inrush_amplitude", "inrush_frequency", "inrush_tau",
}
_ATTACK_KEYS = {"ct_ratio_factor", "pt_ratio_factor", "gps_shift"}


@dataclass
class SimulationConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    attacks: AttackParams = field(default_factory=AttackParams)
    schedule: EventSchedule | None = None
    extra: dict[str, str] = field(default_factory=dict)


@dataclass
class ConfigSection:
    """Raw settings of one block of config lines, before defaults are applied."""

    grid: dict = field(default_factory=dict)
    attacks: dict = field(default_factory=dict)
    events: list[Event] = field(default_factory=list)
    duration: float | None = None
    extra: dict[str, str] = field(default_factory=dict)

    def schedule(self) -> EventSchedule | None:
        if not self.events and self.duration is None:
            return None
        if self.duration is None:
            raise ScheduleError("event lines given without 'duration='")
        return EventSchedule(tuple(self.events), self.duration)


def parse_section(lines, first_lineno: int = 1) -> ConfigSection:
    """Parse ``key=value`` lines plus ``class_id, start, end`` event lines.

    ``#`` starts a comment. Unknown keys are kept in ``extra`` for the caller.
    Angles given with a ``_deg`` suffix are converted to radians.
    """
    sec = ConfigSection()
    for lineno, raw in enumerate(lines, start=first_lineno):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            sec.events.append(parse_event_line(line, lineno))
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key == "duration":
                sec.duration = float(value)
            elif key in _FLOAT_KEYS:
                sec.grid[key] = float(value)
            elif key == "seed":
                sec.grid[key] = int(value)
            elif key == "energization":
                sec.grid[key] = value.lower() in ("1", "true", "yes", "on")
            elif key == "harmonic_profile":
                sec.grid[key] = _parse_harmonics(value)
            elif key == "power_factor_deg":
                sec.grid["power_factor_angle"] = float(np.deg2rad(float(value)))
            elif key == "unit_angles_deg":
                a, b = (float(np.deg2rad(float(v))) for v in value.split(";"))
                sec.grid["unit_angles"] = (a, b)
            elif key in _ATTACK_KEYS:
                sec.attacks[key] = float(value)
            else:
                sec.extra[key] = value
        except ValueError as exc:
            raise ValidationError(f"config line {lineno}: bad value for {key!r}") from exc
    return sec


def build_grid(base: GridConfig, *sections: ConfigSection) -> GridConfig:
    kw = {}
    for sec in sections:
        kw.update(sec.grid)
    try:
        grid = replace(base, **kw)
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc
    grid.validate()
    return grid


def build_attacks(*sections: ConfigSection) -> AttackParams:
    kw = {}
    for sec in sections:
        kw.update(sec.attacks)
    return AttackParams(**kw)


def parse_config(text: str) -> SimulationConfig:
    """Single-record config: grid keys, attack keys, ``duration=`` and event lines."""
    sec = parse_section(text.splitlines())
    grid = build_grid(GridConfig(), sec)
    attacks = build_attacks(sec)
    attacks.validate(grid.line_frequency)
    return SimulationConfig(grid, attacks, sec.schedule(), sec.extra)


def _parse_harmonics(value: str) -> tuple[tuple[int, float], ...]:
    out = []
    for item in value.split(";"):
        item = item.strip()
        if item:
            order, amp = item.split(":")
            out.append((int(order), float(amp)))
    return tuple(out)


__all__ = [
    "CHANNEL_NAMES",
    "CLASS_NAMES",
    "AttackParams",
    "BenchmarkPair",
    "EventEffect",
    "FaultLevels",
    "GridConfig",
    "ConfigSection",
    "SimulationConfig",
    "build_attacks",
    "build_grid",
    "parse_section",
    "apply_event",
    "PREDICTION_ANGLE_SHIFT",
    "benchmark_configs",
    "make_benchmark_pair",
    "parse_config",
    "ramp_envelope",
    "synthesize",
]
