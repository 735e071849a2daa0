"""Command-line orchestration: generate -> train -> stream -> report.

Every command works inside one experiment directory (``--out``)::

    data/      train.cfg/.dat/.labels.csv, stream.cfg/.dat/.labels.csv
    models/    <name>.gsm artifacts, <name>.offline.json, <name>.cv.json
    stream/    <name>/trace.csv, confidence.csv, metrics.json
    timings/   wall-clock and latency figures (kept out of the manifest hashes)
    phase1.*, report.*, per_event.*, manifest.json

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 contract violation.
"""

from __future__ import annotations

import argparse
import ast
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import comtrade, metrics
from .errors import ComtradeError, ContractError, EmptyDatasetError, ValidationError
from .models import SUITE, evaluate_offline, fit, grid_search, load_model, save_model, suite_spec
from .models.selection import TUNE_GRIDS
from .prep import Scaler, prepare
from .schedule import STREAMING_SCHEDULE, TRAINING_SCHEDULE, EventSchedule
from .simulate import (
    ConfigSection,
    GridConfig,
    benchmark_configs,
    build_attacks,
    build_grid,
    parse_section,
    synthesize,
)
from .stream import StreamConfig, run_stream

log = logging.getLogger("gridsentry")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_CONTRACT = 0, 2, 3, 4
ARTIFACT_SUFFIX = ".gsm"
TIMING_DIR = "timings"
MANIFEST = "manifest.json"
SECTIONS = ("train", "stream", "models")


# --------------------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    common: ConfigSection = field(default_factory=ConfigSection)
    train: ConfigSection = field(default_factory=ConfigSection)
    stream: ConfigSection = field(default_factory=ConfigSection)
    model_overrides: dict[str, dict] = field(default_factory=dict)
    text: str = ""


def parse_experiment_config(text: str) -> ExperimentConfig:
    """Global ``key=value`` lines, then optional ``[train]``, ``[stream]`` and ``[models]`` blocks.

    ``[models]`` lines look like ``mlp_wide.epochs=50`` and override suite
    hyperparameters. Grid keys in ``[train]``/``[stream]`` apply to that record only.
    """
    blocks: dict[str, list[tuple[int, str]]] = {"": []}
    current = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in SECTIONS:
                raise ValidationError(f"config line {lineno}: unknown section [{current}]")
            blocks.setdefault(current, [])
            continue
        blocks.setdefault(current, []).append((lineno, raw))

    def section(name):
        sec = ConfigSection()
        for lineno, raw in blocks.get(name, []):
            part = parse_section([raw], lineno)
            sec.grid.update(part.grid)
            sec.attacks.update(part.attacks)
            sec.events.extend(part.events)
            sec.extra.update(part.extra)
            if part.duration is not None:
                sec.duration = part.duration
        return sec

    cfg = ExperimentConfig(section(""), section("train"), section("stream"), text=text)
    if cfg.common.events or cfg.common.duration is not None:
        raise ValidationError("event lines and duration= belong in a [train] or [stream] section")
    for lineno, raw in blocks.get("models", []):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        name, dot, param = key.strip().partition(".")
        if not sep or not dot:
            raise ValidationError(f"config line {lineno}: expected <model>.<param>=<value>")
        if name not in SUITE:
            raise ValidationError(f"config line {lineno}: unknown model {name!r}")
        cfg.model_overrides.setdefault(name, {})[param.strip()] = _literal(value.strip())
    return cfg


def _literal(text: str):
    if text in ("None", "none", "null"):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return parse_experiment_config(Path(path).read_text())


# --------------------------------------------------------------------------- helpers


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def check_writable(paths, force: bool) -> None:
    existing = [str(p) for p in paths if Path(p).exists()]
    if existing and not force:
        raise FileExistsError(f"refusing to overwrite {existing[0]} (use --force)")


def write_table(rows: list[dict], stem: Path, fmt: str, columns=None) -> Path:
    path = stem.with_suffix(f".{fmt}")
    if fmt == "csv":
        metrics.write_csv(rows, path, columns)
    else:
        metrics.write_json(rows, path)
    return path


def update_manifest(out: Path, **inputs) -> dict:
    """Record inputs and the hash of every produced file (timing files excluded)."""
    path = out / MANIFEST
    manifest = json.loads(path.read_text()) if path.exists() else {"inputs": {}}
    manifest["inputs"].update(inputs)
    artifacts = {}
    for p in sorted(out.rglob("*")):
        rel = p.relative_to(out).as_posix()
        if p.is_file() and rel != MANIFEST and not rel.startswith(TIMING_DIR + "/"):
            artifacts[rel] = sha256(p)
    manifest["artifacts"] = artifacts
    metrics.write_json(manifest, path)
    return manifest


def record_timing(out: Path, name: str, data: dict) -> None:
    d = out / TIMING_DIR
    d.mkdir(parents=True, exist_ok=True)
    metrics.write_json(data, d / f"{name}.json")


def parse_models(text: str | None, default=None) -> list[str]:
    if not text:
        return list(default if default is not None else SUITE)
    names = [s.strip() for s in text.split(",") if s.strip()]
    unknown = [n for n in names if n not in SUITE]
    if unknown:
        raise ValidationError(f"unknown model(s) {unknown}; choose from {sorted(SUITE)}")
    return names


# --------------------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    base = build_grid(GridConfig(), cfg.common)
    train_base, stream_base = benchmark_configs(args.seed, base)
    train_grid = build_grid(train_base, cfg.train)
    stream_grid = build_grid(stream_base, cfg.stream)
    train_sched = _schedule(cfg.train, TRAINING_SCHEDULE, args.duration)
    stream_sched = _schedule(cfg.stream, STREAMING_SCHEDULE)
    train_att = build_attacks(cfg.common, cfg.train)
    stream_att = build_attacks(cfg.common, cfg.stream)
    train_att.validate(train_grid.line_frequency)
    stream_att.validate(stream_grid.line_frequency)

    data = Path(args.out) / "data"
    targets = [data / f"{s}{ext}" for s in ("train", "stream") for ext in (".cfg", ".dat", ".labels.csv")]
    check_writable(targets, args.force)
    train_rec, train_lab = synthesize(train_grid, train_sched, train_att)
    stream_rec, stream_lab = synthesize(stream_grid, stream_sched, stream_att)

    data.mkdir(parents=True, exist_ok=True)
    comtrade.save(train_rec, data / "train", args.dat_format, train_lab)
    comtrade.save(stream_rec, data / "stream", args.dat_format, stream_lab)
    update_manifest(Path(args.out), seed=args.seed, config_sha256=_text_hash(cfg.text),
                    dat_format=args.dat_format)
    print(f"generated {train_rec.n_samples} training and {stream_rec.n_samples} streaming samples in {data}")
    return EXIT_OK


def _schedule(sec: ConfigSection, default: EventSchedule, duration=None) -> EventSchedule:
    """Events from the section if any; a bare duration rescopes the default schedule."""
    if duration is not None:
        sec.duration = duration
    if sec.events:
        return sec.schedule()
    if sec.duration is not None:
        return replace(default, duration=sec.duration)
    return default


def _text_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    names = parse_models(args.models)
    tune = parse_models(args.tune, default=[]) if args.tune else []
    out = Path(args.out)
    mdir = out / "models"
    targets = [mdir / f"{n}{ARTIFACT_SUFFIX}" for n in names]
    check_writable(targets, args.force)

    record, labels = comtrade.load(out / "data" / "train")
    if labels is None:
        raise FileNotFoundError(f"{out / 'data' / 'train.labels.csv'} is missing")
    split, scaler = prepare(record, labels, test_fraction=0.2, seed=args.seed)
    classes = split.train.encoder.classes

    mdir.mkdir(parents=True, exist_ok=True)
    timings = {}
    for name in names:
        spec = suite_spec(name, seed=args.seed, **cfg.model_overrides.get(name, {}))
        t0 = time.perf_counter()
        if name in tune:
            grid = TUNE_GRIDS.get(spec.kind)
            if grid is None:
                raise ValidationError(f"no tuning grid for {name}")
            spec, model, table = grid_search(spec, grid, split.train, folds=3, seed=args.seed)
            metrics.write_json(table, mdir / f"{name}.cv.json")
        else:
            model = fit(spec, split.train)
        timings[name] = {"fit_seconds": time.perf_counter() - t0}
        off = evaluate_offline(model, split.test)
        header = {"name": name, "scaler": scaler.to_dict(), "classes": classes.tolist(),
                  "feature_names": record.channel_names, "split_seed": args.seed}
        save_model(model, spec, mdir / f"{name}{ARTIFACT_SUFFIX}", header)
        metrics.write_json({"model": name, **vars(off), "test_samples": len(split.test)},
                           mdir / f"{name}.offline.json")
        print(f"{name}: offline accuracy {off.accuracy:.4f} ({timings[name]['fit_seconds']:.1f} s)")

    rows = [json.loads(p.read_text()) for p in sorted(mdir.glob("*.offline.json"))]
    write_table(rows, out / "phase1", args.format,
                ["model", "accuracy", "precision", "recall", "f1", "test_samples"])
    record_timing(out, "train", timings)
    update_manifest(out, seed=args.seed, models=names, tuned=tune,
                    train_config_sha256=_text_hash(cfg.text))
    return EXIT_OK


def _available_models(mdir: Path) -> list[str]:
    return sorted(p.name[: -len(ARTIFACT_SUFFIX)] for p in mdir.glob(f"*{ARTIFACT_SUFFIX}"))


def cmd_stream(args) -> int:
    out = Path(args.out)
    mdir = out / "models"
    available = _available_models(mdir)
    names = parse_models(args.models, default=available)
    missing = [n for n in names if n not in available]
    if missing:
        raise FileNotFoundError(f"no trained artifact for {missing} in {mdir}")
    if not names:
        raise FileNotFoundError(f"no trained models in {mdir}")

    record, truth = comtrade.load(out / "data" / "stream")
    n_cyc = args.n_cyc
    if n_cyc is None:
        n_cyc = StreamConfig.from_rates(record.sampling.sample_rate,
                                        record.sampling.line_frequency).n_cyc
    config = StreamConfig(n_cyc, args.tau)
    if args.batch_size < 1:
        raise ValidationError("--batch-size must be >= 1")
    targets = [out / "stream" / n / "trace.csv" for n in names]
    check_writable(targets, args.force)

    loaded = {}
    for name in names:
        model, spec, header = load_model(mdir / f"{name}{ARTIFACT_SUFFIX}")
        if model.n_features_ != record.data.shape[1]:
            raise ContractError(f"{name} expects {model.n_features_} features, "
                                f"stream record has {record.data.shape[1]}")
        loaded[name] = (model, header)

    latency = {}
    for name, (model, header) in loaded.items():
        X = Scaler.from_dict(header["scaler"]).transform(record.data)
        trace = run_stream(model, X, config, record.sampling.sample_rate,
                           batch_size=args.batch_size, classes=np.asarray(header["classes"]))
        sdir = out / "stream" / name
        sdir.mkdir(parents=True, exist_ok=True)
        trace.write_csv(sdir / "trace.csv")
        _write_confidence(trace, sdir / "confidence.csv")
        result = {"metadata": {**trace.metadata(name), "batch_size": args.batch_size,
                               "overall_accuracy_definition":
                                   "correct / classified decisions over all ground-truth labels"}}
        if truth is not None:
            order = np.argsort(trace.emit_index, kind="stable")
            pred = trace.class_id[order]
            sched = EventSchedule.from_labels(truth, record.sampling.sample_rate)
            sm = metrics.score_stream(pred, truth, sched, record.times)
            result["metrics"] = sm.as_row()
            # same figures without the edge-padded warm-up and tail decisions
            live = ~trace.padded[order]
            result["metrics_without_padding"] = metrics.score_stream(pred, truth, include=live).as_row()
            result["counts"] = {k: getattr(sm, k) for k in
                                ("total", "classified", "correct", "anomaly_classified", "anomaly_correct")}
            result["per_event"] = sm.per_event
            print(f"{name}: coverage {sm.coverage:.1f}%  overall {sm.overall_accuracy:.4f}  "
                  f"anomaly {sm.anomaly_accuracy:.4f}")
        metrics.write_json(result, sdir / "metrics.json")
        latency[name] = trace.latency_stats()
    record_timing(out, "stream_latency", latency)
    update_manifest(out, tau=config.tau, n_cyc=config.n_cyc, stream_models=names)
    return EXIT_OK


def _write_confidence(trace, path: Path) -> None:
    order = np.argsort(trace.emit_index, kind="stable")
    with open(path, "w") as fh:
        fh.write("time_s,confidence,class_id\n")
        for t, c, k in zip(trace.times[order].tolist(), trace.confidence[order].tolist(),
                           trace.class_id[order].tolist()):
            fh.write(f"{round(t, 9)!r},{c!r},{k}\n")


def cmd_report(args) -> int:
    out = Path(args.out)
    offline = {}
    for p in sorted((out / "models").glob("*.offline.json")):
        d = json.loads(p.read_text())
        offline[d["model"]] = d
    stream, meta, per_event = {}, {}, []
    for p in sorted((out / "stream").glob("*/metrics.json")):
        d = json.loads(p.read_text())
        name = p.parent.name
        meta[name] = d["metadata"]
        if "metrics" in d:
            stream[name] = d["metrics"]
            per_event += [{"model": name, **row} for row in d.get("per_event", [])]
    if not offline and not stream:
        raise FileNotFoundError(f"no phase outputs under {out}")

    rows = metrics.gap_report(offline, stream)
    for row in rows:
        m = meta.get(row["model"], {})
        row["tau"] = m.get("tau")
        row["n_cyc"] = m.get("n_cyc")
    columns = metrics.GAP_COLUMNS + ["tau", "n_cyc"]
    if args.format == "json":
        metrics.write_json({"metadata": {"models": sorted(meta), "stream": meta}, "rows": rows},
                           out / "report.json")
    else:
        metrics.write_csv(rows, out / "report.csv", columns)
    write_table(per_event, out / "per_event", args.format,
                ["model", "class_id", "start", "end", "samples", "detection_rate",
                 "classified_accuracy", "coverage"])
    update_manifest(out, report_format=args.format)
    for row in rows:
        print(f"{row['model']:>20}  acc={_show(row['accuracy'])}  cov={_show(row['coverage'])}  {row['flags']}")
    return EXIT_OK


def _show(v):
    return "-" if v is None else f"{v:.4f}"


def cmd_run(args) -> int:
    for step in (cmd_generate, cmd_train, cmd_stream, cmd_report):
        code = step(args)
        if code != EXIT_OK:
            return code
    return EXIT_OK


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridsentry", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="experiment directory")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        p.add_argument("--format", choices=("csv", "json"), default="csv", help="report table format")

    def gen_opts(p):
        p.add_argument("--config", help="key=value experiment config")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--duration", type=float, help="training record length in seconds")
        p.add_argument("--dat-format", choices=(comtrade.ASCII, comtrade.BINARY16), default=comtrade.ASCII)

    def train_opts(p, with_config=True):
        if with_config:
            p.add_argument("--config", help="key=value experiment config")
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--models", help="comma-separated suite names (default: all)")
        p.add_argument("--tune", help="comma-separated models to grid-search with 3-fold CV")

    def stream_opts(p, with_models=True):
        if with_models:
            p.add_argument("--models", help="comma-separated trained models (default: all found)")
        p.add_argument("--tau", type=float, default=0.6, help="confidence threshold")
        p.add_argument("--n-cyc", type=int, default=None, help="window length (default: one cycle)")
        p.add_argument("--batch-size", type=int, default=256,
                       help="samples per inference call; 1 times every sample individually")

    p = sub.add_parser("generate", help="synthesize training and streaming records")
    common(p)
    gen_opts(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit models and write the offline report")
    common(p)
    train_opts(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("stream", help="replay the streaming record through trained models")
    common(p)
    stream_opts(p)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("report", help="merge both phases into the gap report")
    common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="generate, train, stream and report in one go")
    common(p)
    gen_opts(p)
    train_opts(p, with_config=False)
    stream_opts(p, with_models=False)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        return _fail(EXIT_VALIDATION, "validation error", exc)
    except (ComtradeError, OSError) as exc:
        return _fail(EXIT_IO, "I/O error", exc)
    except (ContractError, EmptyDatasetError) as exc:
        return _fail(EXIT_CONTRACT, "contract violation", exc)


def _fail(code: int, kind: str, exc: Exception) -> int:
    print(f"gridsentry: {kind}: {exc}", file=sys.stderr)
    return code

if __name__ == "__main__":
    sys.exit(main())
