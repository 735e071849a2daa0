import csv
import json

import pytest

from gridsentry.cli import main, parse_experiment_config
from gridsentry.errors import ValidationError

SMALL = """\
[train]
duration=3
1, 0.5, 0.9
4, 1.2, 1.6
16, 2.0, 2.4
[stream]
duration=1.5
1, 0.3, 0.5
16, 0.9, 1.1
[models]
mlp_2h.epochs=5
random_forest.n_estimators=5
"""

MODELS = "gaussian_nb,random_forest,mlp_2h"


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text(SMALL)
    return str(p)


def run(out, cfg, *extra):
    return main(["run", "--out", str(out), "--config", cfg, "--models", MODELS, "--seed", "1", *extra])


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = base / "exp.cfg"
    cfg.write_text(SMALL)
    out = base / "a"
    assert run(out, str(cfg)) == 0
    return base, cfg, out


def test_layout(small_run):
    _, _, out = small_run
    data = sorted(p.name for p in (out / "data").iterdir())
    assert data == ["stream.cfg", "stream.dat", "stream.labels.csv",
                    "train.cfg", "train.dat", "train.labels.csv"]
    assert sorted(p.name for p in (out / "models").glob("*.gsm")) == [
        "gaussian_nb.gsm", "mlp_2h.gsm", "random_forest.gsm"]
    for name in MODELS.split(","):
        assert (out / "stream" / name / "trace.csv").exists()
    rows = list(csv.DictReader(open(out / "report.csv")))
    assert [r["model"] for r in rows] == sorted(MODELS.split(","))
    assert {r["tau"] for r in rows} == {"0.6"} and {r["n_cyc"] for r in rows} == {"80"}


def test_manifest_lists_every_file(small_run):
    _, _, out = small_run
    m = manifest(out)
    files = {str(p.relative_to(out)) for p in out.rglob("*") if p.is_file()}
    hashed = set(m["artifacts"])
    assert hashed == {f for f in files if not f.startswith("timings/") and f != "manifest.json"}
    assert m["inputs"]["seed"] == 1


def test_seeded_rerun_is_byte_identical(small_run):
    base, cfg, out = small_run
    again = base / "b"
    assert run(again, str(cfg)) == 0
    assert manifest(again)["artifacts"] == manifest(out)["artifacts"]
    assert (again / "report.csv").read_bytes() == (out / "report.csv").read_bytes()


def test_stream_metrics_json(small_run):
    _, _, out = small_run
    d = json.loads((out / "stream" / "gaussian_nb" / "metrics.json").read_text())
    assert d["metadata"]["decisions"] == 7200
    assert d["metadata"]["lag_samples"] == 40
    assert "classified" in d["metadata"]["overall_accuracy_definition"]
    assert len(d["per_event"]) == 2
    assert d["counts"]["total"] == 7200
    assert set(d["metrics_without_padding"]) == {"overall_accuracy", "anomaly_accuracy", "coverage"}
    head = (out / "stream" / "gaussian_nb" / "confidence.csv").read_text().splitlines()[0]
    assert head == "time_s,confidence,class_id"


def test_refuses_overwrite_then_force(small_run, capsys):
    _, cfg, out = small_run
    assert main(["train", "--out", str(out), "--config", str(cfg), "--models", "gaussian_nb"]) == 3
    assert main(["train", "--out", str(out), "--config", str(cfg), "--models", "gaussian_nb",
                 "--seed", "1", "--force"]) == 0


def test_tau_zero_full_coverage(small_run):
    _, _, out = small_run
    assert main(["stream", "--out", str(out), "--models", "gaussian_nb", "--tau", "0", "--force"]) == 0
    d = json.loads((out / "stream" / "gaussian_nb" / "metrics.json").read_text())
    assert d["metrics"]["coverage"] == 100.0
    assert main(["stream", "--out", str(out), "--models", "gaussian_nb", "--force"]) == 0


def test_report_json_and_stream_missing(small_run, tmp_path):
    _, _, out = small_run
    assert main(["report", "--out", str(out), "--format", "json", "--force"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["metadata"]["stream"]["mlp_2h"]["tau"] == 0.6
    # drop one model's streaming output
    import shutil

    part = tmp_path / "partial"
    shutil.copytree(out, part)
    shutil.rmtree(part / "stream" / "mlp_2h")
    assert main(["report", "--out", str(part), "--force"]) == 0
    rows = {r["model"]: r for r in csv.DictReader(open(part / "report.csv"))}
    assert rows["mlp_2h"]["flags"] == "stream-missing"
    assert rows["gaussian_nb"]["flags"] != "stream-missing"


def test_tune_writes_cv_table(small_run):
    _, cfg, out = small_run
    assert main(["train", "--out", str(out), "--config", str(cfg), "--models", "knn",
                 "--tune", "knn", "--seed", "1"]) == 0
    table = json.loads((out / "models" / "knn.cv.json").read_text())
    assert len(table) == 5 and all(len(r["fold_accuracy"]) == 3 for r in table)


@pytest.mark.parametrize("argv,code", [
    (["stream", "--tau", "1.01"], 2),
    (["train", "--models", "svm"], 2),
    (["stream", "--n-cyc", "1"], 2),
])
def test_validation_exit_codes(small_run, argv, code):
    _, _, out = small_run
    assert main([argv[0], "--out", str(out), *argv[1:], "--force"]) == code


def test_generate_duration_conflict(tmp_path):
    # the default training schedule has events after 2 s
    assert main(["generate", "--out", str(tmp_path / "x"), "--duration", "2"]) == 2
    assert not (tmp_path / "x").exists()


def test_missing_inputs_are_io_errors(tmp_path):
    assert main(["report", "--out", str(tmp_path / "nothing")]) == 3
    assert main(["train", "--out", str(tmp_path / "nothing"), "--models", "gaussian_nb"]) == 3


def test_width_mismatch_is_contract_error(small_run, tmp_path):
    import shutil

    from gridsentry import comtrade

    _, _, out = small_run
    part = tmp_path / "narrow"
    shutil.copytree(out, part)
    rec, lab = comtrade.load(part / "data" / "stream")
    rec.channels = rec.channels[:5]
    rec.data = rec.data[:, :5]
    comtrade.save(rec, part / "data" / "stream", comtrade.ASCII, lab)
    assert main(["stream", "--out", str(part), "--models", "gaussian_nb", "--force"]) == 4


def test_default_run_emits_full_stream(tmp_path):
    out = tmp_path / "d"
    assert main(["generate", "--out", str(out), "--seed", "7"]) == 0
    first = manifest(out)["artifacts"]
    assert len(first) == 6
    assert main(["generate", "--out", str(tmp_path / "e"), "--seed", "7"]) == 0
    assert manifest(tmp_path / "e")["artifacts"] == first
    assert main(["train", "--out", str(out), "--models", "gaussian_nb"]) == 0
    assert main(["stream", "--out", str(out), "--models", "gaussian_nb"]) == 0
    d = json.loads((out / "stream" / "gaussian_nb" / "metrics.json").read_text())
    assert d["metadata"]["decisions"] == 28_800 and d["metadata"]["n_cyc"] == 80
    assert len((out / "stream" / "gaussian_nb" / "trace.csv").read_text().splitlines()) == 28_801


def test_config_parsing():
    cfg = parse_experiment_config(SMALL)
    assert cfg.model_overrides == {"mlp_2h": {"epochs": 5}, "random_forest": {"n_estimators": 5}}
    assert cfg.train.duration == 3.0 and len(cfg.stream.events) == 2
    with pytest.raises(ValidationError):
        parse_experiment_config("1, 0.5, 0.7\n")
    with pytest.raises(ValidationError):
        parse_experiment_config("[bogus]\nx=1\n")
    with pytest.raises(ValidationError):
        parse_experiment_config("[models]\nmlp_2h=3\n")
