import csv
import json
import math

import pytest

from targetaug import cli, experiment
from targetaug.config import ABLATIONS, ExperimentConfig, MetricsReport
from targetaug.seqmodel import SeqModel

TINY_TOYMOL = {
    "name": "tiny", "domain": "toymol", "seed": 3,
    "model": {"order": 2, "shared_weight": 0.3},
    "augment": {"K": 2, "C": 20, "n1": 1, "n2": 2},
    "data": {"n_pairs": 30, "n_test": 8},
    "eval": {"Z": 3, "L": 3, "n_uniqueness": 200},
    "ideal_c": 40,
}
TINY_GRID = {
    "name": "tiny-grid", "domain": "gridlang", "seed": 3,
    "model": {"order": 2, "max_len": 30},
    "augment": {"K": 2, "C": 8, "n1": 1, "n2": 1},
    "data": {"n_pairs": 15, "n_test": 6},
    "eval": {"L": 3},
}


def write_cfg(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def tiny(**over):
    obj = {**TINY_TOYMOL, **over}
    return ExperimentConfig.from_dict(obj)


# -- config -------------------------------------------------------------------------


def test_config_roundtrip(tmp_path):
    cfg = tiny()
    cfg.save(tmp_path / "c.json")
    back = ExperimentConfig.load(tmp_path / "c.json")
    assert back == cfg
    assert back.augment.Z == 3 and back.augment.L == 3  # prediction settings follow the eval section


@pytest.mark.parametrize("obj,msg", [
    ({"bogus": 1}, "unknown keys"),
    ({"model": {"nope": 1}}, "unknown keys"),
    ({"domain": "chess"}, "domain"),
    ({"mode": "unconditional", "data": {"transductive": True}}, "transductive"),
    ({"domain": "gridlang", "mode": "unconditional"}, "conditional only"),
    ({"ablation": "everything"}, "ablation"),
    ({"augment": {"K": 5, "C": 2}}, "K <= C"),
])
def test_config_validation(obj, msg):
    with pytest.raises(ValueError, match=msg):
        ExperimentConfig.from_dict(obj)


def test_featurizer_defaults():
    assert ExperimentConfig().featurizer == "toymol"
    assert ExperimentConfig(mode="unconditional").featurizer == "const"
    assert ExperimentConfig.from_dict({"domain": "gridlang"}).featurizer == "gridlang"


def test_shipped_configs_load():
    from pathlib import Path
    paths = sorted(Path(__file__).resolve().parent.parent.joinpath("configs").glob("*.json"))
    assert paths
    for p in paths:
        ExperimentConfig.load(p)


def test_report_checks_fractions(tmp_path):
    with pytest.raises(ValueError):
        MetricsReport({}, 0, {"success": 1.5})
    r = MetricsReport({"a": 1}, 0, {"success": 0.5, "loss": 3.0})
    r.save(tmp_path / "r.json")
    assert MetricsReport.load(tmp_path / "r.json") == r


# -- theory ---------------------------------------------------------------------------


def test_theory_prop1_example(tmp_path, capsys):
    code = cli.main(["theory", "prop1", "--lam", "1", "--alpha0", "0.1", "--eps", "0.01", "--out-dir", str(tmp_path)])
    assert code == 0
    assert json.loads(capsys.readouterr().out) == {"checked": 1, "violations": 0}
    rows = list(csv.DictReader(open(tmp_path / "prop1_sweep.csv")))
    assert len(rows) == 1
    # -log(0.01 * 0.1) = 6.91 rounds up to 7
    assert math.ceil(float(rows[0]["t_bound"])) == 7
    alpha = {int(r["t"]): float(r["alpha"]) for r in csv.DictReader(open(tmp_path / "alpha_lam1_a0.1.csv"))}
    assert all(alpha[t] >= 0.99 for t in alpha if t >= 7)


def test_theory_gaussian_rows(tmp_path, capsys):
    assert cli.main(["theory", "gaussian", "--T", "10", "--out-dir", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out == {"rows": 11, "increasing": True, "beats_direct_projection": True}
    assert len(list(csv.DictReader(open(tmp_path / "gaussian.csv")))) == 11


# -- gen-data -----------------------------------------------------------------------------


def test_gen_data_reproducible(tmp_path):
    cfg = write_cfg(tmp_path, {**TINY_TOYMOL, "data": {"n_pairs": 20, "n_unlabeled": 5, "n_test": 4}})
    for d in ("a", "b"):
        assert cli.main(["gen-data", "--config", cfg, "--out-dir", str(tmp_path / d)]) == 0
    for f in ("train.jsonl", "unlabeled.jsonl", "test.jsonl", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    m = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert m["counts"] == {"train": 20, "unlabeled": 5, "test": 4}


def test_gen_data_gridlang_counts(tmp_path):
    cfg = write_cfg(tmp_path, TINY_GRID)
    assert cli.main(["gen-data", "--config", cfg, "--out-dir", str(tmp_path / "g")]) == 0
    m = json.loads((tmp_path / "g" / "manifest.json").read_text())
    assert m["counts"] == {"train": 15, "test": 6, "given_per_task": 5, "heldout_per_task": 1}


def test_gen_data_empty(tmp_path):
    cfg = write_cfg(tmp_path, {**TINY_TOYMOL, "data": {"n_pairs": 0, "n_test": 0}})
    assert cli.main(["gen-data", "--config", cfg, "--out-dir", str(tmp_path / "e")]) == 0
    assert (tmp_path / "e" / "train.jsonl").read_text() == ""


def test_train_from_generated_files(tmp_path):
    cfg = write_cfg(tmp_path, TINY_TOYMOL)
    cli.main(["gen-data", "--config", cfg, "--out-dir", str(tmp_path / "d")])
    obj = {**TINY_TOYMOL, "data": {"labeled_path": str(tmp_path / "d" / "train.jsonl"),
                                   "test_path": str(tmp_path / "d" / "test.jsonl")}}
    from_files = experiment.run(ExperimentConfig.from_dict(obj))
    in_memory = experiment.run(tiny())
    assert from_files.metrics == in_memory.metrics


# -- train / eval / exit codes ---------------------------------------------------------------


def test_train_then_eval(tmp_path, capsys):
    cfg = write_cfg(tmp_path, TINY_TOYMOL)
    assert cli.main(["train", "--config", cfg, "--out-dir", str(tmp_path / "run")]) == 0
    metrics = json.loads(capsys.readouterr().out)
    report = MetricsReport.load(tmp_path / "run" / "report.json")
    assert report.metrics == metrics and report.config == tiny().to_dict() and report.version
    rows = list(csv.DictReader(open(tmp_path / "run" / "epochs.csv")))
    assert [r["phase"] for r in rows] == ["bootstrap", "augment", "augment"]
    SeqModel.load(tmp_path / "run" / "model.jsonl")
    assert cli.main(["eval", "--config", cfg, "--model", str(tmp_path / "run" / "model.jsonl"),
                     "--out-dir", str(tmp_path / "ev")]) == 0
    assert json.loads(capsys.readouterr().out) == metrics


def test_repeats_average(tmp_path):
    cfg = write_cfg(tmp_path, TINY_TOYMOL)
    assert cli.main(["train", "--config", cfg, "--repeats", "2", "--out-dir", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "model.r1.jsonl").exists()
    rep = MetricsReport.load(tmp_path / "r" / "report.json")
    assert {e["repeat"] for e in rep.epochs} == {0, 1}


def test_operational_error_exit_one(tmp_path):
    assert cli.main(["train", "--config", str(tmp_path / "missing.json")]) == 1
    bad = write_cfg(tmp_path, {"bogus": True})
    assert cli.main(["train", "--config", bad]) == 1


def test_property_violation_exit_two(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise experiment.PropertyViolation("pass rate out of range")

    monkeypatch.setattr(experiment, "run", boom)
    assert cli.main(["train", "--config", write_cfg(tmp_path, TINY_TOYMOL)]) == 2


def test_proxy_shape_violation_exit_two(tmp_path, monkeypatch):
    rows = [{"rung": "oracle", "proxy_rmse": 0.0, "success": 0.5},
            {"rung": "base", "proxy_rmse": 0.1, "success": 0.7}]
    monkeypatch.setattr(experiment, "run_sweep", lambda *a, **k: rows)
    assert cli.main(["sweep", "--sweep", "proxy", "--config", write_cfg(tmp_path, TINY_TOYMOL)]) == 2


def test_proxy_shape_rule():
    ok = [{"proxy_rmse": 0.0, "success": 0.8}, {"proxy_rmse": 0.05, "success": 0.78},
          {"proxy_rmse": 0.2, "success": 0.6}, {"proxy_rmse": 0.3, "success": 0.6}]
    assert experiment.proxy_shape_ok(ok)
    assert not experiment.proxy_shape_ok(ok[:2] + [{"proxy_rmse": 0.2, "success": 0.9}])
    assert not experiment.proxy_shape_ok([{"proxy_rmse": 0.0, "success": 0.9}, {"proxy_rmse": 0.1, "success": 0.8}])


def test_k_sweep_writes_csv(tmp_path):
    obj = {**TINY_TOYMOL, "sweep": {"K": [1, 2]}}
    rows = experiment.run_sweep(ExperimentConfig.from_dict(obj), "K", out_dir=tmp_path)
    assert [r["rung"] for r in rows] == ["K=1", "K=2"]
    assert len(list(csv.DictReader(open(tmp_path / "sweep_K.csv")))) == 2


# -- one tiny run per ablation ------------------------------------------------------------


@pytest.fixture(scope="module")
def ablation_runs():
    return {ab: experiment.run(tiny(ablation=ab)) for ab in ABLATIONS}


def phases(rep):
    return [e["phase"] for e in rep.epochs]


def test_every_ablation_runs(ablation_runs):
    assert set(ablation_runs) == set(ABLATIONS)
    for ab, rep in ablation_runs.items():
        assert 0.0 <= rep.metrics["success"] <= 1.0, ab
        assert rep.config["ablation"] == ab


def test_ablation_semantics(ablation_runs):
    r = ablation_runs
    assert phases(r["baseline"]) == phases(r["test_only"]) == ["bootstrap"]
    assert phases(r["full"]) == phases(r["train_only"]) == ["bootstrap", "augment", "augment"]
    # same training, different decoding
    assert r["train_only"].epochs == r["full"].epochs
    assert r["baseline"].epochs == r["test_only"].epochs
    assert all(e["pass_rate"] == 1.0 for e in r["no_filter"].epochs if e["phase"] == "augment")
    assert r["dupe"].epochs != r["full"].epochs
    keep = [e["train_size"] for e in r["keep_targets"].epochs]
    assert keep[2] > keep[1]
    assert phases(r["ideal"]) and set(phases(r["ideal"])) <= {"bootstrap", "augment", "ideal"}


def test_unconditional_and_gridlang_tiny_runs():
    u = experiment.run(tiny(mode="unconditional", augment={"K": 2, "C": 20, "n1": 1, "n2": 1,
                                                           "keep_gold_after_bootstrap": False}))
    assert set(u.metrics) == {"success", "uniqueness"}
    g = experiment.run(ExperimentConfig.from_dict(TINY_GRID))
    assert set(g.metrics) == {"top1"}
