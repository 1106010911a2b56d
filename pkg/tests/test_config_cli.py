import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from robust_nas.cli import main
from robust_nas.config import ConfigError, load_data, parse_config
from robust_nas.supernet import Genotype

SMOKE = {"search": {"steps": 50, "eta_alpha": 3.0}, "retrain": {"steps": 100}}


def write(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("smoke")
    cfg = write(root / "cfg.json", SMOKE)
    assert main(["search", "--config", cfg, "--out", str(root / "a")]) == 0
    assert main(["search", "--config", cfg, "--out", str(root / "b")]) == 0
    return root, cfg


def test_defaults_synthetic():
    cfg = parse_config({})
    assert cfg.mode == "synthetic"
    assert cfg.space.width == 2 and cfg.space.nodes == 5
    assert cfg.attack.epsilon == 0.1 and cfg.attack.xi == pytest.approx(0.125)
    assert cfg.resource.unit == "raw-count" and cfg.resource.lower_bound == 6.0
    sc = cfg.search_config()
    assert (sc.momentum, sc.weight_decay, sc.eta_theta, sc.eta_alpha, sc.steps) == (0.9, 3e-4, 0.025, 3e-4, 2000)
    assert sc.eval_attack.steps == 10 and sc.eval_attack.xi == pytest.approx(0.25)


def test_defaults_image():
    cfg = parse_config({"mode": "image", "data": {"path": "x.csv"}, "space": {"width": 4}})
    assert cfg.attack.epsilon == 2 / 255 and cfg.attack.xi == pytest.approx(1.25 * 2 / 255)
    assert cfg.attack.input_range == [0.0, 1.0]
    assert cfg.resource.unit == "megabytes" and cfg.resource.lower_bound == 1.0


@pytest.mark.parametrize("doc,match", [
    ({"search": {"stepz": 1}}, "stepz"),
    ({"extra": {}}, "extra"),
    ({"search": {"steps": "ten"}}, "integer"),
    ({"search": {"use_adv": 1}}, "boolean"),
    ({"mode": "video"}, "mode"),
    ({"space": {"ops": ["zero", "conv"]}}, "conv"),
    ({"search": {"eta_alpha": -1.0}}, "eta_alpha"),
    ({"resource": {"unit": "kb"}}, "unit"),
])
def test_strict_config(doc, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(doc)


def test_null_means_default():
    assert parse_config({"search": {"steps": None}}).search.steps == 2000


def test_csv_width_is_inferred(tmp_path):
    p = tmp_path / "d.csv"
    rows = "\n".join(f"{i},{-i},{i % 3},{i % 2}" for i in range(12))
    p.write_text("a,b,c,label\n" + rows + "\n", encoding="utf-8")
    cfg = parse_config({"data": {"path": str(p)}})
    splits = load_data(cfg)
    assert cfg.space.width == 3 and cfg.resource.lower_bound == 12.0
    assert len(splits.train) == 6 and splits.test is splits.val


def test_search_writes_run_directory(smoke_run):
    root, _ = smoke_run
    run = root / "a"
    assert sorted(p.name for p in run.iterdir()) == ["alpha.json", "genotype.json", "resolved-config.json", "runlog.jsonl"]
    recs = [json.loads(line) for line in (run / "runlog.jsonl").read_text().splitlines()]
    assert len(recs) == 50 and [r["t"] for r in recs] == list(range(50))
    Genotype.from_dict(json.loads((run / "genotype.json").read_text()))


def test_search_is_byte_deterministic(smoke_run):
    root, _ = smoke_run
    for name in ("genotype.json", "runlog.jsonl", "alpha.json", "resolved-config.json"):
        assert (root / "a" / name).read_bytes() == (root / "b" / name).read_bytes()


def test_resolved_config_replays(smoke_run):
    root, _ = smoke_run
    assert main(["search", "--config", str(root / "a" / "resolved-config.json"), "--out", str(root / "replay")]) == 0
    for name in ("genotype.json", "runlog.jsonl"):
        assert (root / "replay" / name).read_bytes() == (root / "a" / name).read_bytes()


def test_no_mgda_flag(tmp_path):
    cfg = write(tmp_path / "c.json", {"search": {"steps": 10}})
    assert main(["search", "--config", cfg, "--out", str(tmp_path / "r"), "--no-mgda"]) == 0
    recs = [json.loads(line) for line in (tmp_path / "r" / "runlog.jsonl").read_text().splitlines()]
    assert all(r["gamma"] == 0.5 for r in recs)
    resolved = json.loads((tmp_path / "r" / "resolved-config.json").read_text())
    assert resolved["search"]["use_mgda"] is False


def test_seed_override(tmp_path):
    cfg = write(tmp_path / "c.json", {"search": {"steps": 3}})
    main(["search", "--config", cfg, "--out", str(tmp_path / "s0")])
    main(["search", "--config", cfg, "--out", str(tmp_path / "s5"), "--seed", "5"])
    assert json.loads((tmp_path / "s5" / "resolved-config.json").read_text())["search"]["seed"] == 5
    assert (tmp_path / "s0" / "runlog.jsonl").read_bytes() != (tmp_path / "s5" / "runlog.jsonl").read_bytes()


def test_eval_and_attack(smoke_run, capsys, tmp_path):
    root, cfg = smoke_run
    capsys.readouterr()
    assert main(["eval", "--config", cfg, "--genotype", str(root / "a" / "genotype.json"), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr()
    report = json.loads(out.out)
    assert set(report) == {"clean_err", "param_count", "robust_acc"}
    assert "classifier head" in out.err
    assert main(["attack", "--config", cfg, "--genotype", str(root / "a" / "genotype.json"),
                 "--weights", str(tmp_path / "weights.json")]) == 0
    attack = json.loads(capsys.readouterr().out)
    assert attack["robust_acc"] == report["robust_acc"]
    assert 1 - attack["clean_acc"] == report["clean_err"]
    assert attack["steps"] == 10


def test_eval_zero_epsilon_and_identity_genotype(tmp_path, capsys):
    doc = {"attack": {"epsilon": 0.0}, "retrain": {"steps": 30}}
    cfg = write(tmp_path / "c.json", doc)
    space = parse_config(doc).search_space()
    g = Genotype(space, ("identity",) * space.num_edges)
    geno = tmp_path / "g.json"
    geno.write_text(g.to_json())
    assert main(["eval", "--config", cfg, "--genotype", str(geno)]) == 0
    out = capsys.readouterr()
    report = json.loads(out.out)
    assert report["param_count"] == 0
    assert report["robust_acc"] == 1 - report["clean_err"]
    assert "parameters (not counted in param_count): 10" in out.err


def test_eval_space_mismatch(smoke_run, tmp_path, capsys):
    root, _ = smoke_run
    cfg = write(tmp_path / "c.json", {"space": {"nodes": 4}})
    assert main(["eval", "--config", cfg, "--genotype", str(root / "a" / "genotype.json")]) == 2
    assert "does not match" in capsys.readouterr().err


def test_export(smoke_run, capsys, tmp_path):
    root, _ = smoke_run
    run = root / "a"
    capsys.readouterr()
    assert main(["export", "--run", str(run), "--csv", str(tmp_path / "log.csv")]) == 0
    assert capsys.readouterr().out == (run / "genotype.json").read_text()
    with open(tmp_path / "log.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 50 and float(rows[3]["l_val"]) == json.loads((run / "runlog.jsonl").read_text().splitlines()[3])["l_val"]
    assert main(["export", "--run", str(run), "--exclude-zero"]) == 0
    assert "zero" not in [e["op"] for e in json.loads(capsys.readouterr().out)["edges"]]


def test_exit_codes(tmp_path, capsys):
    assert main(["search", "--config", write(tmp_path / "bad.json", {"search": {"stepz": 1}}), "--out", str(tmp_path / "x")]) == 2
    assert "stepz" in capsys.readouterr().err
    assert main(["search", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "x")]) == 2
    nan = write(tmp_path / "nan.json", {"search": {"steps": 5, "eta_theta": 1e200}})
    with np.errstate(all="ignore"):
        assert main(["search", "--config", nan, "--out", str(tmp_path / "n")]) == 3
    assert "step 0" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["search"])
    assert exc.value.code == 2


def test_gradcheck_command():
    ok = subprocess.run([sys.executable, "-m", "robust_nas.cli", "gradcheck"], capture_output=True, text=True)
    assert ok.returncode == 0, ok.stdout + ok.stderr
    assert ok.stdout.count("PASS") == 6
    bad = subprocess.run([sys.executable, "-m", "robust_nas.cli", "gradcheck", "--tol", "1e-15"],
                         capture_output=True, text=True)
    assert bad.returncode == 1
    assert bad.stdout.count("FAIL") == 6 and "checks failed" in bad.stderr
