import json
import subprocess
import sys

import pytest

from dynet.cli import main


@pytest.fixture
def case_dir(tmp_path):
    out = tmp_path / "case"
    assert main(["generate", "--p", "4", "--density", "0.25", "--n-samples", "150",
                 "--seed", "3", "--out", str(out)]) == 0
    return out


def test_generate_writes_case(case_dir):
    manifest = json.loads((case_dir / "case.json").read_text())
    assert manifest["schema"] == "dynet/v1" and manifest["type"] == "case"
    assert len(manifest["experiments"]) == 2
    for f in ("truth.json", "model1.json", "model2.json", "exp1.csv", "exp2.csv"):
        assert (case_dir / f).is_file()
    header = (case_dir / "exp1.csv").read_text().splitlines()[0]
    assert header == "t,y1,y2,y3,y4,u1,u2,u3,u4"


def test_metrics_identical(case_dir, capsys):
    truth = str(case_dir / "truth.json")
    assert main(["metrics", truth, truth]) == 0
    assert capsys.readouterr().out.strip() == "Prec=1.0 TPR=1.0"


def test_reconstruct_then_score(case_dir, tmp_path, capsys):
    out = tmp_path / "rec"
    code = main(["reconstruct", str(case_dir / "exp1.csv"), str(case_dir / "exp2.csv"),
                 "--method", "gsbl", "--out", str(out)])
    assert code == 0
    result = json.loads((out / "result.json").read_text())
    assert result["consistent"] and result["method"] == "gsbl"
    assert main(["metrics", str(case_dir / "truth.json"), str(out / "network.json")]) == 0
    assert capsys.readouterr().out.strip().splitlines()[-1].startswith("Prec=")


def test_reconstruct_missing_file(tmp_path, capsys):
    assert main(["reconstruct", str(tmp_path / "nope.csv")]) == 1
    assert "no such file" in capsys.readouterr().err


def test_reconstruct_malformed_csv(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,y1\n0,1\n1,x\n")
    assert main(["reconstruct", str(bad)]) == 1
    assert "bad.csv:3" in capsys.readouterr().err


def test_bad_flag():
    assert main(["metrics", "--frobnicate"]) == 1


def test_no_command(capsys):
    assert main([]) == 1


def test_simulate_model(case_dir, tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", str(case_dir / "model1.json"), "--n-samples", "40", "--snr", "20",
                 "--out", str(out), "--name", "run.csv"]) == 0
    assert len((out / "run.csv").read_text().splitlines()) == 41


def test_simulate_with_input_file(case_dir, tmp_path):
    u = tmp_path / "u.csv"
    u.write_text("u1,u2,u3,u4\n" + "\n".join("1,0,0,0" for _ in range(10)) + "\n")
    assert main(["simulate", str(case_dir / "model1.json"), "--input", str(u),
                 "--out", str(tmp_path)]) == 0
    u.write_text("u1\n1\n")
    assert main(["simulate", str(case_dir / "model1.json"), "--input", str(u),
                 "--out", str(tmp_path)]) == 1


def test_config_file_with_override(tmp_path):
    conf = tmp_path / "bench.json"
    conf.write_text(json.dumps({"methods": ["girl1"], "trials": 3, "nodes": [4],
                                "density": 0.25, "n_samples": 80, "seed": 5}))
    out = tmp_path / "bench"
    assert main(["benchmark", "--config", str(conf), "--trials", "1", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["trials"] == 1
    assert report["config"]["seed"] == 5
    assert (out / "trials.csv").read_text().startswith("p,snr_db,trial")


def test_config_unknown_key(tmp_path):
    conf = tmp_path / "bench.json"
    conf.write_text(json.dumps({"trails": 3}))
    assert main(["benchmark", "--config", str(conf)]) == 1


def test_config_malformed_json(tmp_path, capsys):
    conf = tmp_path / "bench.json"
    conf.write_text("{\"trials\": 3,,}")
    assert main(["benchmark", "--config", str(conf)]) == 1
    assert "bench.json:1:" in capsys.readouterr().err


def test_module_entry_point(case_dir):
    truth = str(case_dir / "truth.json")
    proc = subprocess.run([sys.executable, "-m", "dynet", "metrics", truth, truth],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "Prec=1.0 TPR=1.0"
