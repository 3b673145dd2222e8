import json
import math

import pytest

from rwrp.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_oracle_hand_value(capsys):
    code, out, _ = run_cli(capsys, "oracle", "--d", "1", "--N", "1", "--y", "1", "--r", "0.5")
    assert code == 0
    doc = json.loads(out)
    assert doc["result"]["b"] == pytest.approx(0.9099, abs=5e-5)
    assert len(doc["result"]["environments"]) == 4
    assert doc["version"]


def test_missing_flag_is_validation_error(capsys):
    code, _, err = run_cli(capsys, "cost", "--d", "1", "--N", "1")
    assert code == 1
    msg = json.loads(err)
    assert msg["error"] == "ValidationError"
    assert "y" in msg["message"]


def test_bad_estimator(capsys):
    code, _, err = run_cli(capsys, "cost", "--d", "1", "--N", "1", "--y", "1",
                           "--r", "0.5", "--estimator", "nope")
    assert code == 1
    assert "estimator" in json.loads(err)["message"]


def test_cost_deterministic(capsys, tmp_path):
    args = ("cost", "--d", "1", "--N", "2", "--y", "2", "--r", "0.5",
            "--estimator", "env-mc", "--replicates", "200", "--seed", "7")
    outs = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        code, _, _ = run_cli(capsys, *args, "--out", str(path), "--format", "csv")
        assert code == 0
        outs.append(path.read_text())
    assert outs[0] == outs[1]


def test_csv_embeds_config(capsys, tmp_path):
    path = tmp_path / "out.csv"
    code, _, _ = run_cli(capsys, "russo", "--d", "1", "--N", "1", "--y", "1",
                         "--r", "0.3", "--format", "csv", "--out", str(path))
    assert code == 0
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# version:")
    cfg = json.loads(lines[1].split("# config: ")[1])
    assert cfg["r"] == 0.3
    assert lines[2] == "r,analytic,flip_sum,rel_gap"


def test_config_file_with_flag_override(capsys, tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"d": 1, "N": 1, "y": "1", "r": 0.5}))
    code, out, _ = run_cli(capsys, "russo", "--config", str(cfg_path), "--r", "0.8")
    assert code == 0
    doc = json.loads(out)
    assert doc["config"]["r"] == 0.8  # flag wins
    assert doc["config"]["N"] == 1


def test_solve_writes_dump(capsys, tmp_path):
    path = tmp_path / "field.dump"
    code, out, _ = run_cli(capsys, "solve", "--d", "1", "--N", "1", "--y", "1",
                           "--r", "0.5", "--seed", "3", "--out", str(path))
    assert code == 0
    lines = path.read_text().splitlines()
    assert lines[-1].startswith("log_scale ")
    assert len(lines) == 4  # 3 sites + footer
    summary = json.loads(out)
    assert summary["result"]["residual"] <= 1e-12


def test_rate_json(capsys):
    code, out, _ = run_cli(capsys, "rate", "--d", "1", "--r", "0.5", "--x", "0.5")
    assert code == 0
    doc = json.loads(out)
    assert doc["result"]["value"] > 0
    assert doc["result"]["evaluations"] <= 60


def test_bounds_csv_columns(capsys):
    code, out, _ = run_cli(capsys, "bounds", "--d", "1", "--p", "0.3", "--q", "0.7",
                           "--format", "csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[2] == "bound_id,p,q,x,measured,bound,margin,stderr,verdict"
    verdicts = [line.split(",")[-1] for line in lines[3:]]
    assert all(v == "PASS" for v in verdicts)


def test_lyapunov_csv(capsys):
    code, out, _ = run_cli(capsys, "lyapunov", "--d", "1", "--r", "0.5",
                           "--direction", "1", "--n-list", "1,2",
                           "--replicates", "30", "--format", "csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[2] == "kind,d,r,lambda,x,n,N,value,std_error"
    assert len(lines) == 5


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    capsys.readouterr()


def test_unknown_command(capsys):
    assert main(["frobnicate"]) == 1
    capsys.readouterr()
