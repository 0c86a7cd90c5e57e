import json
import os
import socket
import subprocess
import sys
import threading

import pytest

from aimassist import cli
from aimassist.cli import main


def run_main(argv, capsys=None):
    return main(argv)


def test_help_all_subcommands_exit_zero(capsys):
    for argv in (["--help"], ["run", "--help"], ["calibrate", "--help"],
                 ["train", "--help"], ["serve", "--help"], ["report", "--help"]):
        with pytest.raises(SystemExit) as e:
            main(argv)
        assert e.value.code == 0
        out = capsys.readouterr().out
        assert "--" in out


def test_run_writes_outputs(tmp_path, capsys):
    out = str(tmp_path / "o")
    code = main(["run", "--mode", "select", "--agent", "mouse",
                 "--assist", "none", "--trials", "10", "--seed", "7",
                 "--out", out])
    assert code == 0
    text = capsys.readouterr().out
    assert "Success" in text
    assert os.path.exists(os.path.join(out, "records.csv"))
    assert os.path.exists(os.path.join(out, "summary.json"))
    summary = json.load(open(os.path.join(out, "summary.json")))
    assert summary["mode"] == "select"


def test_run_mouse_select_near_full_success(tmp_path, capsys):
    out = str(tmp_path / "o")
    code = main(["run", "--mode", "select", "--agent", "mouse",
                 "--assist", "none", "--trials", "200", "--seed", "7",
                 "--out", out])
    assert code == 0
    summary = json.load(open(os.path.join(out, "summary.json")))
    cell = summary["cells"]["None|mouse"]
    assert cell["success_pct"] >= 95.0


def test_run_reproducible_bytes(tmp_path, capsys):
    outs = []
    for sub in ("a", "b"):
        out = str(tmp_path / sub)
        assert main(["run", "--mode", "locate", "--agent", "head",
                     "--assist", "gravity", "--trials", "12", "--seed", "3",
                     "--out", out]) == 0
        outs.append(open(os.path.join(out, "records.csv"), "rb").read())
    assert outs[0] == outs[1]


def test_run_trials_zero_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        main(["run", "--mode", "select", "--agent", "mouse", "--trials", "0"])
    assert e.value.code == 2
    assert "--trials" in capsys.readouterr().err


def test_run_follow_bands(tmp_path, capsys):
    out = str(tmp_path / "o")
    code = main(["run", "--mode", "follow", "--agent", "mouse",
                 "--trials", "12", "--seed", "5", "--speeds", "2,5",
                 "--out", out])
    assert code == 0
    summary = json.load(open(os.path.join(out, "summary.json")))
    assert any(k.startswith("2.0|") for k in summary["cells"])
    assert any(k.startswith("average|") for k in summary["cells"])


def test_train_and_predictor_run(tmp_path, capsys):
    model_path = str(tmp_path / "m.json")
    curve_path = str(tmp_path / "curve.csv")
    code = main(["train", "--trials", "6", "--examples", "1500",
                 "--epochs", "8", "--seed", "3", "--out", model_path,
                 "--curve", curve_path])
    assert code == 0
    assert os.path.exists(model_path)
    lines = open(curve_path).read().splitlines()
    assert lines[0] == "epoch,loss"
    assert len(lines) == 9
    losses = [float(l.split(",")[1]) for l in lines[1:]]
    assert losses[-1] < losses[0]
    out = str(tmp_path / "o")
    code = main(["run", "--mode", "select", "--agent", "head",
                 "--assist", "predictor", "--model", model_path,
                 "--trials", "6", "--seed", "2", "--out", out])
    assert code == 0


def test_run_predictor_without_model_is_schema_error(tmp_path, capsys):
    code = main(["run", "--mode", "select", "--agent", "head",
                 "--assist", "predictor", "--trials", "5",
                 "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_SCHEMA


def test_run_bad_model_file_is_schema_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema": "wrong"}')
    code = main(["run", "--mode", "select", "--agent", "head",
                 "--assist", "predictor", "--model", str(bad),
                 "--trials", "5", "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_SCHEMA


def test_calibrate_smoke(tmp_path, capsys):
    out = str(tmp_path / "p.json")
    code = main(["calibrate", "--budget", "100", "--seed", "4",
                 "--classes", "mouse", "--out", out])
    assert code == 0
    doc = json.load(open(out))
    assert doc["schema"] == "aimassist.presets.v1"
    assert "mouse" in doc["classes"]


def test_report_round_trip(tmp_path, capsys):
    out = str(tmp_path / "o")
    assert main(["run", "--mode", "locate", "--agent", "mouse",
                 "--trials", "6", "--seed", "8", "--out", out]) == 0
    rep = str(tmp_path / "rep")
    assert main(["report", "--records", os.path.join(out, "records.csv"),
                 "--out", rep]) == 0
    files = sorted(os.listdir(rep))
    assert files == ["locate_distance_time.csv", "locate_screen_appear.csv"]


def test_report_empty_records_warns(tmp_path, capsys):
    src = tmp_path / "empty.csv"
    from aimassist.harness import records_to_csv
    src.write_text(records_to_csv([]))
    rep = str(tmp_path / "rep")
    code = main(["report", "--records", str(src), "--out", rep])
    assert code == 0
    err = capsys.readouterr().err
    assert "warning" in err
    for f in os.listdir(rep):
        lines = open(os.path.join(rep, f)).read().splitlines()
        assert len(lines) == 1


def test_report_missing_file_io_error(tmp_path, capsys):
    code = main(["report", "--records", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path / "rep")])
    assert code == cli.EXIT_IO


def test_serve_occupied_port(capsys):
    blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    blocker.bind(("127.0.0.1", 0))
    port = blocker.getsockname()[1]
    blocker.listen(1)
    try:
        code = main(["serve", "--port", str(port)])
    finally:
        blocker.close()
    assert code == cli.EXIT_IO
    assert str(port) in capsys.readouterr().err


def test_console_entrypoint():
    res = subprocess.run([sys.executable, "-m", "aimassist.cli", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "aimassist" in res.stdout
