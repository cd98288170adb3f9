import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from harnack_lab import cli
from harnack_lab.experiment import CSV_HEADER, SWEEP_HEADER

SMALL = {
    "manifold": {"kind": "torus", "dim": 2, "n": 16, "side_length": 2 * math.pi},
    "flow": {"equation": "log_heat", "a": 1.0, "metric": "static"},
    "time": {"t_end": 0.5, "output_count": 10},
    "init": {"seed": 3},
    "check": {"kinds": ["trace", "matrix", "integrated"], "integrated_samples": 5},
}


def write(tmp_path, doc, name="small.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def files(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_run_writes_schema(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--out", str(out)]) == 0
    names = set(files(out))
    assert {"margins.csv", "margins_trace.csv", "margins_matrix.csv", "margins_integrated.csv",
            "summary.txt", "status.json"} <= names
    lines = (out / "margins_trace.csv").read_text().splitlines()
    assert lines[0].startswith("# generator=PCG64 seed=3")
    assert lines[1] == CSV_HEADER
    assert len(lines) == 2 + 10
    t, kind, margin, idx, tol = lines[2].split(",")
    assert kind == "trace" and float(margin) > -float(tol) and int(idx) >= 0
    status = json.loads((out / "status.json").read_text())
    assert status["passed"] and status["seed"] == 3
    assert str(out / "margins.csv") in capsys.readouterr().out


def test_outputs_are_byte_identical(tmp_path):
    cfg = write(tmp_path, SMALL)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "b")]) == 0
    assert files(tmp_path / "a") == files(tmp_path / "b")


def test_verify_prints_summary(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    assert cli.main(["verify", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "trace: PASS" in out and out.strip().endswith("overall: PASS")


def test_inject_fault_fails(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    assert cli.main(["verify", str(cfg), "--inject-fault"]) == 1
    assert "overall: FAIL" in capsys.readouterr().out


def test_paper_variant_flag(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    assert cli.main(["verify", str(cfg), "--paper-variant-oracle"]) == 0
    line = next(l for l in capsys.readouterr().out.splitlines() if "log-Gaussian" in l)
    printed = float(line.rsplit("printed=", 1)[1])
    assert printed >= 0.1


@pytest.mark.parametrize("mutate", [
    lambda d: d["flow"].update(a=0.0),
    lambda d: d["flow"].update(beta=1.0),
    lambda d: d["check"].update(kinds=["gradient"]),
])
def test_config_errors_exit_2(tmp_path, capsys, mutate):
    doc = json.loads(json.dumps(SMALL))
    mutate(doc)
    assert cli.main(["verify", str(write(tmp_path, doc))]) == 2
    assert "harnack-lab: error:" in capsys.readouterr().err


def test_usage_errors_exit_2(tmp_path, capsys):
    assert cli.main([]) == 2
    assert cli.main(["frobnicate"]) == 2
    assert cli.main(["run", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["verify", str(write(tmp_path, SMALL)), "--tol-c", "-1"]) == 2
    assert cli.main(["--help"]) == 0
    capsys.readouterr()


def test_tolerance_override_is_applied(tmp_path, capsys):
    doc = json.loads(json.dumps(SMALL))
    doc["check"]["kinds"] = ["trace"]
    assert cli.main(["verify", str(write(tmp_path, doc)), "--inject-fault", "--tol-c", "1e6"]) == 0
    capsys.readouterr()


def test_report_marks_missing_rows(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    cli.main(["run", str(cfg), "--out", str(tmp_path / "art" / "one")])
    capsys.readouterr()
    assert cli.main(["report", str(tmp_path / "art")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 1 + 8
    trace = next(l for l in out if l.startswith("trace inequality"))
    assert "pass" in trace
    assert sum("not run" in l for l in out) == 5


def test_report_failures_and_errors(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    cli.main(["run", str(cfg), "--out", str(tmp_path / "bad"), "--inject-fault"])
    assert cli.main(["report", str(tmp_path / "bad")]) == 1
    assert cli.main(["report", str(tmp_path / "nowhere")]) == 2
    (tmp_path / "empty").mkdir()
    assert cli.main(["report", str(tmp_path / "empty")]) == 2
    capsys.readouterr()


def test_sweep_writes_one_row_per_combo_and_kind(tmp_path, monkeypatch, capsys):
    doc = json.loads(json.dumps(SMALL))
    doc["check"]["kinds"] = ["trace"]
    doc["sweep"] = {"a": [-1.0, 1.0], "seed": [1, 2]}
    cfg = write(tmp_path, doc)
    monkeypatch.setenv("HARNACK_LAB_THREADS", "1")
    assert cli.main(["sweep", str(cfg), "--out", str(tmp_path / "s1")]) == 0
    monkeypatch.setenv("HARNACK_LAB_THREADS", "2")
    assert cli.main(["sweep", str(cfg), "--out", str(tmp_path / "s2")]) == 0
    assert files(tmp_path / "s1") == files(tmp_path / "s2")
    lines = (tmp_path / "s1" / "sweep.csv").read_text().splitlines()
    assert lines[1] == SWEEP_HEADER and len(lines) == 2 + 4
    assert all(l.split(",")[7] == "true" for l in lines[2:])
    assert sorted(p.name for p in (tmp_path / "s1").iterdir() if p.is_dir()) == [f"combo_{i:03d}" for i in range(4)]
    monkeypatch.setenv("HARNACK_LAB_THREADS", "zero")
    assert cli.main(["sweep", str(cfg), "--out", str(tmp_path / "s3")]) == 2
    capsys.readouterr()


def test_sweep_observed_order_column(tmp_path, capsys):
    doc = json.loads(json.dumps(SMALL))
    doc["check"]["kinds"] = ["trace"]
    doc["sweep"] = {"resolution": [16, 32, 64]}
    cfg = write(tmp_path, doc)
    assert cli.main(["sweep", str(cfg), "--out", str(tmp_path / "s")]) == 0
    rows = (tmp_path / "s" / "sweep.csv").read_text().splitlines()[2:]
    order = float(rows[-1].split(",")[8])
    assert 1.7 <= order <= 2.5
    capsys.readouterr()


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, SMALL)
    proc = subprocess.run([sys.executable, "-m", "harnack_lab", "verify", str(cfg)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert "overall: PASS" in proc.stdout
