import json
import subprocess
import sys

import pytest

from micropolar.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO, EXIT_OK, main, read_records
from micropolar.config import parse_config
from micropolar.snapshot import read_snapshot

SMALL = {"grid": {"n_modes": 4}, "numerics": {"horizon": 0.1, "dt": 0.01, "snapshot_stride": 5}}


def write_cfg(tmp_path, body, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(body))
    return str(path)


def run_cli(tmp_path, command, body, out="run", extra=()):
    rc = main([command, write_cfg(tmp_path, body), "--output", str(tmp_path / out), *extra])
    return rc, tmp_path / out


@pytest.mark.parametrize("command", ["microflow", "linear", "nonlinear"])
def test_scenarios_write_outputs(tmp_path, command):
    rc, out = run_cli(tmp_path, command, SMALL)
    assert rc == EXIT_OK
    cfg = parse_config((out / "config.json").read_text())
    assert cfg.scenario == command and cfg.output.directory == str(out)
    records = read_records(out / "diagnostics.ndjson")
    assert len(records) == 11
    assert records[0]["t"] == 0.0 and records[-1]["t"] == pytest.approx(0.1)
    index = read_records(out / "snapshots" / "index.ndjson")
    assert [e["step"] for e in index] == [0, 5, 10]
    fields = read_snapshot(out / "snapshots" / index[-1]["file"])
    assert fields
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "ok"
    assert (out / "report.txt").read_text().startswith(f"{command} run: ok")


def test_microflow_monotone(tmp_path):
    rc, out = run_cli(tmp_path, "microflow", SMALL)
    report = json.loads((out / "report.json").read_text())
    assert report["monotone_L2"]
    assert all(r["curl_max"] < 1e-12 for r in read_records(out / "diagnostics.ndjson"))


def test_linear_report_fields(tmp_path):
    rc, out = run_cli(tmp_path, "linear", SMALL)
    report = json.loads((out / "report.json").read_text())
    assert report["coercivity"]["violations"] == 0
    assert report["coercivity"]["C0"] == pytest.approx(0.25)
    assert report["energy_identity_defect"] >= 0


def test_nonlinear_records(tmp_path):
    rc, out = run_cli(tmp_path, "nonlinear", SMALL)
    rec = read_records(out / "diagnostics.ndjson")[3]
    assert set(rec) == {"t", "E0", "u_H1s", "w_minus_zeta_H1s", "p_H1s", "picard_iters", "contraction",
                        "interp_0.25", "interp_0.5", "interp_1"}


def test_ndjson_byte_identical(tmp_path):
    _, a = run_cli(tmp_path, "nonlinear", SMALL, out="a")
    _, b = run_cli(tmp_path, "nonlinear", SMALL, out="b")
    assert (a / "diagnostics.ndjson").read_bytes() == (b / "diagnostics.ndjson").read_bytes()
    _, c = run_cli(tmp_path, "nonlinear", SMALL, out="c", extra=("--seed", "7"))
    assert (a / "diagnostics.ndjson").read_bytes() != (c / "diagnostics.ndjson").read_bytes()


def test_config_errors_exit_2(tmp_path, capsys):
    rc, _ = run_cli(tmp_path, "linear", {"params": {"eps": -1}})
    assert rc == EXIT_CONFIG
    assert "eps" in capsys.readouterr().err
    assert run_cli(tmp_path, "linear", {"scenario": "microflow"})[0] == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  oops\n}")
    assert main(["linear", str(bad)]) == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err


def test_q_warning_printed(tmp_path, capsys):
    rc, _ = run_cli(tmp_path, "microflow", {**SMALL, "sobolev": {"q": 2}})
    assert rc == EXIT_OK
    assert "q below (5/2,∞) regime" in capsys.readouterr().err


def test_io_error_exit_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["microflow", write_cfg(tmp_path, SMALL), "--output", str(blocker / "x")]) == EXIT_IO
    assert main(["microflow", str(tmp_path / "missing.json")]) == EXIT_IO


def test_divergence_exit_3(tmp_path):
    body = {"numerics": {"horizon": 5.0, "dt": 5.0}, "data": {"u_amplitude": 50, "omega_amplitude": 50}}
    rc, out = run_cli(tmp_path, "nonlinear", body)
    assert rc == EXIT_DIVERGED
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "diverged"
    assert report["contraction"] is None or report["contraction"] >= 1


def test_decay_report_on_run(tmp_path):
    body = {"grid": {"n_modes": 4}, "numerics": {"horizon": 2.0, "dt": 0.02, "snapshot_stride": 50},
            "data": {"microflow": {"amplitude": 0.0}}}
    rc, out = run_cli(tmp_path, "nonlinear", body)
    assert rc == EXIT_OK
    assert main(["decay-report", str(out)]) == EXIT_OK
    report = json.loads((out / "decay_report.json").read_text())
    assert report["passed"]
    assert report["criteria"][0]["name"] == "unforced_energy_rate"
    assert "overall: PASS" in (out / "decay_report.txt").read_text()
    header = (out / "decay.csv").read_text().splitlines()[0]
    assert header == "t,E0,norm_theta_0.25,norm_theta_0.5,norm_theta_1"


def test_decay_report_scenario_runs_both(tmp_path):
    body = {**SMALL, "scenario": "decay-report"}
    rc, out = run_cli(tmp_path, "nonlinear", body)
    assert rc == EXIT_OK
    assert (out / "report.json").exists() and (out / "decay_report.json").exists()


def test_decay_report_rejects_linear_run(tmp_path):
    _, out = run_cli(tmp_path, "linear", SMALL)
    assert main(["decay-report", str(out)]) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "micropolar", "microflow", write_cfg(tmp_path, SMALL),
                           "--output", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


@pytest.mark.slow
def test_verify(capsys):
    assert main(["verify"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) >= 5
    assert all(line.startswith("PASS  ") for line in lines)
