import math
import subprocess
import sys

import pytest

from pulsedamp.cli import RunConfig, build_parser, run, thread_cap
from pulsedamp.fileio import parse_report, read_profile


def _run(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_design_ode_certify(capsys, tmp_path):
    code, out, _ = _run(capsys, "design-ode", "--lambda", "1", "--rate", "1", "--certify",
                        "--profile-out", str(tmp_path / "p.txt"),
                        "--samples-out", str(tmp_path / "s.csv"),
                        "--report-out", str(tmp_path / "r.txt"))
    assert code == 0
    rep = parse_report(out)
    assert float(rep["measured_margin"]) >= 1.0 and rep["verified"] == "1"
    assert (tmp_path / "r.txt").read_text() == out
    assert read_profile(tmp_path / "p.txt").periodic
    header = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert header == "t,delta,worst_energy_ratio,bound"


def test_certify_control_is_falsified(capsys, tmp_path):
    prof = tmp_path / "p.txt"
    assert _run(capsys, "design-ode", "--lambda", "1", "--rate", "2", "--profile-out",
                str(prof))[0] == 0
    t0 = repr(math.pi / 2)
    code, out, _ = _run(capsys, "certify", "--profile", str(prof), "--lambda", "1",
                        "--rate", "2", "--offset", t0)
    assert code == 0
    code, out, _ = _run(capsys, "certify", "--profile", str(prof), "--lambda", "1",
                        "--rate", "2.5", "--offset", t0)
    assert code == 2 and parse_report(out)["verified"] == "0"


def test_epsilon_out_of_range(capsys):
    code, _, err = _run(capsys, "design-lip", "--lambda", "1", "--rate", "0.5",
                        "--epsilon", "2")
    assert code == 1 and "epsilon out of range" in err


def test_spectrum_table_row(capsys, tmp_path):
    code, out, _ = _run(capsys, "spectrum-table", "--model", "wave", "--dim", "1",
                        "--count", "32")
    assert code == 0
    rows = [ln.split(",") for ln in out.splitlines() if ln[:1].isdigit()]
    t3 = [float(r[3]) for r in rows if r[0] == "3"][0]
    assert t3 == pytest.approx(11 * math.pi / 12, rel=1e-15)
    code, out, _ = _run(capsys, "spectrum-table", "--model", "beam", "--count", "64",
                        "--check-growth", "--samples-out", str(tmp_path / "t.csv"))
    assert code == 0 and parse_report(out)["bounded_T"] == "1"


@pytest.mark.parametrize("argv,field", [
    (["design-ode", "--lambda", "-1", "--rate", "1"], "--lambda"),
    (["design-ode", "--lambda", "1", "--rate", "nan"], "--rate"),
    (["design-ode", "--lambda", "1", "--rate", "1", "--batch", "0"], "--batch"),
    (["design-ode", "--lambda", "1", "--rate", "1", "--margin", "1"], "--margin"),
    (["design-system", "--rate", "1"], "--spectrum"),
    (["design-system", "--rate", "1", "--spectrum", "1,2", "--model", "wave",
      "--count", "3"], "--spectrum"),
    (["lower-bound", "--lambda", "1"], "--profile"),
])
def test_field_level_validation(capsys, argv, field):
    code, _, err = _run(capsys, *argv)
    assert code == 1 and field in err


def test_usage_errors_exit_1(capsys):
    assert _run(capsys, "no-such-command")[0] == 1
    assert _run(capsys, "design-ode", "--lambda", "1")[0] == 1
    assert _run(capsys, "certify", "--profile", "/nonexistent/p.txt", "--lambda", "1")[0] == 1


def test_calibration_failure_exit_1(capsys):
    code, _, err = _run(capsys, "design-ode", "--lambda", "1", "--rate", "20",
                        "--n-cap", "2**8")
    assert code == 1 and "calibration failed" in err


def test_determinism(capsys, tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        d.mkdir()
        _run(capsys, "design-system", "--spectrum", "1,1.5", "--rate", "0.5", "--certify",
             "--batch", "8", "--profile-out", str(d / "p.txt"),
             "--samples-out", str(d / "s.csv"), "--report-out", str(d / "r.txt"))
        outs.append([(d / n).read_bytes() for n in ("p.txt", "s.csv", "r.txt")])
    assert outs[0] == outs[1]


def test_other_commands(capsys, tmp_path):
    env = tmp_path / "env.csv"
    env.write_text("t,phi\n" + "".join(f"{k * 0.5},{math.exp(-k * 0.25)}\n" for k in range(40)))
    assert _run(capsys, "design-any", "--lambda", "1", "--envelope", str(env), "--blocks", "4",
                "--certify", "--batch", "8")[0] == 0
    assert _run(capsys, "design-pde", "--model", "wave", "--count", "12", "--rate", "1",
                "--certify", "--batch", "8")[0] == 0
    code, out, _ = _run(capsys, "design-ultra", "--model", "wave", "--count", "10",
                        "--max-blocks", "2", "--certify", "--batch", "8")
    assert code == 0 and parse_report(out)["reachable"] == "2 3"
    code, out, _ = _run(capsys, "design-lip", "--lambda", "1", "--rate", "0.5",
                        "--epsilon", "0.25", "--certify", "--batch", "8", "--periods", "2")
    rep = parse_report(out)
    assert code == 0 and float(rep["lipschitz_constant"]) == 0.25
    code, out, _ = _run(capsys, "lower-bound", "--lambda", "1", "--delta", "1",
                        "--times", "1,2,4")
    assert code == 0 and parse_report(out)["holds"] == "1"
    code, out, _ = _run(capsys, "slow-solution", "--lambda", "1", "--delta", "1",
                        "--t-end", "20", "--samples-out", str(tmp_path / "slow.csv"))
    assert code == 0 and parse_report(out)["lower_envelope_holds"] == "1"
    code, _, err = _run(capsys, "slow-solution", "--lambda", "2", "--delta", "1")
    assert code == 1 and "overdamping hypothesis violated" in err


def test_sweep_is_deterministic_across_thread_counts(capsys, tmp_path, monkeypatch):
    csvs = []
    for threads in ("1", "2"):
        monkeypatch.setenv("PULSEDAMP_THREADS", threads)
        path = tmp_path / f"sweep{threads}.csv"
        code, _, _ = _run(capsys, "sweep", "--lambdas", "1,2", "--rates", "0.5,1",
                          "--batch", "8", "--samples-out", str(path))
        assert code == 0
        csvs.append(path.read_bytes())
    assert csvs[0] == csvs[1]
    assert len(csvs[0].decode().splitlines()) == 5


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("PULSEDAMP_THREADS", "3")
    assert thread_cap() == 3
    monkeypatch.setenv("PULSEDAMP_THREADS", "zero")
    with pytest.raises(ValueError):
        thread_cap()


def test_run_config_attribute_access():
    ns = build_parser().parse_args(["design-ode", "--lambda", "2", "--rate", "1"])
    cfg = RunConfig.from_namespace(ns)
    assert cfg.lambda_ == 2.0 and cfg.command == "design-ode"
    with pytest.raises(AttributeError):
        cfg.not_a_field


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pulsedamp.cli", "design-lip", "--lambda", "1",
                           "--rate", "0.5", "--epsilon", "2"], capture_output=True, text=True)
    assert proc.returncode == 1 and "epsilon out of range" in proc.stderr
