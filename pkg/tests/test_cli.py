import csv
import subprocess
import sys

import numpy as np
import pytest

from bisparc import cli, harness
from bisparc import dictionary as D
from bisparc.config import ds1_config, load_config, parse_config_text, validate
from bisparc.outer import read_alist

SMALL = """
# two users, small dictionary
K_active = 2
M = 8
T = 128
L = 8
Q = 16
B = 16
n_out = 32
t_max_bigamp = 40
trials = 3
seed = 5
eb_n0_db = 30
"""


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return path


def test_config_file_parses(cfg_file):
    c = load_config(cfg_file)
    assert (c.K_active, c.trials, c.seed) == (2, 3, 5)


def test_template_is_loadable():
    assert validate(parse_config_text(cli.config_template())) == ds1_config()


def test_run_writes_all_outputs(cfg_file, tmp_path, capsys):
    out, trace, diag = tmp_path / "run.csv", tmp_path / "trace.csv", tmp_path / "diag.csv"
    dic, alist = tmp_path / "A.bin", tmp_path / "code.alist"
    code = cli.main(["run", "--config", str(cfg_file), "--out", str(out), "--trace", str(trace),
                     "--diagnostics", str(diag), "--save-dictionary", str(dic), "--save-code", str(alist),
                     "--workers", "1", "--no-timing"])
    assert code == 0
    assert "PUPE=" in capsys.readouterr().out
    rows = harness.read_csv(out)
    assert len(rows) == 1 and rows[0]["scenario_id"] == "small" and rows[0]["wall_time_s"] == 0.0
    trace_rows = list(csv.DictReader(trace.open()))
    assert list(trace_rows[0]) == ["trial", "round", "decoded", "residual_energy"]
    assert {int(r["trial"]) for r in trace_rows} == {0, 1, 2}
    assert next(csv.reader(diag.open())) == ["iter", "residual_norm", "mean_nu_x", "mean_nu_h", "max_section_mass"]
    A, code_obj = harness.build_scenario(load_config(cfg_file))
    assert np.array_equal(D.load(dic).matrix, A.matrix)
    assert np.array_equal(read_alist(alist).parity, code_obj.parity)


def test_seed_and_trials_override(cfg_file, tmp_path):
    out = tmp_path / "o.csv"
    assert cli.main(["run", "--config", str(cfg_file), "--seed", "9", "--trials", "2",
                     "--set", "M=4", "--out", str(out), "--no-timing"]) == 0
    row = harness.read_csv(out)[0]
    assert (row["trials"], row["M"]) == (2, 4)


def test_sweep_over_antennas(cfg_file, tmp_path):
    out = tmp_path / "sweep.csv"
    assert cli.main(["sweep", "--config", str(cfg_file), "--axis", "M", "--values", "4,8",
                     "--trials", "1", "--out", str(out)]) == 0
    rows = harness.read_csv(out)
    assert [r["M"] for r in rows] == [4, 8] and all(r["axis_name"] == "M" for r in rows)


def test_rerun_is_byte_identical(cfg_file, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path, workers in ((a, "1"), (b, "2")):
        assert cli.main(["sweep", "--config", str(cfg_file), "--values", "20,30",
                         "--out", str(path), "--workers", workers, "--no-timing"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_threshold_reports(cfg_file, capsys):
    assert cli.main(["threshold", "--config", str(cfg_file), "--values", "35,40", "--trials", "2"]) == 0
    assert "required Eb/N0 for Pe<=0.05: 35 dB" in capsys.readouterr().out


def test_threshold_not_achieved(cfg_file, capsys):
    assert cli.main(["threshold", "--config", str(cfg_file), "--values", "-20", "--trials", "1",
                     "--set", "t_max_bigamp=3", "--set", "t_max_inner=1"]) == 0
    assert "not achieved" in capsys.readouterr().out


def test_selftest_passes(capsys):
    assert cli.main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "0 failure(s)" in out and out.count("PASS") == 8


@pytest.mark.parametrize(
    "argv, status",
    [
        (["run", "--config", "/nonexistent/x.cfg"], cli.EXIT_IO),
        (["run", "--set", "Q=3"], cli.EXIT_INPUT),
        (["run", "--set", "colour=blue"], cli.EXIT_INPUT),
        (["run", "--workers", "0"], cli.EXIT_INPUT),
        (["sweep", "--axis", "M", "--values", "2.5", "--trials", "1"], cli.EXIT_INPUT),
    ],
)
def test_error_exits(argv, status, capsys):
    assert cli.main(argv) == status
    assert "bisparc:" in capsys.readouterr().err


def test_bad_output_dir(cfg_file, tmp_path):
    bad = tmp_path / "no" / "such" / "dir.csv"
    assert cli.main(["run", "--config", str(cfg_file), "--trials", "1", "--out", str(bad)]) == cli.EXIT_IO


def test_argparse_rejects_bad_values():
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--values", "a,b"])


def test_workers_from_environment(cfg_file, tmp_path, monkeypatch):
    monkeypatch.setenv(harness.WORKERS_ENV, "2")
    out = tmp_path / "env.csv"
    assert cli.main(["run", "--config", str(cfg_file), "--trials", "2", "--out", str(out)]) == 0


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "bisparc.cli", "selftest"], capture_output=True, text=True)
    assert proc.returncode == 0 and "0 failure(s)" in proc.stdout
