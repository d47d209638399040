import csv
import json
import subprocess
import sys

import pytest

from hydroprim.cli import main
from hydroprim.config import (
    DEFAULT_CHECKS,
    EXIT_CHECKS,
    EXIT_INVALID,
    EXIT_MISSING,
    EXIT_NOCONV,
    EXIT_OK,
    EXIT_PARSE,
    ConfigError,
    parse_config,
    parse_string,
)
from hydroprim.diagnostics import csv_columns, read_csv

SMALL = """
[domain]
Mx = 3
My = 3
K = 3
[integrator]
dt = 1e-3
T_end = 0.02
diag_every = 5
[initial]
profile = random
amplitude = 0.05
seed = 4
[output]
directory = out
"""


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def invoke(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    body = json.loads(out.out) if out.out.strip() else json.loads(out.err)
    return code, body


class TestParseConfig:
    def test_empty_file_gives_defaults(self):
        cfg = parse_string("")
        assert cfg.domain["Mx"] == 8 and cfg.domain["Nq_x"] >= 12
        assert cfg.integrator["dt"] == 1e-3
        assert cfg.checks == list(DEFAULT_CHECKS)
        assert cfg.q_list == (2.0, 4.0, 6.0, 8.0)

    def test_keys_are_case_sensitive(self):
        cfg = parse_string("[domain]\nMx = 4\nNq_x = 7\n")
        assert cfg.domain["Mx"] == 4 and cfg.domain["Nq_x"] == 7

    def test_dealiasing_violation_named(self):
        with pytest.raises(ConfigError) as err:
            parse_string("[domain]\nMx = 8\nNq_x = 10\n")
        assert err.value.code == EXIT_INVALID
        assert any("3/2" in p for p in err.value.problems)

    def test_every_problem_listed(self):
        text = "[integrator]\ndt = -1\nscheme = rk4\n[periodic]\ndamping = 2\n"
        with pytest.raises(ConfigError) as err:
            parse_string(text)
        assert len(err.value.problems) >= 3

    def test_unknown_key_and_section(self):
        with pytest.raises(ConfigError) as err:
            parse_string("[domain]\nmx = 4\n[extras]\na = 1\n")
        msg = " ".join(err.value.problems)
        assert "unknown key 'mx'" in msg and "unknown section [extras]" in msg

    def test_bad_value_type(self):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_string("[integrator]\nnonlinear = maybe\n")

    def test_missing_and_unparsable_files(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            parse_config(tmp_path / "nope.ini")
        assert err.value.code == EXIT_MISSING
        with pytest.raises(ConfigError) as err:
            parse_config(write(tmp_path, "no section header\n"))
        assert err.value.code == EXIT_PARSE

    def test_paths_resolve_next_to_file(self, tmp_path):
        cfg = parse_config(write(tmp_path, SMALL))
        assert cfg.out_dir() == tmp_path / "out"


class TestExitCodes:
    def test_missing(self, tmp_path, capsys):
        code, body = invoke(capsys, "simulate", "--config", tmp_path / "x.ini")
        assert code == EXIT_MISSING and body["exit_code"] == EXIT_MISSING

    def test_parse(self, tmp_path, capsys):
        code, _ = invoke(capsys, "basis", "--config", write(tmp_path, "=\n"))
        assert code == EXIT_PARSE

    def test_invalid(self, tmp_path, capsys):
        code, body = invoke(capsys, "basis", "--config",
                            write(tmp_path, "[domain]\nMx = 8\nNq_x = 3\n"))
        assert code == EXIT_INVALID and body["problems"]

    def test_bad_single_mode(self, tmp_path, capsys):
        text = SMALL.replace("profile = random", "profile = mode\nk = 9")
        code, _ = invoke(capsys, "simulate", "--config", write(tmp_path, text))
        assert code == EXIT_INVALID


class TestBasisCommand:
    def test_metadata(self, tmp_path, capsys):
        code, body = invoke(capsys, "basis", "--config", write(tmp_path, SMALL))
        assert code == EXIT_OK
        text = json.dumps(body)
        assert "gram" in text.lower()


class TestSimulateAndVerify:
    @pytest.fixture
    def run_dir(self, tmp_path, capsys):
        path = write(tmp_path, SMALL)
        code, body = invoke(capsys, "simulate", "--config", path)
        assert code == EXIT_OK and body["status"] == "ok"
        return path, body

    def test_outputs(self, run_dir):
        path, body = run_dir
        out = path.parent / "out"
        assert (out / "diagnostics.csv").exists() and (out / "final.pehv").exists()
        assert body["steps"] == 20
        assert body["max_cancellation_ratio"] <= 1e-10

    def test_csv_schema(self, run_dir):
        path, _ = run_dir
        with open(path.parent / "out" / "diagnostics.csv") as fh:
            header = next(csv.reader(fh))
        assert header == csv_columns((2, 4, 6, 8))
        recs = read_csv(path.parent / "out" / "diagnostics.csv")
        assert [r.step for r in recs] == [0, 5, 10, 15, 20]

    def test_verify_all_checks(self, run_dir, capsys):
        path, _ = run_dir
        code, body = invoke(capsys, "verify", "--config", path)
        assert code == EXIT_OK, body
        assert [c["check"] for c in body["checks"]] == list(DEFAULT_CHECKS)

    def test_verify_failing_check(self, run_dir, capsys):
        path, _ = run_dir
        text = path.read_text() + "[verify]\nenergy_tol = 1e-30\n"
        path.write_text(text)
        code, body = invoke(capsys, "verify", "--config", path, "--checks", "energy")
        assert code == EXIT_CHECKS and body["status"] == "fail"

    def test_verify_unknown_check(self, run_dir, capsys):
        path, _ = run_dir
        code, _ = invoke(capsys, "verify", "--config", path, "--checks", "vibes")
        assert code == EXIT_INVALID

    def test_rerun_is_bit_identical(self, run_dir, capsys):
        path, _ = run_dir
        csv_path = path.parent / "out" / "diagnostics.csv"
        first = csv_path.read_bytes()
        code, _ = invoke(capsys, "--strict-deterministic", "simulate", "--config", path)
        assert code == EXIT_OK and csv_path.read_bytes() == first


def test_zero_data_gives_zero_diagnostics(tmp_path, capsys):
    path = write(tmp_path, SMALL.replace("profile = random", "profile = zero"))
    code, _ = invoke(capsys, "simulate", "--config", path)
    assert code == EXIT_OK
    for r in read_csv(tmp_path / "out" / "diagnostics.csv"):
        assert r.l2 == 0 and r.grad_l2 == 0 and r.dissipation == 0


def test_blowup_exit_code(tmp_path, capsys):
    text = SMALL.replace("diag_every = 5", "diag_every = 5\nblowup = 1.0").replace(
        "amplitude = 0.05", "amplitude = 5.0")
    code, body = invoke(capsys, "simulate", "--config", write(tmp_path, text))
    assert code == 1 and body["status"] == "blowup"
    assert (tmp_path / "out" / "diagnostics.csv").exists()


class TestPeriodicCommand:
    BASE = SMALL + """
[forcing]
variant = time_periodic
profile = mode
component = 0
k = 1
mode = 0
amplitude = 1.0
period = 0.05
[periodic]
T = 0.05
contraction_ensemble = 2
"""

    def test_converges(self, tmp_path, capsys):
        code, body = invoke(capsys, "periodic", "--config", write(tmp_path, self.BASE))
        assert code == EXIT_OK and body["status"] == "converged"
        assert body["final_residual"] <= 1e-8 and 0 < body["rho"] < 1
        assert (tmp_path / "out" / "periodic.pehv").exists()

    def test_not_converged(self, tmp_path, capsys):
        text = self.BASE + "max_iter = 2\ntol = 1e-14\n"
        code, body = invoke(capsys, "periodic", "--config", write(tmp_path, text))
        assert code == EXIT_NOCONV and body["status"] == "not_converged"

    def test_period_mismatch(self, tmp_path, capsys):
        text = self.BASE.replace("T = 0.05", "T = 0.07")
        code, body = invoke(capsys, "periodic", "--config", write(tmp_path, text))
        assert code == EXIT_INVALID
        assert any("multiple" in p for p in body["problems"])


def test_module_entry_point(tmp_path):
    path = write(tmp_path, SMALL)
    proc = subprocess.run([sys.executable, "-m", "hydroprim", "basis", "--config", str(path)],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)
