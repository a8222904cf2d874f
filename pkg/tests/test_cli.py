import json
from pathlib import Path
import subprocess
import sys

import pytest

from calabilab.cli import main
from calabilab.io import read_snapshot, read_trace_csv

CONFIGS = Path(__file__).parents[1] / "configs"

SMALL = """
[testbed]
kind = torus
n = 16
[initial]
preset = random-bandlimited
seed = {seed}
epsilon = 1e-3
band = 2
[flow]
dt_init = 0.5
dt_max = 0.5
[diagnostics]
plots = false
write_snapshots = true
[output]
directory = {out}
"""


def small_config(tmp_path, name="small", seed=1):
    out = tmp_path / f"out_{name}"
    p = tmp_path / f"{name}.cfg"
    p.write_text(SMALL.format(seed=seed, out=out))
    return p, out


def test_version_prints_conventions_hash(capsys):
    assert main(["version"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("calabilab ") and "conventions sha256 " in out
    digest = out.split("conventions sha256 ")[1].strip()
    assert len(digest) == 64


def test_unknown_subcommand_prints_usage(capsys):
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 1
    assert "usage:" in capsys.readouterr().err


def test_config_error_exits_one(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("[testbed]\nkind = torus\n[initial]\n[flow]\ndt_min = -1\n")
    assert main(["run", str(p)]) == 1
    assert "5: dt_min must be positive" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg")]) == 1


def test_futaki_square_reports_symmetry(capsys):
    assert main(["futaki", str(CONFIGS / "square.poly")]) == 0
    out = capsys.readouterr().out
    assert "theta_X constant 8 " in out and "symmetric polytope" in out


def test_futaki_trapezoid_prints_extremal_function(capsys):
    assert main(["futaki", str(CONFIGS / "trapezoid.poly")]) == 0
    out = capsys.readouterr().out
    assert "symmetric" not in out
    const = float(out.split("theta_X constant ")[1].split()[0])
    assert const == pytest.approx(108 / 13, rel=1e-10)


def test_gap_on_flat_torus_matches_closed_form(capsys):
    assert main(["gap", str(CONFIGS / "torus_flat.cfg")]) == 0
    out = capsys.readouterr().out
    lam = float(out.split("lambda1 ")[1].split()[0])
    assert lam == pytest.approx(1 / 16, rel=1e-6)


@pytest.mark.parametrize("name", ["torus_flat", "torus_stability", "torus_single_mode",
                                  "interval_modified", "square_modified"])
def test_check_passes_on_shipped_configs(name, capsys):
    assert main(["check", str(CONFIGS / f"{name}.cfg")]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_run_extremal_data_gives_single_record(tmp_path, capsys):
    out = tmp_path / "flat"
    code = main(["run", str(CONFIGS / "torus_flat.cfg"), f"--output.directory={out}",
                 "--diagnostics.plots=false"])
    assert code == 0
    assert len(read_trace_csv(out / "trace.csv")["t"]) == 1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["exit_status"] == 0


def test_run_small_torus_writes_all_artifacts(tmp_path, capsys):
    cfg, out = small_config(tmp_path)
    assert main(["run", str(cfg)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["checks"]["rate_vs_gap"]["passed"]
    assert all(c["passed"] for c in summary["checks"].values())
    trace = read_trace_csv(out / "trace.csv")
    assert trace["mCa"][-1] < 1e-12
    snaps = sorted((out / "snapshots").glob("*.cfl"))
    assert snaps
    t, values = read_snapshot(snaps[-1])
    assert values.shape == (16, 16) and t == pytest.approx(trace["t"][-1])


def test_identical_configs_give_identical_traces(tmp_path, capsys):
    a, out_a = small_config(tmp_path, "a")
    b, out_b = small_config(tmp_path, "b")
    assert main(["run", str(a)]) == 0 and main(["run", str(b)]) == 0
    assert (out_a / "trace.csv").read_bytes() == (out_b / "trace.csv").read_bytes()


def test_oversized_data_stalls_with_exit_two(tmp_path, capsys):
    out = tmp_path / "over"
    code = main(["run", str(CONFIGS / "torus_oversized.cfg"), f"--output.directory={out}",
                 "--diagnostics.plots=false"])
    assert code == 2
    summary = json.loads((out / "summary.json").read_text())
    assert summary["exit_status"] == 2 and summary["status"] == "stalled"
    assert not summary["checks"]["flow"]["passed"]
    assert (out / "trace.csv").is_file()


def test_sweep_runs_configs_concurrently(tmp_path, capsys):
    a, out_a = small_config(tmp_path, "a", 1)
    b, out_b = small_config(tmp_path, "b", 2)
    assert main(["sweep", str(a), str(b), "--workers", "2"]) == 0
    assert (out_a / "summary.json").is_file() and (out_b / "summary.json").is_file()


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "calabilab.cli", "version"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "conventions sha256" in res.stdout
