import json
from pathlib import Path
import struct

import numpy as np
import pytest

from calabilab import FlowConfig, MetricState, TorusModel, run
from calabilab.config import ConfigErrors, parse_config, parse_config_text, parse_override
from calabilab.errors import ConfigurationError
from calabilab.flow import TRACE_COLUMNS
from calabilab.io import (read_snapshot, read_trace_csv, write_snapshot, write_summary,
                          write_trace_csv)

MINIMAL = """
[testbed]
kind = torus
[initial]
[flow]
"""


# -- config parsing -------------------------------------------------------------------

def test_minimal_torus_config_gets_defaults(tmp_path):
    cfg = parse_config_text(MINIMAL, base_dir=tmp_path)
    assert cfg.kind == "torus" and cfg.testbed["n"] == 64
    assert cfg.testbed["periods"] == pytest.approx((2 * np.pi, 2 * np.pi))
    assert cfg.initial["preset"] == "zero" and cfg.initial["seed"] == 0
    assert cfg.flow == FlowConfig(snapshot_stride=1)
    assert cfg.diagnostics["gap"] and cfg.diagnostics["k_max"] == 4
    assert cfg.output_dir == tmp_path / "out"


def test_negative_dt_min_reports_line_number():
    text = MINIMAL + "dt_min = -1\n"
    with pytest.raises(ConfigErrors) as err:
        parse_config_text(text, source="bad.cfg")
    assert (6, "dt_min must be positive") in err.value.errors
    assert "bad.cfg:6: dt_min must be positive" in str(err.value)


def test_all_errors_are_reported_at_once():
    text = "[testbed]\nkind = torus\nn = 48\ncolour = red\n[flow]\ndt_init = fast\n[bogus]\n"
    with pytest.raises(ConfigErrors) as err:
        parse_config_text(text)
    msgs = dict((m, ln) for ln, m in err.value.errors)
    assert any("power of two" in m for m in msgs)
    assert msgs["unknown key 'colour' in [testbed]"] == 4
    assert any(m.startswith("flow.dt_init") and ln == 6 for m, ln in msgs.items())
    assert msgs["unknown section [bogus]"] == 7
    assert "missing section [initial]" in msgs


@pytest.mark.parametrize("text, fragment", [
    ("key = 1\n[testbed]\nkind = torus\n[initial]\n[flow]\n", "before any section"),
    ("[testbed\n", "malformed section"),
    (MINIMAL + "scheme\n", "expected 'key = value'"),
    (MINIMAL + "scheme = euler\n", "expected one of"),
    (MINIMAL + "dt_init = 1e-3\ndt_init = 1e-2\n", "duplicate key"),
    (MINIMAL + "dt_init = 2\ndt_max = 1\n", "dt_min <= dt_init <= dt_max"),
    ("[testbed]\nkind = toric\n[initial]\n[flow]\n", "needs a polytope"),
    ("[testbed]\nkind = torus\npolytope = a.poly\n[initial]\n[flow]\n", "takes no polytope"),
    ("[testbed]\n[initial]\n[flow]\n", "testbed.kind is required"),
    (MINIMAL.replace("[initial]", "[initial]\nk = 1 2 3"), "two integers"),
    (MINIMAL.replace("[initial]", "[initial]\nseed = 1.5"), "integer"),
])
def test_config_error_messages(text, fragment):
    with pytest.raises(ConfigErrors, match=fragment):
        parse_config_text(text)


def test_missing_polytope_file_names_path(tmp_path):
    text = "[testbed]\nkind = toric\npolytope = nowhere.poly\n[initial]\n[flow]\n"
    with pytest.raises(ConfigErrors) as err:
        parse_config_text(text, base_dir=tmp_path)
    assert str(tmp_path / "nowhere.poly") in str(err.value)
    assert err.value.errors[0][0] == 3


def test_polytope_path_resolves_against_config_directory(tmp_path):
    (tmp_path / "sq.poly").write_text("0 0\n1 0\n1 1\n0 1\n")
    path = tmp_path / "a.cfg"
    path.write_text("[testbed]\nkind = toric\npolytope = sq.poly\nn = 17\n[initial]\n[flow]\n")
    cfg = parse_config(path)
    assert cfg.testbed["polytope"] == tmp_path / "sq.poly" and cfg.testbed["n"] == 17


def test_missing_config_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="absent.cfg"):
        parse_config(tmp_path / "absent.cfg")


def test_overrides_replace_keys_one_for_one(tmp_path):
    cfg = parse_config_text(MINIMAL, overrides=["--flow.dt_init=1e-4", "--testbed.n=32"],
                            base_dir=tmp_path)
    assert cfg.flow.dt_init == 1e-4 and cfg.testbed["n"] == 32
    assert cfg.lines["flow.dt_init"] == 0
    with pytest.raises(ConfigErrors, match="unknown key"):
        parse_config_text(MINIMAL, overrides=["--flow.colour=1"])
    assert parse_override("--a.b=c = d") == ("a", "b", "c = d")
    with pytest.raises(ConfigurationError):
        parse_override("--dt_init=1")


def test_shipped_configs_parse():
    for path in sorted((Path(__file__).parents[1] / "configs").glob("*.cfg")):
        cfg = parse_config(path)
        assert cfg.as_dict()["testbed"]["kind"] in ("torus", "toric")


# -- trace.csv ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def short_trace():
    m = TorusModel(n=16)
    x, _ = m.coordinates()
    trace, _ = run(MetricState(m, 1e-3 * np.cos(x)), FlowConfig(dt_init=0.5, dt_max=0.5,
                                                                t_max=5.0))
    return trace


def test_trace_csv_round_trip(tmp_path, short_trace):
    path = write_trace_csv(short_trace, tmp_path / "trace.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert len(lines) == len(short_trace) + 1
    data = read_trace_csv(path)
    assert np.array_equal(data["t"], short_trace.times)
    assert np.array_equal(data["Ca"], short_trace.column("Ca"))
    assert np.all(np.isnan(data["futaki_1"]))


def test_trace_csv_uses_seventeen_significant_digits(tmp_path, short_trace):
    path = write_trace_csv(short_trace, tmp_path / "trace.csv")
    row = path.read_text().splitlines()[2].split(",")
    ca = row[TRACE_COLUMNS.index("Ca")]
    assert float(ca) == short_trace.accepted[1].Ca
    assert len(ca.split("e")[0].replace(".", "").replace("-", "").lstrip("0")) <= 17


def test_trace_csv_rejects_foreign_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ConfigurationError):
        read_trace_csv(p)


# -- summary and snapshots ------------------------------------------------------------

def test_summary_is_strict_json(tmp_path):
    p = write_summary({"a": np.float64(1.5), "b": float("nan"), "c": [np.int64(2), True],
                       "d": tmp_path}, tmp_path / "s.json")
    data = json.loads(p.read_text())
    assert data == {"a": 1.5, "b": None, "c": [2, True], "d": str(tmp_path)}


def test_snapshot_layout_is_bit_exact(tmp_path):
    values = np.arange(6, dtype=float).reshape(2, 3)
    p = write_snapshot(tmp_path / "s.cfl", values, 0.25)
    buf = p.read_bytes()
    expected = (b"CFL1" + struct.pack("<III", 2, 2, 3) + struct.pack("<d", 0.25)
                + struct.pack("<6d", *range(6)))
    assert buf == expected
    t, back = read_snapshot(p)
    assert t == 0.25 and np.array_equal(back, values)


def test_snapshot_reader_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.cfl"
    bad.write_bytes(b"XXXX" + bytes(16))
    with pytest.raises(ConfigurationError, match="CFL1"):
        read_snapshot(bad)
    p = write_snapshot(tmp_path / "s.cfl", np.ones(4), 0.0)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(ConfigurationError, match="truncated"):
        read_snapshot(p)
