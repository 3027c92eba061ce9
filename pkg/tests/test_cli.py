import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ergobound.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def cfg(name):
    return str(CONFIGS / name)


def read_csv(path):
    text = Path(path).read_text()
    comments = [line for line in text.splitlines() if line.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("\n".join(l for l in text.splitlines() if not l.startswith("#")))))
    return comments, rows


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


# -- validate -------------------------------------------------------------------


def test_validate_ok(capsys):
    assert main(["validate", "--model", cfg("example1_bdpc.json")]) == 0
    assert "no violations" in capsys.readouterr().out


def test_validate_monotonicity(capsys):
    assert main(["validate", "--model", cfg("szk_nonmonotone.json")]) == 1
    out = capsys.readouterr().out
    assert "k=1" in out and "t=0" in out


def test_malformed_rate(tmp_path, capsys):
    path = write_json(tmp_path / "m.json", {"kind": "bdpc", "S": 1, "lambda": ["2 +* t"], "mu": ["1"], "xi": ["0"]})
    assert main(["validate", "--model", path]) == 2
    assert "position" in capsys.readouterr().err


def test_missing_file():
    assert main(["bounds", "--model", "/nonexistent/model.json"]) == 2


def test_bad_json_reports_line(tmp_path, capsys):
    p = tmp_path / "m.json"
    p.write_text('{"kind": "szk",\n"S": 2,,}')
    assert main(["validate", "--model", str(p)]) == 2
    assert "line 2" in capsys.readouterr().err


# -- bounds -----------------------------------------------------------------------


def test_bounds_example3(tmp_path):
    out = tmp_path / "b.csv"
    code = main(["bounds", "--model", cfg("example3_absorbing.json"), "--weights", cfg("example3_weights.json"),
                 "--horizon", "1", "--grid", "0.1", "--out", str(out)])
    assert code == 0
    comments, rows = read_csv(out)
    assert any("condition (i)" in c for c in comments)
    assert any("essential nonnegativity: PASS" in c for c in comments)
    assert len(rows) == 11
    for r in rows:
        phi = 1 + 0.5 * math.cos(2 * math.pi * float(r["t"]))
        assert float(r["beta_star"]) == pytest.approx(phi, abs=1e-12)
        assert float(r["beta_lower"]) == pytest.approx(phi, abs=1e-12)
        assert float(r["U"]) == pytest.approx(float(r["L"]), rel=1e-9)


def test_bounds_example1_unit_weights(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bounds", "--model", cfg("example1_bdpc.json"), "--weights", cfg("unit_cumulative_10.json"),
                 "--grid", "0.5", "--out", str(out)]) == 0
    _, rows = read_csv(out)
    for r in rows:
        lam = 2 + math.sin(2 * math.pi * float(r["t"]))
        assert float(r["beta_lower"]) == pytest.approx(lam + 3, abs=1e-12)
        assert float(r["beta_star"]) == pytest.approx(3 - 8 * lam, abs=1e-12)


def test_bounds_warns_on_failed_condition(tmp_path):
    out = tmp_path / "b.csv"
    model = write_json(tmp_path / "m.json", {"kind": "general", "S": 2, "q": [
        {"i": 0, "j": 1, "rate": "5"}, {"i": 1, "j": 2, "rate": "1"}, {"i": 2, "j": 1, "rate": "1"},
        {"i": 1, "j": 0, "rate": "1"}]})
    weights = write_json(tmp_path / "w.json", {"shape": "diagonal", "d": [1, 1]})
    assert main(["bounds", "--model", model, "--weights", weights, "--out", str(out)]) == 0
    comments, rows = read_csv(out)
    assert any("WARNING" in c for c in comments) and rows


def test_bounds_weights_wrong_length(tmp_path):
    weights = write_json(tmp_path / "w.json", {"shape": "diagonal", "d": [1, 1]})
    assert main(["bounds", "--model", cfg("example3_absorbing.json"), "--weights", weights]) == 2


# -- simulate / verify / spectral gap ------------------------------------------------


def test_simulate_grid_larger_than_horizon(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["simulate", "--model", cfg("bd_constant.json"), "--grid", "5", "--horizon", "2",
                 "--out", str(out)]) == 0
    _, rows = read_csv(out)
    assert len(rows) == 1 and rows[0]["t"] == "0.0" and rows[0]["p_0"] == "1.0"


def test_simulate_from_file(tmp_path):
    init = tmp_path / "p0.txt"
    init.write_text("\n".join(["0"] * 5 + ["1"]))
    out = tmp_path / "s.csv"
    assert main(["simulate", "--model", cfg("bd_constant.json"), "--init", str(init), "--grid", "0.5",
                 "--out", str(out)]) == 0
    _, rows = read_csv(out)
    assert len(rows) == 5
    for r in rows:
        assert sum(float(r[f"p_{i}"]) for i in range(6)) == pytest.approx(1.0, abs=1e-10)
    bad = tmp_path / "bad.txt"
    bad.write_text("0.5\n0.6")
    assert main(["simulate", "--model", cfg("bd_constant.json"), "--init", str(bad)]) == 2


def test_verify_example1_no_violations(tmp_path):
    out = tmp_path / "v.csv"
    assert main(["verify", "--model", cfg("example1_bdpc.json"), "--weights", cfg("unit_cumulative_10.json"),
                 "--grid", "0.1", "--out", str(out)]) == 0
    comments, rows = read_csv(out)
    assert any("violations: 0" in c for c in comments)
    assert len(rows) == 21 and all(r["lower_applicable"] == "true" for r in rows)
    for r in rows:
        assert float(r["lower"]) * (1 - 1e-6) <= float(r["measured"]) <= float(r["upper"]) * (1 + 1e-6)


def test_verify_example3_is_exact(tmp_path):
    out = tmp_path / "v.csv"
    assert main(["verify", "--model", cfg("example3_absorbing.json"), "--weights", cfg("example3_weights.json"),
                 "--grid", "0.25", "--out", str(out)]) == 0
    _, rows = read_csv(out)
    for r in rows[1:]:
        assert float(r["measured"]) == pytest.approx(float(r["upper"]), rel=1e-5)


def test_spectral_gap(tmp_path, capsys):
    out = tmp_path / "g.csv"
    assert main(["spectral-gap", "--model", cfg("bd_constant.json"), "--out", str(out)]) == 0
    assert "gap 0.550510" in capsys.readouterr().out
    _, rows = read_csv(out)
    assert float(rows[0]["gap"]) == pytest.approx(3 - math.sqrt(6), abs=1e-12)
    assert rows[0]["holds"] == "true"


def test_spectral_gap_rejects_time_dependent_model():
    assert main(["spectral-gap", "--model", cfg("example2_szk.json")]) == 1


def test_numerical_failure_exit_code(tmp_path):
    model = write_json(tmp_path / "stiff.json", {"kind": "general", "S": 1, "q": [
        {"i": 0, "j": 1, "rate": "1e9"}, {"i": 1, "j": 0, "rate": "1"}]})
    assert main(["simulate", "--model", model, "--horizon", "10", "--grid", "1"]) == 3


def test_subcommand_defaults_do_not_leak():
    from ergobound.cli import build_parser

    p = build_parser()
    assert p.parse_args(["verify", "--model", "x"]).horizon == 2.0
    assert p.parse_args(["optimize-weights", "--model", "x"]).horizon == 10.0


# -- reproducibility -------------------------------------------------------------------


@pytest.mark.parametrize("command", [
    ["bounds", "--model", cfg("example2_szk.json"), "--grid", "0.2"],
    ["verify", "--model", cfg("example1_bdpc.json"), "--grid", "0.2", "--init-a", "delta:4"],
    ["optimize-weights", "--model", cfg("bd_constant.json"), "--budget", "200", "--seed", "3"],
])
def test_byte_identical_output(tmp_path, command):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(command + ["--out", str(a)]) == main(command + ["--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_optimized_weights_round_trip(tmp_path):
    w = tmp_path / "w.json"
    assert main(["optimize-weights", "--model", cfg("bd_constant.json"), "--out", str(w)]) == 0
    weights = json.loads(w.read_text())
    assert weights["shape"] == "cumulative-upper" and len(weights["d"]) == 5
    out = tmp_path / "b.csv"
    assert main(["bounds", "--model", cfg("bd_constant.json"), "--weights", str(w), "--out", str(out)]) == 0
    _, rows = read_csv(out)
    assert float(rows[0]["beta_star"]) >= 3 - math.sqrt(6) - 1e-3
    assert main(["verify", "--model", cfg("bd_constant.json"), "--weights", str(w),
                 "--out", str(tmp_path / "v.csv")]) == 0


def test_console_entry_point(tmp_path):
    out = tmp_path / "g.csv"
    proc = subprocess.run([sys.executable, "-m", "ergobound", "spectral-gap", "--model", cfg("bd_constant.json"),
                           "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0 and "holds" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "ergobound", "validate"], capture_output=True, text=True)
    assert proc.returncode == 2


def test_checkpoint_grid_has_no_drift(tmp_path):
    out = tmp_path / "b.csv"
    main(["bounds", "--model", cfg("example2_szk.json"), "--horizon", "3", "--grid", "0.1", "--out", str(out)])
    _, rows = read_csv(out)
    ts = np.array([float(r["t"]) for r in rows])
    assert ts.size == 31 and ts[-1] == pytest.approx(3.0)
