import io
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from qgdual.cli import EXIT_FAIL, EXIT_INPUT, EXIT_OK, run_command

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"

# (golden name, argv) -- all expected to pass
CASES = [
    ("groupoid-validate-z2_z3_mu", ["groupoid", "validate", "z2_z3_mu.gpd"]),
    ("kac-verify-pair2_mu", ["kac", "verify", "pair2_mu.gpd"]),
    ("kac-legs-s3", ["kac", "legs", "s3.gpd"]),
    ("fell-verify-sparse_z2", ["fell", "verify", "sparse_z2.bnd"]),
    ("fell-coaction-line_z3", ["fell", "coaction", "line_z3.bnd"]),
    ("fell-crossed-rank12_pair2", ["fell", "crossed", "rank12_pair2.bnd"]),
    ("duality-graded_z2", ["duality", "graded_z2.bnd"]),
    ("action-roundtrip-scalar_pair2", ["action", "roundtrip", "scalar_pair2.act"]),
    ("reconstruct-rank12_pair2", ["reconstruct", "rank12_pair2.bnd"]),
]


def run(argv):
    out, err = io.BytesIO(), io.StringIO()
    code = run_command(argv, out, err)
    return code, out.getvalue(), err.getvalue()


def with_fixture(argv):
    return argv[:-1] + [str(FIXTURES / argv[-1])]


def normalized(data: bytes) -> str:
    """JSON report with rounding-level residuals collapsed, so BLAS noise cannot move the bytes."""
    obj = json.loads(data)
    for rep in obj["reports"]:
        for item in rep["items"]:
            if float(item["residual"]) < 1e-12:
                item["residual"] = "tiny"
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


@pytest.mark.parametrize("name, argv", CASES, ids=[c[0] for c in CASES])
def test_json_report_matches_golden_file(name, argv):
    code, out, err = run(with_fixture(argv) + ["--format", "json"])
    assert code == EXIT_OK, err
    got = normalized(out)
    path = GOLDEN / f"{name}.json"
    if os.environ.get("QGDUAL_REGEN_GOLDEN"):
        path.write_text(got, encoding="utf-8")
    assert got == path.read_text(encoding="utf-8")


@pytest.mark.parametrize("argv", [c[1] for c in CASES[:5]], ids=[c[0] for c in CASES[:5]])
def test_json_is_byte_identical_across_runs(argv):
    first = run(with_fixture(argv) + ["--format", "json"])
    second = run(with_fixture(argv) + ["--format", "json"])
    assert first == second


def test_failing_check_exits_1():
    code, out, _ = run([*with_fixture(["kac", "verify", "z3.gpd"]), "--tol", "1e-300", "--format", "json"])
    assert code == EXIT_FAIL
    assert json.loads(out)["pass"] is False


def test_environment_tolerance_is_used(monkeypatch):
    monkeypatch.setenv("QG_TOL", "1e-300")
    assert run(with_fixture(["kac", "verify", "z3.gpd"]))[0] == EXIT_FAIL
    monkeypatch.setenv("QG_TOL", "1e-6")
    code, out, _ = run(with_fixture(["kac", "legs", "z3.gpd"]) + ["--format", "json"])
    assert code == EXIT_OK
    assert json.loads(out)["reports"][0]["tol"] == "1.00e-06"


def test_bad_environment_tolerance_is_an_input_error(monkeypatch):
    monkeypatch.setenv("QG_TOL", "small")
    code, _, err = run(with_fixture(["kac", "legs", "z2.gpd"]))
    assert code == EXIT_INPUT
    assert "QG_TOL" in err


def test_malformed_file_exits_2_with_location(tmp_path):
    lines = (FIXTURES / "graded_z2.bnd").read_text().splitlines()
    lines[-1] = "  g 2x2: 0 1; 0 0 | 0 0; 1 x"
    bad = tmp_path / "bad.bnd"
    bad.write_text("\n".join(lines) + "\n")
    code, out, err = run(["fell", "verify", str(bad)])
    assert code == EXIT_INPUT
    assert out == b""
    assert f"bad.bnd:{len(lines)}:" in err


def test_missing_file_exits_2(tmp_path):
    code, _, err = run(["groupoid", "validate", str(tmp_path / "nope.gpd")])
    assert code == EXIT_INPUT
    assert "nope.gpd" in err


def test_unknown_subcommand_exits_2():
    assert run(["frobnicate"])[0] == EXIT_INPUT


def test_reconstruction_with_weight_is_a_precondition_error(tmp_path):
    text = (FIXTURES / "line_pair2.bnd").read_text()
    mu = (FIXTURES / "pair2_mu.gpd").read_text()
    weight = mu[mu.index("mu:"):]
    head, fibers = text.split("fibers:")
    w = tmp_path / "w.bnd"
    w.write_text(head + weight + "fibers:" + fibers)
    code, _, err = run(["reconstruct", str(w)])
    assert code == EXIT_INPUT
    assert "constant weight" in err


def test_suite_all_passes_on_small_directory(tmp_path):
    for name in ("z2.gpd", "graded_z2.bnd", "sparse_z2.bnd", "conj_z2.act"):
        (tmp_path / name).write_text((FIXTURES / name).read_text())
    code, out, err = run(["suite", "all", str(tmp_path), "--format", "json"])
    assert code == EXIT_OK, err
    suites = [(r["fixture"], r["suite"]) for r in json.loads(out)["reports"]]
    assert ("z2", "kac.kac") in suites
    # the zero fiber over g makes sparse_z2 non-saturated but still admissible
    assert ("sparse_z2", "etale.reconstruct") in suites


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qgdual", "kac", "legs", str(FIXTURES / "z2.gpd")],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "6/6 passed" in proc.stdout
