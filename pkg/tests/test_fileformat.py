from pathlib import Path

import numpy as np
import pytest

from qgdual import zoo
from qgdual.fileformat import (
    FormatError,
    format_matrix,
    format_number,
    load_action,
    load_bundle,
    parse_action,
    parse_bundle,
    parse_matrix,
    parse_number,
    serialize_action,
    serialize_bundle,
)
from qgdual.groupoid import parse_groupoid, serialize

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.mark.parametrize("tok, value", [
    ("1", 1), ("-0.5", -0.5), ("2e-3", 0.002), (".5", 0.5),
    ("i", 1j), ("-i", -1j), ("0.5i", 0.5j), ("1-2i", 1 - 2j), ("3+i", 3 + 1j), ("-1.5e1+2i", -15 + 2j),
])
def test_number_syntax(tok, value):
    assert parse_number(tok) == value


@pytest.mark.parametrize("tok", ["", "1+", "ii", "1..2", "abc", "1+2j", "--1"])
def test_malformed_numbers_are_rejected(tok):
    with pytest.raises(FormatError):
        parse_number(tok)


@pytest.mark.parametrize("value", [0, 1, -3, 0.25, 1j, -1j, 2 - 0.5j, 1 / 3, 1e-20 + 7j])
def test_format_then_parse_is_exact(value):
    assert parse_number(format_number(value)) == value


def test_integers_print_without_decimal_point():
    assert format_number(2.0) == "2"
    assert format_number(-1j) == "-i"
    assert format_matrix(np.array([[1, 0], [0, 1j]])) == "1 0; 0 i"


def test_matrix_shape_is_enforced():
    with pytest.raises(FormatError):
        parse_matrix("1 0; 0", (2, 2))
    assert np.array_equal(parse_matrix("1 2; 3 4", (2, 2)), [[1, 2], [3, 4]])


def _fixture_files(suffix):
    return sorted(FIXTURES.glob(f"*{suffix}"))


@pytest.mark.parametrize("path", _fixture_files(".gpd"), ids=lambda p: p.name)
def test_groupoid_files_round_trip(path):
    text = path.read_text()
    G, mu = parse_groupoid(text)
    assert serialize(G, mu) == text


@pytest.mark.parametrize("path", _fixture_files(".bnd"), ids=lambda p: p.name)
def test_bundle_files_round_trip(path):
    text = path.read_text()
    assert serialize_bundle(parse_bundle(text)) == text


@pytest.mark.parametrize("path", _fixture_files(".act"), ids=lambda p: p.name)
def test_action_files_round_trip(path):
    text = path.read_text()
    assert serialize_action(parse_action(text)) == text


def test_checked_in_fixtures_match_the_zoo(tmp_path):
    written = zoo.write_fixtures(tmp_path)
    assert sorted(p.name for p in written) == sorted(p.name for p in FIXTURES.iterdir() if p.is_file())
    for p in written:
        assert p.read_text() == (FIXTURES / p.name).read_text(), p.name


def test_loaded_bundle_spans_the_written_matrices():
    spec = load_bundle(FIXTURES / "graded_z2.bnd")
    F = spec.bundle()
    assert [f.dim for f in F.fibers] == [2, 2]


def test_groupoid_reference_is_resolved_relative_to_file(tmp_path):
    (tmp_path / "g.gpd").write_text((FIXTURES / "z2.gpd").read_text())
    (tmp_path / "b.bnd").write_text("groupoid: g.gpd\nfibers:\n  e 1x1: 1\n  g 1x1: -\n")
    spec = load_bundle(tmp_path / "b.bnd")
    assert [f.dim for f in spec.bundle().fibers] == [1, 0]


def _bad_line(text):
    with pytest.raises(FormatError) as info:
        parse_bundle(text)
    return info.value.line


def test_errors_carry_line_numbers():
    base = (FIXTURES / "graded_z2.bnd").read_text().splitlines()
    n = len(base)
    bad_number = base[:-1] + ["  g 2x2: 0 1; 0 0 | 0 0; 1 x"]
    assert _bad_line("\n".join(bad_number) + "\n") == n
    bad_shape = base[:-2] + ["  e 2by2: 1 0; 0 0"] + base[-1:]
    assert _bad_line("\n".join(bad_shape) + "\n") == n - 1


def test_action_with_missing_image_is_rejected():
    text = (FIXTURES / "conj_z2.act").read_text()
    lines = text.splitlines()
    # drop the last of the four images of g
    lines[-1] = lines[-1].rsplit("|", 1)[0]
    with pytest.raises(FormatError):
        parse_action("\n".join(lines) + "\n")


def test_action_loader():
    spec = load_action(FIXTURES / "flip_diag_z2.act")
    act = spec.action()
    a = np.diag([1.0, 0.0])
    assert np.allclose(act.apply("g", a), np.diag([0.0, 1.0]))
