import dataclasses

import pytest

from qgdual.groupoid import (
    FiniteGroupoid,
    GroupoidFormatError,
    cocycle_residual,
    cyclic_group,
    group_bundle,
    pair_groupoid,
    parse_groupoid,
    serialize,
    symmetric_group,
    to_json,
    transformation_groupoid,
    validate,
    weight,
)

Z2_TEXT = """\
units: e
arrows:
  e e e
  g e e
compose:
  e e -> e
  e g -> g
  g e -> g
  g g -> e
inverse:
  e -> e
  g -> g
"""


def test_fixture_groupoids_satisfy_the_axioms(groupoids):
    for name, G in groupoids.items():
        assert validate(G) == [], name


def test_sizes_of_standard_groupoids():
    assert len(pair_groupoid(3)) == 9 and len(pair_groupoid(3).units) == 3
    assert len(symmetric_group(3)) == 6
    assert len(group_bundle([2, 3])) == 5 and len(group_bundle([2, 3]).units) == 2


def test_pair_groupoid_composition_by_hand():
    G = pair_groupoid(2)
    assert G.mul("(1,2)", "(2,1)") == "(1,1)"
    assert G.mul("(1,2)", "(1,2)") is None
    assert G.inv("(1,2)") == "(2,1)"


def test_transformation_groupoid_of_z2_has_one_arrow_per_composable_pair():
    G = cyclic_group(2)
    T = transformation_groupoid(G)
    assert len(T) == 4 and len(T.units) == 2
    assert validate(T) == []


def test_text_format_round_trip(groupoids):
    for G in groupoids.values():
        H, mu = parse_groupoid(serialize(G))
        assert H.same(G) and mu is None
        H2, _ = parse_groupoid(to_json(G))
        assert H2.same(G)


def test_parse_by_hand_matches_constructor():
    G, _ = parse_groupoid(Z2_TEXT)
    assert G.mul("g", "g") == "e"
    assert validate(G) == []


def test_mu_section_round_trips():
    G = pair_groupoid(2)
    mu = {"(1,1)": 1.0, "(2,2)": 2.5}
    H, mu2 = parse_groupoid(serialize(G, mu))
    assert mu2 == mu


@pytest.mark.parametrize("edit, message", [
    (lambda t: t.replace("  g g -> e\n", ""), "incomplete"),
    (lambda t: t.replace("  g e e\n", "  g e e\n  g e e\n"), "duplicate arrow"),
    (lambda t: t.replace("units: e", "units: e e"), "duplicate unit"),
    (lambda t: t.replace("  g -> g\n", ""), "inverse of 'g' missing"),
    (lambda t: t.replace("compose:", "compose:\n  e q -> e"), "unknown arrow"),
])
def test_malformed_files_are_rejected(edit, message):
    with pytest.raises(GroupoidFormatError) as exc:
        parse_groupoid(edit(Z2_TEXT))
    assert message in str(exc.value)


def test_errors_carry_line_numbers():
    with pytest.raises(GroupoidFormatError) as exc:
        parse_groupoid(Z2_TEXT.replace("  g g -> e", "  g g e"))
    assert exc.value.line == 9


def test_broken_associativity_is_reported():
    G = cyclic_group(3)
    comp = dict(G.compose)
    x, y = G.arrows[1], G.arrows[2]
    comp[(x, x)] = x  # g g -> g breaks the group law
    bad = dataclasses.replace(G, compose=comp)
    assert validate(bad)


def test_cocycle_of_a_weight():
    G = pair_groupoid(3)
    w = weight(G, [1.0, 2.0, 5.0])
    assert cocycle_residual(w) < 1e-15
    assert w.D("(1,2)") == pytest.approx(0.5)
    with pytest.raises(ValueError):
        weight(G, [1.0, -1.0, 1.0])


def test_unit_that_is_not_an_arrow_is_reported():
    G = FiniteGroupoid(("e",), ("u",), {"e": "u"}, {"e": "u"}, {("e", "e"): "e"}, {"e": "e"})
    assert validate(G)
