import numpy as np
import pytest

from qgdual.actions import (
    ActionError,
    CgAlgebra,
    action_bundle_report,
    action_by_unitaries,
    action_from_coaction,
    coaction_from_action,
    groupoid_crossed_iso,
    roundtrip_report,
    trivial_action,
    validate_action,
)
from qgdual.etale import comultiplication_coaction
from qgdual.groupoid import cyclic_group
from qgdual.opspace import onb_span
from qgdual.zoo import matrix_units

NAMES = ("conj_z2", "trivial_z2", "line_pair2", "scalar_pair2", "flip_diag_z2")


def _m2_over_z2():
    return CgAlgebra(cyclic_group(2), (onb_span(matrix_units(2, 2)),), "m2")


@pytest.mark.parametrize("name", NAMES)
def test_action_fixtures_validate(actions, name):
    assert validate_action(actions[name]).ok


@pytest.mark.parametrize("name", NAMES)
def test_round_trip_through_coaction(actions, name):
    rep = roundtrip_report(actions[name])
    assert rep.ok, rep.failures()
    assert rep.residual("sigma round trip") <= 1e-9


def test_recovered_action_matches_original_on_every_basis_element(actions):
    act = actions["conj_z2"]
    ac = coaction_from_action(act)
    back, _ = action_from_coaction(ac.coaction)
    # the recovered fiber is eta(M_2); sigma_g must be conjugation by the flip there
    flip = np.array([[0.0, 1.0], [1.0, 0.0]])
    for b in matrix_units(2, 2):
        assert np.allclose(back.apply("g", ac.gns.eta(0, b)), ac.gns.eta(0, flip @ b @ flip))


@pytest.mark.parametrize("name", NAMES)
def test_crossed_products_agree(actions, name):
    rep = groupoid_crossed_iso(actions[name])
    assert rep.ok, rep.failures()
    assert rep.residual("multiplicative") <= 1e-9


@pytest.mark.parametrize("name", ["conj_z2", "line_pair2"])
def test_action_bundle(actions, name):
    assert action_bundle_report(actions[name]).ok


def test_broken_cocycle_is_reported():
    # Ad(diag(1, i)) squares to Ad(diag(1, -1)), which is not the identity
    C = _m2_over_z2()
    act = action_by_unitaries(C, {"e": np.eye(2), "g": np.diag([1.0, 1j])})
    rep = validate_action(act)
    assert not rep.ok
    assert any(i.id.startswith("cocycle") for i in rep.failures())


def test_trivial_action_is_valid():
    assert validate_action(trivial_action(_m2_over_z2())).ok


def test_coaction_of_wrong_leg_is_refused(systems):
    with pytest.raises(ActionError):
        action_from_coaction(comultiplication_coaction(systems["z2"]))
