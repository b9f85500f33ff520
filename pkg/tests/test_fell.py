import numpy as np
import pytest

from qgdual.fell import (
    BundleMorphism,
    MorphismError,
    apply_morphism,
    bundle_coaction_report,
    bundle_from_mats,
    convolve,
    crossed_product_iso,
    gamma2_report,
    identity_morphism,
    is_saturated,
    line_identification_report,
    random_section,
    reduced_algebra,
    reduced_report,
    validate_bundle,
    weights_and_rep,
)
from qgdual.zoo import skewed_weight, unit

ADMISSIBLE = ("line_z2", "line_z3", "line_pair2", "line_z2_z3", "matrix_trivial", "graded_z2", "rank12_pair2",
              "sparse_z2")


@pytest.mark.parametrize("name", ["z2", "z3", "pair2", "z2_z3", "trans_z2"])
def test_line_bundle_reproduces_reduced_groupoid_algebra(groupoids, name):
    rep = line_identification_report(groupoids[name])
    assert rep.ok, rep.failures()
    assert all(i.residual <= 1e-9 for i in rep.items)


def test_line_identification_with_skewed_weight(groupoids):
    G = groupoids["pair2"]
    assert line_identification_report(G, skewed_weight(G)).ok


def test_every_bundle_fixture_validates(bundles):
    for name, F in bundles.items():
        assert validate_bundle(F).ok, name


def test_fiber_not_closed_under_adjoint_is_rejected(groupoids):
    G = groupoids["z2"]
    F = bundle_from_mats(G, {"e": [unit(0, 0, 2, 2), unit(1, 1, 2, 2)], "g": [unit(0, 1, 2, 2)]})
    rep = validate_bundle(F)
    assert not rep.ok
    assert {i.id for i in rep.failures()} >= {"involution"}


def test_saturation(bundles):
    assert is_saturated(bundles["graded_z2"])
    assert is_saturated(bundles["rank12_pair2"])
    assert not is_saturated(bundles["sparse_z2"])


def test_convolution_on_graded_z2_is_matrix_product(bundles, rng):
    # C*(F) for the M_2 grading by Z/2 is M_2 itself, with c ↦ c(e) + c(g)
    F = bundles["graded_z2"]
    c, d = random_section(F, rng), random_section(F, rng)
    cd = convolve(F, c, d)
    assert np.allclose(cd[0] + cd[1], (c[0] + c[1]) @ (d[0] + d[1]))


@pytest.mark.parametrize("name", ADMISSIBLE)
def test_reduced_algebra_has_dimension_of_sections(bundles, name):
    F = bundles[name]
    assert gamma2_report(F).ok
    assert reduced_report(F).ok
    assert reduced_algebra(F).dim == sum(f.dim for f in F.fibers)


@pytest.mark.parametrize("name", ADMISSIBLE)
def test_bundle_coaction_is_very_fine_and_left_full(bundles, name):
    rep, _, _ = bundle_coaction_report(bundles[name])
    assert rep.ok, rep.failures()


@pytest.mark.parametrize("name", ["line_z3", "line_pair2", "graded_z2", "rank12_pair2"])
def test_crossed_product_isomorphism(bundles, name):
    rep = crossed_product_iso(bundles[name])
    assert rep.ok, rep.failures()
    assert rep.residual("multiplicative") <= 1e-9


def test_identity_is_an_equivariant_morphism(bundles):
    rep = apply_morphism(identity_morphism(bundles["graded_z2"]))
    assert rep.ok, rep.failures()


def test_scaling_is_not_a_morphism(bundles):
    F = bundles["graded_z2"]
    T = BundleMorphism(F, F, tuple(2.0 * f.basis for f in F.fibers))
    with pytest.raises(MorphismError):
        apply_morphism(T)


def test_weights_give_faithful_representation(bundles):
    F = bundles["rank12_pair2"]
    rep = weights_and_rep(F)
    assert np.linalg.matrix_rank(np.array([m.ravel() for m in rep.pi_basis])) == len(F.section_basis)
