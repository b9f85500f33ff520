import dataclasses

import numpy as np
import pytest

from qgdual.etale import (
    ReconstructionError,
    assemble_bundle,
    bisection_space,
    comultiplication_coaction,
    conditional_expectation,
    is_bisection,
    reconstruction_dims,
    round_trip_eta,
    singleton_spaces,
    verify_reconstruction,
)
from qgdual.fell import bundle_coaction
from qgdual.opspace import equality_residual, onb_span

BUNDLES = ("line_z2", "line_z3", "line_pair2", "line_z2_z3", "matrix_trivial", "graded_z2", "rank12_pair2",
           "sparse_z2")


@pytest.mark.parametrize("name", ["z2", "z3", "z2_z3"])
def test_comultiplication_of_group_reconstructs_line_bundle(systems, name):
    sys = systems[name]
    co = comultiplication_coaction(sys)
    for x, f in zip(sys.G.arrows, singleton_spaces(co)):
        assert f.dim == 1
        assert equality_residual(f, onb_span([sys.L(x)])) < 1e-9


def test_expectation_keeps_unit_and_kills_other_group_elements(systems):
    sys = systems["z3"]
    p = conditional_expectation(comultiplication_coaction(sys))
    for x in sys.G.arrows:
        Lx = sys.L(x)
        if sys.G.is_unit(x):
            assert np.allclose(p(Lx), Lx)
        else:
            assert np.allclose(p(Lx), 0)


@pytest.mark.parametrize("name", BUNDLES)
def test_reconstructed_fibers_have_original_dimensions(bundles, name):
    F = bundles[name]
    dims = reconstruction_dims(bundle_coaction(F))
    assert dims == {x: f.dim for x, f in zip(F.G.arrows, F.fibers)}


@pytest.mark.parametrize("name", BUNDLES)
def test_reconstruction_and_eta(bundles, name):
    F = bundles[name]
    rep = verify_reconstruction(bundle_coaction(F))
    assert rep.ok, rep.failures()
    eta = round_trip_eta(F)
    assert eta.ok, eta.failures()
    assert eta.residual("iota eta = pi") <= 1e-9


def test_pair_groupoid_bisection_space_is_sum_of_singletons(bundles):
    co = bundle_coaction(bundles["line_pair2"])
    G = co.sys.G
    u1, u2 = G.units
    a12 = next(a for a in G.arrows if G.r[a] == u1 and G.s[a] == u2)
    a21 = G.inverse[a12]
    U = (a12, a21)
    assert is_bisection(G, U)
    both = bisection_space(co, U).space
    parts = [bisection_space(co, (x,)).space for x in U]
    assert both.dim == 2
    assert equality_residual(both, onb_span([b for p in parts for b in p.basis])) < 1e-9


def test_non_bisection_is_refused(bundles):
    co = bundle_coaction(bundles["line_pair2"])
    G = co.sys.G
    u1 = G.units[0]
    same_range = [x for x in G.arrows if G.r[x] == u1]
    assert not is_bisection(G, same_range)
    with pytest.raises(ReconstructionError):
        bisection_space(co, same_range)


def test_non_constant_weight_is_refused(systems):
    co = comultiplication_coaction(systems["pair2_mu"])
    with pytest.raises(ReconstructionError, match="constant weight"):
        assemble_bundle(co)


def test_coaction_that_is_not_very_fine_is_refused(systems):
    co = comultiplication_coaction(systems["z3"])
    bad = dataclasses.replace(co, table=co.table[[1, 2, 0]])
    with pytest.raises(ReconstructionError, match="not very fine"):
        assemble_bundle(bad)
