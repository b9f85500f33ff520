import dataclasses

import numpy as np
import pytest

from qgdual.coaction import (
    CoactionError,
    bidual_duality_check,
    coaction_from_rep,
    crossed_product_dual,
    flags,
    verify_coaction,
)
from qgdual.etale import comultiplication_coaction
from qgdual.fell import bundle_coaction


@pytest.mark.parametrize("name", ["z2", "z3", "pair2", "z2_z3"])
def test_comultiplication_is_a_very_fine_coaction(systems, name):
    co = comultiplication_coaction(systems[name])
    rep = verify_coaction(co)
    assert rep.ok, rep.failures()
    f = flags(rep)
    assert f["injective"] and f["left-full"] and f["very fine"]


def test_delta_of_group_element_is_diagonal_tensor(systems):
    sys = systems["z3"]
    co = comultiplication_coaction(sys)
    P = co.carrier.P
    for g in sys.G.arrows:
        Lg = sys.L(g)
        assert np.allclose(co.delta(Lg), P @ np.kron(Lg, Lg) @ P)


@pytest.mark.parametrize("name", ["z2", "z3"])
def test_crossed_product_of_group_comultiplication_is_all_matrices(systems, name):
    # [Δ(C*r G)(1 ⊗ C0(G))] is the compacts on L²(G)
    sys = systems[name]
    cp = crossed_product_dual(comultiplication_coaction(sys))
    assert cp.report.ok
    assert cp.algebra.dim == sys.n ** 2


def test_crossed_product_of_line_bundle_over_pair_groupoid(bundles):
    co = bundle_coaction(bundles["line_pair2"])
    cp = crossed_product_dual(co)
    assert cp.report.ok
    # generators delta(c_x)(1 ⊗ delta_y) for composable (x, y)
    G = co.sys.G
    assert cp.algebra.dim == sum(1 for x in G.arrows for y in G.arrows if G.s[x] == G.r[y])


@pytest.mark.parametrize("name", ["line_z2", "graded_z2", "matrix_trivial"])
def test_biduality(bundles, name):
    rep = bidual_duality_check(bundle_coaction(bundles[name]))
    assert rep.ok, rep.failures()
    assert rep.residual("dim bidual = dim target") == 0.0


def test_scrambled_table_is_not_a_coaction(systems):
    co = comultiplication_coaction(systems["z3"])
    bad = dataclasses.replace(co, table=co.table[[1, 2, 0]])
    assert not verify_coaction(bad).ok


def test_non_representation_is_refused(systems):
    sys = systems["z2"]
    _, A = sys.leg_algebras
    X = np.eye(sys.n * sys.n)[::-1]
    with pytest.raises(CoactionError):
        coaction_from_rep(X, A, sys, sys.r, sys.s)


def test_crossed_product_needs_the_right_leg(systems):
    co = comultiplication_coaction(systems["z2"])
    with pytest.raises(CoactionError):
        crossed_product_dual(dataclasses.replace(co, leg="A_hat"))
