import numpy as np
import pytest

from qgdual import zoo
from qgdual.groupoid import pair_groupoid, weight
from qgdual.kac import (
    L_raw,
    U_raw,
    build_system,
    comult_hat,
    jhat_raw,
    legs_report,
    mutate,
    raw_to_on,
    swap_columns,
    verify_kac,
    verify_leg_identities,
    verify_pmu,
)
from qgdual.opspace import rel_residual

SMALL = ("trivial", "z2", "z3", "pair2", "z2_z3", "trans_z2", "pair2_mu", "z2_z3_mu", "trans_z2_mu")


def convolution_oracle(G):
    """Rank of {L(delta_a)} built from the composition table alone."""
    n = G.n
    pos = {x: i for i, x in enumerate(G.arrows)}
    mats = []
    for a in G.arrows:
        m = np.zeros((n, n))
        for (x, y), xy in G.compose.items():
            if x == a:
                m[pos[xy], pos[y]] = 1.0
        mats.append(m.ravel())
    return np.linalg.matrix_rank(np.array(mats))


def test_V_sends_composable_pairs_to_products(systems):
    sys = systems["z3"]
    G, n = sys.G, sys.n
    for (a, b), ab in G.compose.items():
        v = np.zeros(n * n)
        v[G.index[a] * n + G.index[b]] = 1.0
        w = np.zeros(n * n)
        w[G.index[a] * n + G.index[ab]] = 1.0
        assert np.array_equal(sys.V @ v, w)


def test_V_kills_non_composable_pairs(systems):
    sys = systems["pair2"]
    G, n = sys.G, sys.n
    for a in G.arrows:
        for b in G.arrows:
            if G.s[a] != G.r[b]:
                v = np.zeros(n * n)
                v[G.index[a] * n + G.index[b]] = 1.0
                assert not np.any(sys.V @ v)


def test_U_is_inversion(systems):
    sys = systems["pair2"]
    G = sys.G
    for x in G.arrows:
        assert sys.U[G.index[G.inverse[x]], G.index[x]] == 1.0
    assert np.array_equal(sys.U @ sys.U, np.eye(sys.n))


@pytest.mark.parametrize("name", ["pair2_mu", "trans_z2_mu", "z2_z3_mu"])
def test_raw_formulas_agree_with_orthonormal_operators(systems, name):
    sys = systems[name]
    G, w = sys.G, sys.w
    assert rel_residual(raw_to_on(w, U_raw(G, w)), sys.U) < 1e-12
    for a in G.arrows:
        delta = np.eye(G.n)[G.index[a]]
        assert rel_residual(raw_to_on(w, L_raw(G, w, delta)), sys.L(a)) < 1e-12


@pytest.mark.parametrize("name", SMALL)
def test_pseudo_multiplicative_and_kac_identities(systems, name):
    sys = systems[name]
    for rep in (verify_pmu(sys), verify_kac(sys)):
        assert rep.ok, rep.failures()
        assert all(i.residual <= 1e-9 for i in rep.items)


def test_hat_equals_op_to_machine_precision(systems):
    for sys in systems.values():
        assert rel_residual(sys.V_hat, sys.V_op) <= 1e-12


def _composable_columns(sys):
    G, n = sys.G, sys.n
    return [G.index[a] * n + G.index[b] for (a, b) in sorted(G.compose)]


@pytest.mark.parametrize("name", ["z2", "z3", "pair2", "trans_z2_mu"])
def test_transposition_in_V_is_detected(systems, name):
    sys = systems[name]
    cols = _composable_columns(sys)
    bad = mutate(sys, V=swap_columns(sys.V, cols[0], cols[-1]))
    assert not (verify_pmu(bad).ok and verify_kac(bad).ok)


@pytest.mark.parametrize("name", ["z3", "pair2", "z2_z3"])
def test_transposition_in_U_is_detected(systems, name):
    sys = systems[name]
    bad = mutate(sys, U=swap_columns(sys.U, 0, sys.n - 1))
    assert not verify_kac(bad).ok


def test_legs_dimensions_against_convolution_oracle(groupoids):
    for name in ("trivial", "z2", "z3", "s3", "pair2", "pair3", "z2_z3", "trans_z2"):
        G = groupoids[name]
        sys = build_system(G)
        hat, low = sys.leg_algebras
        assert hat.dim == G.n
        assert low.dim == convolution_oracle(G)


@pytest.mark.parametrize("k", [2, 3])
def test_pair_groupoid_leg_is_full_matrix_algebra(k, groupoids):
    sys = build_system(groupoids[f"pair{k}"])
    assert sys.leg_algebras[1].dim == k * k


def test_group_leg_has_group_order(groupoids):
    for name in ("z2", "z3", "s3"):
        G = groupoids[name]
        assert build_system(G).leg_algebras[1].dim == G.n


def test_comult_hat_on_delta_functions_is_pointwise_product(systems):
    sys = systems["z2_z3"]
    G, n = sys.G, sys.n
    for g in G.arrows:
        f = np.eye(n)[G.index[g]]
        d = np.diag(comult_hat(sys, np.diag(f)))
        for x in G.arrows:
            for y in G.arrows:
                xy = G.compose.get((x, y))
                expect = 0.0 if xy is None else f[G.index[xy]]
                assert d[G.index[x] * n + G.index[y]] == expect


@pytest.mark.parametrize("name", ["z3", "pair2_mu", "z2_z3"])
def test_legs_and_leg_identities(systems, name):
    sys = systems[name]
    assert legs_report(sys).ok
    assert verify_leg_identities(sys).ok


def test_skewed_weight_changes_raw_but_not_orthonormal_V():
    G = zoo.groupoids()["pair2"]
    flat, skew = build_system(G), build_system(G, zoo.skewed_weight(G))
    assert np.array_equal(flat.V, skew.V)
    assert not np.allclose(U_raw(G, skew.w), U_raw(G, flat.w))


def test_weighted_pair_groupoid_factors_in_delta_coordinates():
    # mu = (1, 4): D((1,2)) = mu(1)/mu(2) = 1/4
    G = pair_groupoid(2)
    w = weight(G, {"(1,1)": 1.0, "(2,2)": 4.0})
    a, b = G.index["(1,2)"], G.index["(2,1)"]
    assert U_raw(G, w)[b, a] == pytest.approx(0.5)
    assert jhat_raw(G, w, "(1,2)")[a, G.unit_index["(2,2)"]] == pytest.approx(2.0)
    # norms of delta functions are mu(r(x)); U must preserve them
    norm2 = np.array([w.mu_vec()[G.unit_index[G.r[x]]] for x in G.arrows])
    for x in G.arrows:
        d = np.eye(G.n)[G.index[x]]
        Ud = U_raw(G, w) @ d
        assert np.sum(norm2 * Ud ** 2) == pytest.approx(norm2[G.index[x]])
