import numpy as np
import pytest

from qgdual.opspace import (
    ConstraintStack,
    commutant,
    equality_residual,
    generate_star_algebra,
    induced_algebra,
    inclusion_residual,
    is_star_algebra,
    nullspace,
    onb_span,
    space_product,
    zero_space,
)


def test_span_dimension_matches_numpy_rank(rng):
    mats = [rng.normal(size=(3, 3)) for _ in range(4)]
    mats.append(mats[0] + 2 * mats[1])
    sp = onb_span(mats)
    assert sp.dim == np.linalg.matrix_rank(np.array([m.reshape(-1) for m in mats]))
    gram = sp.flat().conj() @ sp.flat().T
    assert np.allclose(gram, np.eye(sp.dim))


def test_span_contains_its_generators(rng):
    mats = [rng.normal(size=(2, 3)) + 1j * rng.normal(size=(2, 3)) for _ in range(3)]
    sp = onb_span(mats)
    assert max(sp.residual(m) for m in mats) < 1e-12


def test_rounding_noise_has_rank_zero():
    noise = np.full((8, 4), 1e-16)
    assert nullspace(noise, 1e-9).shape[1] == 4
    assert onb_span([np.full((2, 2), 3e-17)]).dim == 0


def test_tiny_but_genuine_directions_survive_relative_cutoff():
    a = np.diag([1.0, 1e-6, 0.0])
    assert nullspace(a, 1e-9).shape[1] == 1


def test_constraint_stack_agrees_with_direct_nullspace(rng):
    rows = [rng.normal(size=(5, 6)) for _ in range(3)]
    stack = ConstraintStack(6)
    for r in rows:
        stack.add(r)
    direct = nullspace(np.vstack(rows))
    assert stack.nullspace(1e-9).shape == direct.shape == (6, 0)
    stack = ConstraintStack(6)
    stack.add(rows[0][:2])
    assert stack.nullspace(1e-9).shape[1] == 4


def test_commutant_of_diagonal_matrix_is_diagonal():
    d = np.diag([1.0, 2.0, 3.0])
    com = commutant([d], 3)
    assert com.dim == 3
    assert all(np.allclose(b, np.diag(np.diag(b))) for b in com.basis)


def test_generated_star_algebra_of_a_matrix_unit_is_all_of_m2():
    e12 = np.array([[0.0, 1.0], [0.0, 0.0]])
    alg = generate_star_algebra([e12], n=2)
    assert alg.dim == 4
    assert is_star_algebra(alg) < 1e-12


def test_non_algebra_is_detected():
    sp = onb_span([np.array([[0.0, 1.0], [0.0, 0.0]])])
    assert is_star_algebra(sp) > 0.5


def test_products_and_inclusions():
    diag = onb_span([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    off = onb_span([np.array([[0.0, 1.0], [1.0, 0.0]])])
    prod = space_product(off, off)
    assert inclusion_residual(prod, diag) < 1e-12
    assert inclusion_residual(diag, prod) > 0.5
    assert equality_residual(zero_space(2, 2), zero_space(2, 2)) == 0.0


def test_shape_mismatch_is_rejected():
    with pytest.raises(ValueError):
        onb_span([np.eye(2), np.eye(3)])
    with pytest.raises(ValueError):
        onb_span([], shape=None)


def test_induced_algebra_of_a_single_vector_is_diagonal():
    e = onb_span([np.array([[1.0], [0.0]])])
    a = onb_span([np.ones((1, 1))])
    ind = induced_algebra(e, a)
    # brute force over the four matrix units: T e1 and T* e1 must stay in span e1
    keep = []
    for i in range(2):
        for j in range(2):
            t = np.zeros((2, 2))
            t[i, j] = 1.0
            if t[1, 0] == 0 and t.T[1, 0] == 0:
                keep.append(t)
    assert ind.dim == len(keep) == 2
    assert equality_residual(ind, onb_span(keep)) < 1e-12
    assert is_star_algebra(ind) < 1e-12
