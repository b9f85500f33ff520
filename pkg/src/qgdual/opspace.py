"""Operator spaces: numerically closed linear spans of complex matrices.

Every bracketed span ``[X Y]`` of operators is represented by an
:class:`OperatorSpace`, which stores a Frobenius-orthonormal basis.
Rank decisions use one relative singular-value cutoff: a direction is
kept when its singular value exceeds ``tol * s_max``, or ``tol`` itself
when ``s_max`` is already below ``tol`` (a block of rounding noise has
rank zero).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

DEFAULT_TOL = 1e-9


def as_mat(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {a.shape}")
    return a


def rel_residual(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius distance of ``a`` and ``b`` relative to ``max(1, |a|, |b|)``."""
    scale = max(1.0, float(np.linalg.norm(a)), float(np.linalg.norm(b)))
    return float(np.linalg.norm(a - b)) / scale


def _row_basis(rows: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal basis (as rows) of the row space of ``rows``."""
    k, n = rows.shape
    if k == 0 or n == 0:
        return np.zeros((0, n), dtype=complex)
    if k > 2 * n:
        # shrink tall blocks to their triangular factor first; singular values are unchanged
        rows = np.linalg.qr(rows, mode="r")
    _, s, vh = np.linalg.svd(rows, full_matrices=False)
    top = s[0] if s.size and s[0] > tol else 1.0
    r = int(np.sum(s > tol * top))
    return vh[:r].copy()


class ConstraintStack:
    """Accumulates linear constraint rows as a small triangular factor.

    Keeps at most ``n`` rows, so long families of constraints never
    materialize, and avoids squaring singular values the way a Gram
    matrix would.
    """

    def __init__(self, n: int):
        self.n = n
        self.r = np.zeros((0, n), dtype=complex)

    def add(self, rows: np.ndarray) -> None:
        rows = np.asarray(rows, dtype=complex).reshape(-1, self.n)
        if rows.shape[0] == 0:
            return
        block = np.vstack([self.r, rows])
        self.r = np.linalg.qr(block, mode="r") if block.shape[0] > self.n else block

    def nullspace(self, tol: float) -> np.ndarray:
        return nullspace(self.r, tol)


@dataclass(frozen=True, eq=False)
class OperatorSpace:
    """A subspace of ``rows x cols`` complex matrices with an orthonormal basis."""

    rows: int
    cols: int
    basis: np.ndarray  # shape (dim, rows, cols)
    tol: float = DEFAULT_TOL

    @property
    def dim(self) -> int:
        return int(self.basis.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def __len__(self) -> int:
        return self.dim

    def __iter__(self):
        return iter(self.basis)

    def __repr__(self) -> str:
        return f"OperatorSpace({self.rows}x{self.cols}, dim={self.dim})"

    def flat(self) -> np.ndarray:
        return self.basis.reshape(self.dim, self.rows * self.cols)

    def coords(self, m) -> np.ndarray:
        """Coefficients of the orthogonal projection of ``m`` in the basis."""
        m = as_mat(m)
        return self.flat().conj() @ m.reshape(-1)

    def project(self, m) -> np.ndarray:
        c = self.coords(m)
        return (c @ self.flat()).reshape(self.rows, self.cols)

    def residual(self, m) -> float:
        """Distance from ``m`` to the space, relative to ``max(1, |m|)``."""
        m = as_mat(m)
        if m.shape != self.shape:
            raise ValueError(f"shape mismatch: {m.shape} vs {self.shape}")
        d = np.linalg.norm(m - self.project(m))
        return float(d) / max(1.0, float(np.linalg.norm(m)))

    def complement(self) -> "OperatorSpace":
        """Orthogonal complement inside all ``rows x cols`` matrices."""
        n = self.rows * self.cols
        if self.dim == 0:
            eye = np.eye(n, dtype=complex)
            return OperatorSpace(self.rows, self.cols, eye.reshape(n, self.rows, self.cols), self.tol)
        q = self.flat().T  # columns are vec(b) for the basis elements
        full, _ = np.linalg.qr(np.hstack([q, np.eye(n, dtype=complex)]))
        comp = full[:, self.dim:n].T
        return OperatorSpace(self.rows, self.cols, comp.reshape(-1, self.rows, self.cols), self.tol)


def zero_space(rows: int, cols: int, tol: float = DEFAULT_TOL) -> OperatorSpace:
    return OperatorSpace(rows, cols, np.zeros((0, rows, cols), dtype=complex), tol)


def full_space(rows: int, cols: int, tol: float = DEFAULT_TOL) -> OperatorSpace:
    n = rows * cols
    return OperatorSpace(rows, cols, np.eye(n, dtype=complex).reshape(n, rows, cols), tol)


def onb_span(mats: Iterable, tol: float = DEFAULT_TOL, shape: tuple[int, int] | None = None) -> OperatorSpace:
    """Orthonormal basis of the span of ``mats``.

    ``shape`` is only needed when ``mats`` may be empty.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(mats, np.ndarray) and mats.ndim == 3:
        arr = mats.astype(complex, copy=False)
    else:
        mats = [as_mat(m) for m in mats]
        if not mats:
            if shape is None:
                raise ValueError("empty input needs an explicit shape")
            return zero_space(*shape, tol=tol)
        shp = mats[0].shape
        for m in mats:
            if m.shape != shp:
                raise ValueError(f"shape mismatch: {m.shape} vs {shp}")
        arr = np.stack(mats)
    if shape is not None and arr.shape[1:] != tuple(shape):
        raise ValueError(f"shape mismatch: {arr.shape[1:]} vs {shape}")
    k, r, c = arr.shape
    if k == 0:
        return zero_space(r, c, tol)
    # rows of the returned block are vec() of an orthonormal basis
    basis = _row_basis(arr.reshape(k, r * c), tol)
    return OperatorSpace(r, c, basis.reshape(-1, r, c), tol)


def span_sum(*spaces: OperatorSpace) -> OperatorSpace:
    first = spaces[0]
    arr = np.concatenate([s.basis for s in spaces])
    if arr.shape[0] == 0:
        return zero_space(first.rows, first.cols, first.tol)
    return onb_span(arr, first.tol)


def space_product(x: OperatorSpace, y: OperatorSpace) -> OperatorSpace:
    """``[X Y]``: the span of all products."""
    if x.cols != y.rows:
        raise ValueError(f"shape mismatch: {x.shape} times {y.shape}")
    if x.dim == 0 or y.dim == 0:
        return zero_space(x.rows, y.cols, x.tol)
    prods = np.einsum("iab,jbc->ijac", x.basis, y.basis).reshape(-1, x.rows, y.cols)
    return onb_span(prods, x.tol)


def product_with(x: OperatorSpace, m, side: str = "right") -> OperatorSpace:
    """``[X m]`` (side='right') or ``[m X]`` (side='left') for a fixed matrix."""
    m = as_mat(m)
    if side == "right":
        prods = x.basis @ m
        shape = (x.rows, m.shape[1])
    else:
        prods = m @ x.basis
        shape = (m.shape[0], x.cols)
    if x.dim == 0:
        return zero_space(*shape, tol=x.tol)
    return onb_span(prods, x.tol)


def adjoint_space(x: OperatorSpace) -> OperatorSpace:
    if x.dim == 0:
        return zero_space(x.cols, x.rows, x.tol)
    return onb_span(np.conj(np.transpose(x.basis, (0, 2, 1))), x.tol)


def contains(x: OperatorSpace, m) -> bool:
    return x.residual(m) <= x.tol


def inclusion_residual(x: OperatorSpace, y: OperatorSpace) -> float:
    """Largest distance of a basis element of ``x`` from ``y``."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.dim == 0:
        return 0.0
    flat = x.flat()
    if y.dim:
        proj = (flat @ y.flat().conj().T) @ y.flat()
    else:
        proj = np.zeros_like(flat)
    return float(np.max(np.linalg.norm(flat - proj, axis=1)))


def equality_residual(x: OperatorSpace, y: OperatorSpace) -> float:
    return max(inclusion_residual(x, y), inclusion_residual(y, x))


def equal(x: OperatorSpace, y: OperatorSpace) -> bool:
    tol = max(x.tol, y.tol)
    return x.dim == y.dim and equality_residual(x, y) <= tol


def is_subspace(x: OperatorSpace, y: OperatorSpace) -> bool:
    return inclusion_residual(x, y) <= max(x.tol, y.tol)


def generate_star_algebra(mats: Sequence, tol: float = DEFAULT_TOL, n: int | None = None) -> OperatorSpace:
    """Smallest subspace containing ``mats`` that is closed under products and adjoints."""
    mats = [as_mat(m) for m in mats]
    if not mats:
        if n is None:
            raise ValueError("empty generator list needs the matrix size")
        return zero_space(n, n, tol)
    for m in mats:
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"generators must be square, got {m.shape}")
    s = onb_span(mats + [m.conj().T for m in mats], tol)
    gens = s
    while True:
        grown = span_sum(s, space_product(s, gens), space_product(gens, s))
        if grown.dim == s.dim:
            return s
        s = grown


def nullspace(a: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal columns spanning ``{v : a v = 0}`` under the relative cutoff."""
    a = np.asarray(a, dtype=complex)
    k, n = a.shape
    if k == 0:
        return np.eye(n, dtype=complex)
    if k > 2 * n:
        a = np.linalg.qr(a, mode="r")
    _, s, vh = np.linalg.svd(a, full_matrices=True)
    # pure rounding noise has rank zero rather than rank measured against its own scale
    top = s[0] if s.size and s[0] > tol else 1.0
    r = int(np.sum(s > tol * top))
    return vh[r:].conj().T


def _space_from_vectors(vecs: np.ndarray, rows: int, cols: int, tol: float) -> OperatorSpace:
    # vecs: (rows*cols) x k with orthonormal columns holding vec(T) (row-major)
    if vecs.shape[1] == 0:
        return zero_space(rows, cols, tol)
    return onb_span(vecs.T.reshape(-1, rows, cols), tol)


def commutant(mats: Sequence, n: int, tol: float = DEFAULT_TOL) -> OperatorSpace:
    """``{T : T s = s T for all s}`` inside n x n matrices."""
    mats = [as_mat(m) for m in mats]
    eye = np.eye(n, dtype=complex)
    cons = ConstraintStack(n * n)
    for s in mats:
        if s.shape != (n, n):
            raise ValueError(f"shape mismatch: {s.shape} vs {(n, n)}")
        # row-major vec: vec(T s) = (I kron s^T) vec T, vec(s T) = (s kron I) vec T
        cons.add(np.kron(eye, s.T) - np.kron(s, eye))
    return _space_from_vectors(cons.nullspace(tol), n, n, tol)


def induced_algebra(e: OperatorSpace, a: OperatorSpace) -> OperatorSpace:
    """``Ind_E(A) = {T : T E ⊆ [E A] and T* E ⊆ [E A]}`` for E ⊂ L(H, K), A ⊂ L(H)."""
    k, h = e.shape
    if a.shape != (h, h):
        raise ValueError(f"shape mismatch: E is {e.shape}, A is {a.shape}")
    tol = e.tol
    perp = space_product(e, a).complement()
    cons = ConstraintStack(k * k)
    if perp.dim:
        pflat = perp.flat()  # rows vec(p)
        for b in e.basis:
            # T b in [EA]  <=>  <p, T b> = 0 for all p in [EA]^perp;  vec(T b) = (I kron b^T) vec T
            cons.add(pflat.conj() @ np.kron(np.eye(k), b.T))
            # T* b in [EA]  <=>  <T p, b> = 0, i.e. sum_ij conj(b_ij) (T p)_ij = 0 (linear in T)
            cons.add(np.einsum("ij,pcj->pic", b.conj(), perp.basis).reshape(perp.dim, k * k))
    return _space_from_vectors(cons.nullspace(tol), k, k, tol)


def is_star_algebra(x: OperatorSpace) -> float:
    """Residual of closure under adjoint and product."""
    if x.dim == 0:
        return 0.0
    r1 = inclusion_residual(adjoint_space(x), x)
    prods = np.einsum("iab,jbc->ijac", x.basis, x.basis).reshape(-1, x.rows, x.cols)
    flat = prods.reshape(prods.shape[0], -1)
    proj = (flat @ x.flat().conj().T) @ x.flat()
    r2 = float(np.max(np.linalg.norm(flat - proj, axis=1))) if flat.size else 0.0
    return max(r1, r2)


# -- tensor legs ------------------------------------------------------------

def apply_legs(t: np.ndarray, legs: Sequence[int], dims: Sequence[int], vecs: np.ndarray) -> np.ndarray:
    """Apply ``t`` acting on the tensor factors ``legs`` (0-based) to the columns of ``vecs``.

    ``t`` acts on the product of the listed legs in the listed order.
    """
    dims = list(dims)
    legs = list(legs)
    m = vecs.shape[1]
    nl = len(dims)
    tens = vecs.reshape(dims + [m])
    rest = [i for i in range(nl) if i not in legs]
    perm = legs + rest + [nl]
    moved = np.transpose(tens, perm)
    lead = int(np.prod([dims[i] for i in legs]))
    if not sparse.issparse(t):
        t = np.asarray(t)
    if t.shape != (lead, lead):
        raise ValueError(f"operator shape {t.shape} does not match legs {legs} of dims {dims}")
    out = (t @ moved.reshape(lead, -1)).reshape(moved.shape)
    inv = np.argsort(perm)
    return np.transpose(out, inv).reshape(-1, m)


def embed_leg(t, legs: Sequence[int], dims: Sequence[int], proj: np.ndarray | None = None,
              tol: float = DEFAULT_TOL) -> np.ndarray:
    """Dense matrix of ``t`` placed on ``legs``, identity elsewhere, compressed by ``proj``.

    Raises ValueError when the graded subspace (range of ``proj``) is not
    invariant under the placed operator.
    """
    t = as_mat(t)
    n = int(np.prod(dims))
    full = apply_legs(t, legs, dims, np.eye(n, dtype=complex))
    if proj is None:
        return full
    proj = as_mat(proj)
    lhs = proj @ full @ proj
    rhs = full @ proj
    if rel_residual(lhs, rhs) > tol:
        raise ValueError("leg placement does not preserve graded subspace")
    return lhs


def swap_matrix(d1: int, d2: int) -> np.ndarray:
    """The flip ``x ⊗ y -> y ⊗ x`` from C^d1 ⊗ C^d2 to C^d2 ⊗ C^d1."""
    n = d1 * d2
    s = np.zeros((n, n))
    for i in range(d1):
        for j in range(d2):
            s[j * d1 + i, i * d2 + j] = 1.0
    return s


def check_linear_iso(src: Sequence, dst: Sequence, tol: float = DEFAULT_TOL) -> tuple[bool, int, int, int]:
    """Does ``src[i] -> dst[i]`` extend to a well-defined linear bijection of spans?

    True iff rank(src) = rank(dst) = rank of the joint system.
    """
    a = np.stack([np.asarray(s, dtype=complex).reshape(-1) for s in src])
    b = np.stack([np.asarray(d, dtype=complex).reshape(-1) for d in dst])
    na = max(1.0, float(np.abs(a).max()))
    nb = max(1.0, float(np.abs(b).max()))
    ra = _row_basis(a, tol).shape[0]
    rb = _row_basis(b, tol).shape[0]
    rj = _row_basis(np.hstack([a / na, b / nb]), tol).shape[0]
    return (ra == rb == rj), ra, rb, rj
