"""C*-bases over C^{units}, C*-b-modules and relative tensor products.

A module is a closed subspace ``alpha`` of operators from the base space
K = C^{units} into a Hilbert space H. Its grading projections
``P_u`` project onto ``[alpha e_u K]``. Relative tensor products are
realized inside the full tensor product as the range of
``sum_u P_u (x) Q_u``; every module built by this package is graded by
coordinates, so that range is spanned by selected basis vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .opspace import (
    DEFAULT_TOL,
    OperatorSpace,
    as_mat,
    equality_residual,
    onb_span,
    rel_residual,
    space_product,
    adjoint_space,
    swap_matrix,
)


class ModuleAxiomError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CStarBase:
    """The commutative base: K = C^{units}, with B = B† = diagonal matrices."""

    units: tuple

    @property
    def dim(self) -> int:
        return len(self.units)

    def algebra(self, tol: float = DEFAULT_TOL) -> OperatorSpace:
        k = self.dim
        return onb_span([np.diag(np.eye(k)[u]) for u in range(k)], tol, shape=(k, k))


@dataclass(frozen=True, eq=False)
class CbModule:
    """A C*-b-module ``(H, alpha)`` with ``alpha`` inside L(K, H)."""

    space: OperatorSpace
    tol: float = DEFAULT_TOL

    @property
    def H_dim(self) -> int:
        return self.space.rows

    @property
    def n_units(self) -> int:
        return self.space.cols

    @cached_property
    def projections(self) -> np.ndarray:
        """Stack of P_u, shape (units, H, H)."""
        out = []
        for u in range(self.n_units):
            cols = self.space.basis[:, :, u].T  # H x dim
            if cols.size == 0:
                out.append(np.zeros((self.H_dim, self.H_dim), dtype=complex))
                continue
            q, s, _ = np.linalg.svd(cols, full_matrices=False)
            top = s[0] if s.size and s[0] > self.tol else 1.0
            q = q[:, s > self.tol * top]
            out.append(q @ q.conj().T)
        return np.array(out).reshape(self.n_units, self.H_dim, self.H_dim)

    @cached_property
    def labels(self) -> np.ndarray | None:
        """Unit index of each coordinate when all P_u are coordinate projections, else None."""
        p = self.projections
        diag = np.real(np.einsum("uii->ui", p))
        off = p - np.einsum("ui,ij->uij", diag, np.eye(self.H_dim))
        if np.abs(off).max(initial=0.0) > 1e-12 or np.abs(diag * (1 - diag)).max(initial=0.0) > 1e-12:
            return None
        if not np.allclose(diag.sum(axis=0), 1.0):
            return None
        return np.argmax(diag, axis=0)

    def rho(self, f) -> np.ndarray:
        """Representation of the base algebra: diag(f) -> sum_u f(u) P_u."""
        f = np.asarray(f, dtype=complex).reshape(-1)
        return np.einsum("u,uij->ij", f, self.projections)

    def grading_projections(self) -> list[np.ndarray]:
        p = list(self.projections)
        total = sum(p) if p else np.zeros((self.H_dim, self.H_dim))
        if rel_residual(total, np.eye(self.H_dim)) > 1e-8:
            raise ModuleAxiomError("module axioms violated: grading projections do not sum to 1")
        for a in range(len(p)):
            for b in range(a + 1, len(p)):
                if np.linalg.norm(p[a] @ p[b]) > 1e-8:
                    raise ModuleAxiomError("module axioms violated: grading projections not orthogonal")
        return p

    def axiom_residuals(self) -> dict[str, float]:
        """Residuals of [alpha K] = H, [alpha B] = alpha, [alpha* alpha] = B and of rho."""
        k = self.n_units
        base = CStarBase(tuple(range(k))).algebra(self.tol)
        cols = np.concatenate([b for b in self.space.basis], axis=1) if self.space.dim else np.zeros((self.H_dim, 0))
        rank = np.linalg.matrix_rank(cols, tol=1e-9) if cols.size else 0
        ab = space_product(self.space, base)
        aa = space_product(adjoint_space(self.space), self.space)
        rho_res = 0.0
        for u in range(k):
            e = np.zeros((k, k))
            e[u, u] = 1.0
            for xi in self.space.basis:
                rho_res = max(rho_res, rel_residual(self.projections[u] @ xi, xi @ e))
        return {
            "[alpha K] = H": float(self.H_dim - rank),
            "[alpha B] = alpha": equality_residual(ab, self.space),
            "[alpha* alpha] = B": equality_residual(aa, base),
            "rho(b)(xi z) = xi b z": rho_res,
        }

    def check(self) -> None:
        for name, r in self.axiom_residuals().items():
            if r > 1e-8:
                raise ModuleAxiomError(f"module axioms violated: {name} (residual {r:.2e})")


def graded_module(labels: Sequence[int], n_units: int, tol: float = DEFAULT_TOL) -> CbModule:
    """The module spanned by |e_i><e_{labels[i]}|, graded by coordinates."""
    labels = np.asarray(labels, dtype=int)
    h = labels.size
    mats = np.zeros((h, h, n_units), dtype=complex)
    mats[np.arange(h), np.arange(h), labels] = 1.0
    return CbModule(OperatorSpace(h, n_units, mats, tol), tol)


def _need_labels(m: CbModule) -> np.ndarray:
    lab = m.labels
    if lab is None:
        raise ValueError("relative tensor products need a grading diagonal in the working basis")
    return lab


@dataclass(frozen=True, eq=False)
class RelTensor:
    """``H (x)_b K`` for modules ``left`` on H and ``right`` on K.

    ``coords`` lists the (i, j) basis pairs with equal grading; ``W`` is
    the ambient-by-dim selection matrix whose columns are an orthonormal
    basis of the graded subspace.
    """

    left: CbModule
    right: CbModule

    def __post_init__(self):
        if self.left.n_units != self.right.n_units:
            raise ValueError("modules live over different bases")

    @property
    def dims(self) -> tuple[int, int]:
        return (self.left.H_dim, self.right.H_dim)

    @property
    def ambient(self) -> int:
        return self.dims[0] * self.dims[1]

    @cached_property
    def mask(self) -> np.ndarray:
        a, b = _need_labels(self.left), _need_labels(self.right)
        return (a[:, None] == b[None, :]).reshape(-1)

    @cached_property
    def index(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def dim(self) -> int:
        return int(self.index.size)

    @cached_property
    def W(self) -> np.ndarray:
        w = np.zeros((self.ambient, self.dim), dtype=complex)
        w[self.index, np.arange(self.dim)] = 1.0
        return w

    @cached_property
    def P(self) -> np.ndarray:
        return np.diag(self.mask.astype(complex))

    def dense_projection(self) -> np.ndarray:
        """sum_u P_u (x) Q_u computed from the grading projections."""
        pl, pr = self.left.projections, self.right.projections
        return sum(np.kron(pl[u], pr[u]) for u in range(self.left.n_units))

    def embed(self, xi, zeta, eta) -> np.ndarray:
        """Elementary tensor xi > zeta < eta = sum_u zeta(u) (xi e_u) (x) (eta e_u)."""
        xi, eta = as_mat(xi), as_mat(eta)
        zeta = np.asarray(zeta, dtype=complex).reshape(-1)
        return sum(zeta[u] * np.kron(xi[:, u], eta[:, u]) for u in range(zeta.size))

    def ket1(self, xi) -> np.ndarray:
        """|xi>_1 : K -> H (x)_b K, omega -> xi > omega (ambient columns)."""
        xi = as_mat(xi)
        pr = self.right.projections
        return sum(np.kron(xi[:, [u]], pr[u]) for u in range(xi.shape[1]))

    def ket2(self, eta) -> np.ndarray:
        """|eta>_2 : H -> H (x)_b K, omega -> omega < eta."""
        eta = as_mat(eta)
        pl = self.left.projections
        return sum(np.kron(pl[u], eta[:, [u]]) for u in range(eta.shape[1]))

    def bra1(self, xi) -> np.ndarray:
        return self.ket1(xi).conj().T

    def bra2(self, eta) -> np.ndarray:
        return self.ket2(eta).conj().T

    def opposite(self) -> "RelTensor":
        return RelTensor(self.right, self.left)

    def flip(self) -> np.ndarray:
        """The flip onto the opposite product, as an ambient partial isometry."""
        h, k = self.dims
        return swap_matrix(h, k) @ self.P

    def left_space(self, x: OperatorSpace) -> OperatorSpace:
        """x > right-module space ``[|x>_1 gamma]``."""
        return onb_span([self.ket1(a) @ b for a in x.basis for b in self.right.space.basis],
                        self.left.tol, shape=(self.ambient, self.left.n_units))

    def right_space(self, y: OperatorSpace) -> OperatorSpace:
        """left-module space < y ``[|y>_2 beta]``."""
        return onb_span([self.ket2(b) @ a for b in y.basis for a in self.left.space.basis],
                        self.left.tol, shape=(self.ambient, self.left.n_units))


def rtp(left: CbModule, right: CbModule) -> RelTensor:
    return RelTensor(left, right)


def tri(a: OperatorSpace, side: str, b: OperatorSpace, t: RelTensor) -> OperatorSpace:
    """``a ▷ b = [|a>_1 b]`` (side '>') or ``a ◁ b = [|b>_2 a]`` (side '<') on ``t``.

    The ket uses the structure of ``t``; ``a`` and ``b`` are only the
    spanning families.
    """
    k = t.left.n_units
    if side == ">":
        mats = [t.ket1(x) @ y for x in a.basis for y in b.basis]
    elif side == "<":
        mats = [t.ket2(y) @ x for y in b.basis for x in a.basis]
    else:
        raise ValueError("side must be '>' or '<'")
    return onb_span(mats, t.left.tol, shape=(t.ambient, k))


@dataclass(frozen=True, eq=False)
class TripleTensor:
    """Graded subspace of H1 (x) H2 (x) H3 cut out by two pairwise gradings.

    Legs 1 and 2 are glued along (m1, m2_left), legs 2 and 3 along
    (m2_right, m3); the middle factor carries two module structures.
    """

    l1: np.ndarray
    l2a: np.ndarray
    l2b: np.ndarray
    l3: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.l1.size, self.l2a.size, self.l3.size)

    @cached_property
    def index(self) -> np.ndarray:
        m = (self.l1[:, None, None] == self.l2a[None, :, None]) & (self.l2b[None, :, None] == self.l3[None, None, :])
        return np.flatnonzero(m.reshape(-1))

    @property
    def dim(self) -> int:
        return int(self.index.size)

    @cached_property
    def W(self) -> np.ndarray:
        n = int(np.prod(self.dims))
        w = np.zeros((n, self.dim), dtype=complex)
        w[self.index, np.arange(self.dim)] = 1.0
        return w

    def iterated_dims(self) -> tuple[int, int]:
        """Dimension via (H1 (x) H2) (x) H3 and via H1 (x) (H2 (x) H3)."""
        c1 = np.array([(self.l1 == a).sum() for a in self.l2a])
        c3 = np.array([(self.l3 == b).sum() for b in self.l2b])
        left_first = int(np.sum(c1 * c3))
        inner = [(j, k) for j in range(self.l2a.size) for k in range(self.l3.size) if self.l2b[j] == self.l3[k]]
        right_first = sum(int((self.l1 == self.l2a[j]).sum()) for j, _ in inner)
        return left_first, right_first


def triple_rtp(m1: CbModule, m2_left: CbModule, m2_right: CbModule, m3: CbModule) -> TripleTensor:
    t = TripleTensor(_need_labels(m1), _need_labels(m2_left), _need_labels(m2_right), _need_labels(m3))
    a, b = t.iterated_dims()
    if not (a == b == t.dim):
        raise ValueError("triple relative tensor product is not associative (bug)")
    return t


def triple_from_labels(l1, l2a, l2b, l3) -> TripleTensor:
    as_i = lambda v: np.asarray(v, dtype=int)
    return TripleTensor(as_i(l1), as_i(l2a), as_i(l2b), as_i(l3))
