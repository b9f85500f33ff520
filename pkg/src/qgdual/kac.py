"""The pseudo-Kac system (V, U) of a finite groupoid and its verification.

Working coordinates: H = C^G with orthonormal basis e_x = delta_x / sqrt(mu(r(x)))
and K = C^{units} with e_u = delta_u / sqrt(mu(u)). In these bases every
operator below is a partial permutation:

    j(delta_x)  = |e_x><e_{r(x)}|        (alpha = beta)
    jh(delta_x) = |e_x><e_{s(x)}|        (alpha_hat = beta_hat)
    V e_a (x) e_b = e_a (x) e_{ab}       for s(a) = r(b)
    U e_x = e_{x^-1}
    L(delta_a) e_b = e_{ab}

The ``*_raw`` helpers give the same operators in the unnormalized delta
coordinates, where the weight mu shows up as powers of D.

Unitaries between relative tensor products are stored as partial
isometries on the full tensor product H (x) H. Identities are compared
on an orthonormal basis of the relevant graded subspace.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .base import CbModule, RelTensor, graded_module, tri, triple_from_labels
from .groupoid import FiniteGroupoid, QuasiInvariantWeight, weight
from .opspace import (
    DEFAULT_TOL,
    OperatorSpace,
    adjoint_space,
    apply_legs,
    equality_residual,
    generate_star_algebra,
    onb_span,
    rel_residual,
    space_product,
    swap_matrix,
)
from .report import Report


# -- raw formulas (delta coordinates) ---------------------------------------------

def j_raw(G: FiniteGroupoid, w: QuasiInvariantWeight, x: str) -> np.ndarray:
    """(j(delta_x) z)(y) = delta_x(y) z(r(y)), as a |G| x |units| matrix."""
    m = np.zeros((G.n, len(G.units)))
    m[G.index[x], G.unit_index[G.r[x]]] = 1.0
    return m


def jhat_raw(G: FiniteGroupoid, w: QuasiInvariantWeight, x: str) -> np.ndarray:
    """(jh(delta_x) z)(y) = delta_x(y) D(y)^{-1/2} z(s(y))."""
    m = np.zeros((G.n, len(G.units)))
    m[G.index[x], G.unit_index[G.s[x]]] = w.D(x) ** -0.5
    return m


def U_raw(G: FiniteGroupoid, w: QuasiInvariantWeight) -> np.ndarray:
    """(U f)(x) = f(x^-1) D(x)^{-1/2}."""
    m = np.zeros((G.n, G.n))
    for x in G.arrows:
        m[G.index[x], G.index[G.inverse[x]]] = w.D(x) ** -0.5
    return m


def L_raw(G: FiniteGroupoid, w: QuasiInvariantWeight, g: np.ndarray) -> np.ndarray:
    """(L(g) f)(x) = sum_{z in G^{r(x)}} g(z) f(z^-1 x) D(z)^{-1/2}."""
    g = np.asarray(g, dtype=complex)
    m = np.zeros((G.n, G.n), dtype=complex)
    for (z, y), x in G.compose.items():  # x = z y, so f(z^-1 x) = f(y)
        m[G.index[x], G.index[y]] += g[G.index[z]] * w.D(z) ** -0.5
    return m


def h_scale(w: QuasiInvariantWeight) -> np.ndarray:
    """sqrt(nu({x})): raw coefficients times this give orthonormal coordinates."""
    return np.sqrt(w.nu_vec())


def k_scale(w: QuasiInvariantWeight) -> np.ndarray:
    return np.sqrt(w.mu_vec())


def raw_to_on(w: QuasiInvariantWeight, m: np.ndarray, domain: str = "H", codomain: str = "H") -> np.ndarray:
    """Matrix of an operator given in delta coordinates, rewritten in orthonormal ones."""
    sc = {"H": h_scale(w), "K": k_scale(w)}
    return (sc[codomain][:, None] * np.asarray(m)) / sc[domain][None, :]


# -- the system -------------------------------------------------------------------

@dataclass(frozen=True)
class Roles:
    """Module roles (alpha_hat, beta_hat, alpha, beta) of a unitary.

    The source is (beta_hat, alpha) and the range (alpha, beta); the
    labels are unit indices per coordinate of H.
    """

    ah: np.ndarray
    bh: np.ndarray
    a: np.ndarray
    b: np.ndarray


def L_matrix(G: FiniteGroupoid, a: str) -> np.ndarray:
    """L(delta_a) in orthonormal coordinates: e_b -> e_{ab}."""
    m = np.zeros((G.n, G.n))
    for b in G.arrows:
        ab = G.compose.get((a, b))
        if ab is not None:
            m[G.index[ab], G.index[b]] = 1.0
    return m


def build_V(G: FiniteGroupoid, w: QuasiInvariantWeight | None = None) -> np.ndarray:
    """V e_a (x) e_b = e_a (x) e_{ab} on pairs with s(a) = r(b); zero elsewhere."""
    n = G.n
    v = np.zeros((n * n, n * n))
    for (a, b), ab in G.compose.items():
        i, j, k = G.index[a], G.index[b], G.index[ab]
        v[i * n + k, i * n + j] = 1.0
    return v


def build_U(G: FiniteGroupoid, w: QuasiInvariantWeight | None = None) -> np.ndarray:
    n = G.n
    u = np.zeros((n, n))
    for x in G.arrows:
        u[G.index[G.inverse[x]], G.index[x]] = 1.0
    return u


@dataclass(frozen=True, eq=False)
class GroupoidKacSystem:
    G: FiniteGroupoid
    w: QuasiInvariantWeight
    V: np.ndarray
    U: np.ndarray
    tol: float = DEFAULT_TOL

    @property
    def n(self) -> int:
        return self.G.n

    @property
    def k(self) -> int:
        return len(self.G.units)

    @cached_property
    def r(self) -> np.ndarray:
        return self.G.r_idx()

    @cached_property
    def s(self) -> np.ndarray:
        return self.G.s_idx()

    # module spaces
    @cached_property
    def alpha(self) -> CbModule:
        return graded_module(self.r, self.k, self.tol)

    @property
    def beta(self) -> CbModule:
        return self.alpha

    @cached_property
    def alpha_hat(self) -> CbModule:
        return graded_module(self.s, self.k, self.tol)

    @property
    def beta_hat(self) -> CbModule:
        return self.alpha_hat

    def j(self, xi) -> np.ndarray:
        """j(xi) for a function xi on G, in orthonormal coordinates."""
        xi = np.asarray(xi, dtype=complex)
        m = np.zeros((self.n, self.k), dtype=complex)
        m[np.arange(self.n), self.r] = xi * h_scale(self.w) / k_scale(self.w)[self.r]
        return m

    @cached_property
    def Sigma(self) -> np.ndarray:
        return swap_matrix(self.n, self.n)

    @cached_property
    def U1(self) -> np.ndarray:
        return np.kron(self.U, np.eye(self.n))

    @cached_property
    def U2(self) -> np.ndarray:
        return np.kron(np.eye(self.n), self.U)

    @cached_property
    def V_check(self) -> np.ndarray:
        return self.Sigma @ self.U2 @ self.V @ self.U2 @ self.Sigma

    @cached_property
    def V_hat(self) -> np.ndarray:
        return self.Sigma @ self.U1 @ self.V @ self.U1 @ self.Sigma

    @cached_property
    def V_op(self) -> np.ndarray:
        return self.Sigma @ self.V.conj().T @ self.Sigma

    def roles(self, which: str = "V") -> Roles:
        r, s = self.r, self.s
        return {
            "V": Roles(s, s, r, r),
            "V_check": Roles(r, s, s, r),
            "V_hat": Roles(s, r, r, s),
            "V_op": Roles(s, r, r, s),
        }[which]

    def unitary(self, which: str) -> np.ndarray:
        return {"V": self.V, "V_check": self.V_check, "V_hat": self.V_hat, "V_op": self.V_op}[which]

    def module(self, labels: np.ndarray) -> CbModule:
        if np.array_equal(labels, self.r):
            return self.alpha
        if np.array_equal(labels, self.s):
            return self.alpha_hat
        return graded_module(labels, self.k, self.tol)

    def source(self, which: str = "V") -> RelTensor:
        ro = self.roles(which)
        return RelTensor(self.module(ro.bh), self.module(ro.a))

    def range(self, which: str = "V") -> RelTensor:
        ro = self.roles(which)
        return RelTensor(self.module(ro.a), self.module(ro.b))

    def L(self, a: str) -> np.ndarray:
        return L_matrix(self.G, a)

    @cached_property
    def leg_algebras(self) -> tuple[OperatorSpace, OperatorSpace]:
        """(A_hat, A) of V."""
        return leg_spaces(self, "V")

    def Lf(self, g) -> np.ndarray:
        """L(g) for a function g on G (orthonormal coordinates)."""
        raw = L_raw(self.G, self.w, g)
        return raw_to_on(self.w, raw)


def build_system(G: FiniteGroupoid, mu=None, tol: float = DEFAULT_TOL) -> GroupoidKacSystem:
    w = mu if isinstance(mu, QuasiInvariantWeight) else weight(G, mu)
    return GroupoidKacSystem(G, w, build_V(G, w), build_U(G, w), tol)


def build_module_spaces(G: FiniteGroupoid, mu=None, tol: float = DEFAULT_TOL):
    """(alpha_hat, beta_hat, alpha, beta) as operator spaces, orthonormal coordinates."""
    sys = build_system(G, mu, tol)
    return sys.alpha_hat.space, sys.beta_hat.space, sys.alpha.space, sys.beta.space


# -- identity checks ----------------------------------------------------------------

def _apply_seq(vecs: np.ndarray, dims, steps) -> np.ndarray:
    """Apply (operator, legs) steps right-to-left as written: steps[-1] first."""
    out = vecs
    for op, legs in reversed(steps):
        if not sparse.issparse(op) and op.size > 256:
            op = sparse.csr_matrix(op)  # the unitaries here are partial permutations
        out = apply_legs(op, legs, dims, out)
    return out


def identity_residual(W: np.ndarray, dims, lhs, rhs) -> float:
    """|| lhs W - rhs W || relative, with lhs/rhs lists of (operator, legs)."""
    return rel_residual(_apply_seq(W, dims, lhs), _apply_seq(W, dims, rhs))


def unitarity_residual(T: np.ndarray, src: RelTensor, rng: RelTensor) -> float:
    """T* T = P_src and T T* = P_rng."""
    a = rel_residual(T.conj().T @ T, src.P)
    b = rel_residual(T @ T.conj().T, rng.P)
    c = rel_residual(T @ src.P, T)
    return max(a, b, c)


def intertwining_residuals(sys: GroupoidKacSystem, which: str = "V") -> dict[str, float]:
    """The four space relations W(a<a) = a>a, W(bh>b) = bh<b, W(bh>bh) = a>bh, W(b<a) = b<b."""
    T = sys.unitary(which)
    ro = sys.roles(which)
    src, rng = sys.source(which), sys.range(which)
    A, B, BH = sys.module(ro.a).space, sys.module(ro.b).space, sys.module(ro.bh).space

    def image(sp: OperatorSpace) -> OperatorSpace:
        return onb_span(T @ sp.basis, sys.tol, shape=sp.shape) if sp.dim else sp

    return {
        "a<a -> a>a": equality_residual(image(tri(A, "<", A, src)), tri(A, ">", A, rng)),
        "bh>b -> bh<b": equality_residual(image(tri(BH, ">", B, src)), tri(BH, "<", B, rng)),
        "bh>bh -> a>bh": equality_residual(image(tri(BH, ">", BH, src)), tri(A, ">", BH, rng)),
        "b<a -> b<b": equality_residual(image(tri(B, "<", A, src)), tri(B, "<", B, rng)),
    }


def pentagon_residual(sys: GroupoidKacSystem, which: str = "V") -> float:
    T = sys.unitary(which)
    ro = sys.roles(which)
    tr = triple_from_labels(ro.bh, ro.a, ro.bh, ro.a)
    dims = tr.dims
    return identity_residual(tr.W, dims, [(T, [0, 1]), (T, [0, 2]), (T, [1, 2])], [(T, [1, 2]), (T, [0, 1])])


def regularity_residual(sys: GroupoidKacSystem, which: str = "V") -> float:
    """[<a|_1 W |a>_2] = [a a*]."""
    T = sys.unitary(which)
    ro = sys.roles(which)
    src, rng = sys.source(which), sys.range(which)
    A = sys.module(ro.a).space
    mats = [rng.bra1(x) @ T @ src.ket2(y) for x in A.basis for y in A.basis]
    lhs = onb_span(mats, sys.tol, shape=(sys.n, sys.n))
    rhs = space_product(A, adjoint_space(A))
    return equality_residual(lhs, rhs)


def verify_pmu(sys: GroupoidKacSystem, which: tuple[str, ...] = ("V", "V_check", "V_hat")) -> Report:
    rep = Report("kac.pmu", tol=sys.tol)
    anchors = {
        "a<a -> a>a": "V(α◁α) = α▷α",
        "bh>b -> bh<b": "V(β̂▷β) = β̂◁β",
        "bh>bh -> a>bh": "V(β̂▷β̂) = α▷β̂",
        "b<a -> b<b": "V(β◁α) = β◁β",
    }
    for wname in which:
        tag = "" if wname == "V" else f"{wname}."
        rep.add(f"{tag}unitary", "V*V = 1 on source, VV* = 1 on range",
                unitarity_residual(sys.unitary(wname), sys.source(wname), sys.range(wname)))
        for key, r in intertwining_residuals(sys, wname).items():
            rep.add(f"{tag}intertwine[{key}]", anchors[key], r)
        rep.add(f"{tag}pentagon", "V₁₂V₁₃V₂₃ = V₂₃V₁₂", pentagon_residual(sys, wname))
        rep.add(f"{tag}regular", "[⟨α|₁V|α⟩₂] = [αα*]", regularity_residual(sys, wname))
    return rep


def _triple(sys, l1, l2a, l2b, l3):
    lab = {"r": sys.r, "s": sys.s}
    return triple_from_labels(lab[l1], lab[l2a], lab[l2b], lab[l3])


def verify_kac(sys: GroupoidKacSystem) -> Report:
    rep = Report("kac.kac", tol=sys.tol)
    n = sys.n
    V, Vc, Vh, U = sys.V, sys.V_check, sys.V_hat, sys.U
    src = sys.source("V")
    Z = sys.Sigma @ sys.U2 @ V
    rep.add("symmetry", "U = U* = U⁻¹", max(rel_residual(U @ U, np.eye(n)), rel_residual(U, U.conj().T)))
    rep.add("U alpha_hat = alpha", "Uα̂ = α, Uβ̂ = β",
            equality_residual(onb_span(U @ sys.alpha_hat.space.basis, sys.tol), sys.alpha.space))
    rep.add("cube", "(Σ(1⊗U)V)³ = 1", rel_residual(Z @ Z @ Z @ src.W, src.W))
    wc = sys.source("V_check").W
    rep.add("VhatVVcheck", "V̂VV̌ = U₁Σ", rel_residual(Vh @ V @ Vc @ wc, sys.U1 @ sys.Sigma @ wc))
    dims = (n, n, n)
    checks = [
        ("weak-kac[V23 Vhat12]", "V₂₃V̂₁₂ = V̂₁₂V₂₃", ("r", "r", "s", "r"),
         [(V, [1, 2]), (Vh, [0, 1])], [(Vh, [0, 1]), (V, [1, 2])]),
        ("weak-kac[Vcheck23 V12]", "V̌₂₃V₁₂ = V₁₂V̌₂₃", ("s", "r", "s", "s"),
         [(Vc, [1, 2]), (V, [0, 1])], [(V, [0, 1]), (Vc, [1, 2])]),
        ("balanced[V13 V23 Vcheck12]", "V₁₃V₂₃V̌₁₂ = V̌₁₂V₁₃", ("s", "s", "s", "r"),
         [(V, [0, 2]), (V, [1, 2]), (Vc, [0, 1])], [(Vc, [0, 1]), (V, [0, 2])]),
        ("balanced[Vhat23 V12 V13]", "V̂₂₃V₁₂V₁₃ = V₁₃V̂₂₃", ("s", "r", "r", "r"),
         [(Vh, [1, 2]), (V, [0, 1]), (V, [0, 2])], [(V, [0, 2]), (Vh, [1, 2])]),
    ]
    for cid, anchor, labs, lhs, rhs in checks:
        tr = _triple(sys, *labs)
        rep.add(cid, anchor, identity_residual(tr.W, dims, lhs, rhs))
    UU = np.kron(U, U)
    rep.add("check-check", "V̌̌ = (U⊗U)V(U⊗U)",
            rel_residual(sys.Sigma @ sys.U2 @ Vc @ sys.U2 @ sys.Sigma, UU @ V @ UU))
    rep.add("hat = op", "V̂ = Vᵒᵖ", rel_residual(Vh, sys.V_op), tol=min(sys.tol, 1e-12))
    return rep


# -- legs ---------------------------------------------------------------------------------

def leg_spaces(sys: GroupoidKacSystem, which: str = "V") -> tuple[OperatorSpace, OperatorSpace]:
    """(A_hat_W, A_W) = ([<b|_2 W |a>_2], [<a|_1 W |bh>_1]) for the unitary ``which``."""
    T = sys.unitary(which)
    ro = sys.roles(which)
    src, rng = sys.source(which), sys.range(which)
    A, B, BH = sys.module(ro.a).space, sys.module(ro.b).space, sys.module(ro.bh).space
    hat = onb_span([rng.bra2(x) @ T @ src.ket2(y) for x in B.basis for y in A.basis], sys.tol, shape=(sys.n, sys.n))
    low = onb_span([rng.bra1(x) @ T @ src.ket1(y) for x in A.basis for y in BH.basis], sys.tol, shape=(sys.n, sys.n))
    return hat, low


@dataclass(frozen=True, eq=False)
class HopfCbBimodule:
    """An algebra on H with its comultiplication tabulated on a basis."""

    algebra: OperatorSpace
    table: tuple  # comultiplication of each basis element, ambient H (x) H matrices
    carrier: RelTensor
    name: str = ""

    def comult(self, a) -> np.ndarray:
        c = self.algebra.coords(a)
        return np.einsum("i,ijk->jk", c, np.array(self.table))


def comult_hat(sys: GroupoidKacSystem, b: np.ndarray) -> np.ndarray:
    """Δ̂(b) = V*(1 ⊗ b)V on the source."""
    return sys.V.conj().T @ np.kron(np.eye(sys.n), b) @ sys.V


def comult(sys: GroupoidKacSystem, a: np.ndarray) -> np.ndarray:
    """Δ(a) = V(a ⊗ 1)V* on the range."""
    return sys.V @ np.kron(a, np.eye(sys.n)) @ sys.V.conj().T


def legs(sys: GroupoidKacSystem) -> tuple[HopfCbBimodule, HopfCbBimodule]:
    hat, low = leg_spaces(sys, "V")
    H_hat = HopfCbBimodule(hat, tuple(comult_hat(sys, b) for b in hat.basis), sys.source("V"), "C0(G)")
    H_low = HopfCbBimodule(low, tuple(comult(sys, a) for a in low.basis), sys.range("V"), "C*r(G)")
    return H_hat, H_low


def convolution_rank(G: FiniteGroupoid, w: QuasiInvariantWeight) -> int:
    """Rank of span{L(delta_x)} from the raw convolution formula."""
    mats = [L_raw(G, w, np.eye(G.n)[G.index[x]]).reshape(-1) for x in G.arrows]
    return int(np.linalg.matrix_rank(np.array(mats), tol=1e-9))


def legs_report(sys: GroupoidKacSystem) -> Report:
    rep = Report("kac.legs", tol=sys.tol)
    n = sys.n
    hat, low = legs(sys)
    diag = onb_span([np.diag(np.eye(n)[i]) for i in range(n)], sys.tol)
    rep.add("dim A_hat = |G|", "Â = C₀(G)", abs(hat.algebra.dim - n))
    rep.add("A_hat = diagonal", "Â = C₀(G)", equality_residual(hat.algebra, diag))
    conv = generate_star_algebra([sys.L(a) for a in sys.G.arrows], sys.tol)
    rep.add("A = C*(L)", "A = C*ᵣ(G)", equality_residual(low.algebra, conv))
    rep.add("dim A = rank span L", "A = C*ᵣ(G)", abs(low.algebra.dim - convolution_rank(sys.G, sys.w)))
    # Δ̂ on delta functions: (Δ̂(f)ω)(x, y) = f(xy) ω(x, y)
    worst = 0.0
    src = sys.source("V")
    for g in sys.G.arrows:
        f = np.eye(n)[sys.G.index[g]]
        d = comult_hat(sys, np.diag(f))
        expect = np.zeros(n * n)
        for (x, y), xy in sys.G.compose.items():
            expect[sys.G.index[x] * n + sys.G.index[y]] = f[sys.G.index[xy]]
        worst = max(worst, float(np.abs(d - np.diag(expect)).max()))
    rep.add("comult_hat = f(xy)", "(Δ̂(f)ω)(x,y) = f(xy)ω(x,y)", worst, tol=0.0)
    worst = 0.0
    for a in sys.G.arrows:
        La = sys.L(a)
        worst = max(worst, rel_residual(comult(sys, La), np.kron(La, La) @ sys.range("V").P))
    rep.add("comult(L) = L(x)L", "Δ(L(δₓ)) = L(δₓ)⊗L(δₓ)", worst)
    return rep


def coassociativity_residual(sys: GroupoidKacSystem, alg: OperatorSpace, side: str) -> float:
    n = sys.n
    V, Vs = sys.V, sys.V.conj().T
    dims = (n, n, n)
    worst = 0.0
    if side == "low":
        tr = _triple(sys, "r", "r", "r", "r")
        for a in alg.basis:
            lhs = [(V, [0, 1]), (V, [0, 2]), (a, [0]), (Vs, [0, 2]), (Vs, [0, 1])]
            rhs = [(V, [1, 2]), (V, [0, 1]), (a, [0]), (Vs, [0, 1]), (Vs, [1, 2])]
            worst = max(worst, identity_residual(tr.W, dims, lhs, rhs))
    else:
        tr = _triple(sys, "s", "r", "s", "r")
        for b in alg.basis:
            lhs = [(Vs, [0, 1]), (Vs, [1, 2]), (b, [2]), (V, [1, 2]), (V, [0, 1])]
            rhs = [(Vs, [1, 2]), (Vs, [0, 2]), (b, [2]), (V, [0, 2]), (V, [1, 2])]
            worst = max(worst, identity_residual(tr.W, dims, lhs, rhs))
    return worst


def verify_leg_identities(sys: GroupoidKacSystem) -> Report:
    rep = Report("kac.leg-identities", tol=sys.tol)
    U = sys.U
    hat, low = leg_spaces(sys, "V")
    hat_c, low_c = leg_spaces(sys, "V_check")
    hat_h, low_h = leg_spaces(sys, "V_hat")
    conj = lambda sp: onb_span(U @ sp.basis @ U, sys.tol)
    rep.add("A_hat[Vcheck] = U A U", "Â_{V̌} = U A_V U", equality_residual(hat_c, conj(low)))
    rep.add("A[Vcheck] = A_hat", "A_{V̌} = Â_V", equality_residual(low_c, hat))
    rep.add("A[Vhat] = U A_hat U", "A_{V̂} = U Â_V U", equality_residual(low_h, conj(hat)))
    rep.add("A_hat[Vhat] = A", "Â_{V̂} = A_V", equality_residual(hat_h, low))
    ah = sys.alpha_hat.space
    rep.add("[A A_hat] = [ah ah*]", "[AÂ] = [α̂α̂*]",
            equality_residual(space_product(low, hat), space_product(ah, adjoint_space(ah))))
    rep.add("coassoc[comult]", "(Δ⊗id)Δ = (id⊗Δ)Δ", coassociativity_residual(sys, low, "low"))
    rep.add("coassoc[comult_hat]", "(Δ̂⊗id)Δ̂ = (id⊗Δ̂)Δ̂", coassociativity_residual(sys, hat, "hat"))
    return rep


# -- mutants for negative tests ---------------------------------------------------------

def swap_columns(m: np.ndarray, i: int, j: int) -> np.ndarray:
    out = m.copy()
    out[:, [i, j]] = out[:, [j, i]]
    return out


def mutate(sys: GroupoidKacSystem, V: np.ndarray | None = None, U: np.ndarray | None = None) -> GroupoidKacSystem:
    changes = {}
    if V is not None:
        changes["V"] = V
    if U is not None:
        changes["U"] = U
    return dataclasses.replace(sys, **changes)
