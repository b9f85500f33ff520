"""Coactions of the two legs, reduced crossed products, dual coactions and biduality.

A coaction lives on a Hilbert space K = C^m whose coordinates are all
graded by a unit label (the module gamma). Its values delta(c) are
stored on the full tensor product K (x) H; they vanish off the carrier
K_gamma (x)_b H, which pairs coordinates with gamma(k) = r(y).

Two targets are supported:

* ``leg="A"``: coactions of (A, Delta) = C*_r(G), glued along beta;
* ``leg="A_hat"``: coactions of (A_hat, Delta_hat) = C_0(G), glued along alpha.

Both gluings use the range grading r on H, since alpha = beta.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .base import RelTensor, graded_module, triple_from_labels
from .kac import GroupoidKacSystem, comult, comult_hat, identity_residual
from .opspace import (
    ConstraintStack,
    OperatorSpace,
    adjoint_space,
    apply_legs,
    check_linear_iso,
    equality_residual,
    inclusion_residual,
    induced_algebra,
    onb_span,
    rel_residual,
    span_sum,
    zero_space,
)
from .report import Report

# size guard for the linear solves behind morphism checks (unknowns)
MAX_INTERTWINER_UNKNOWNS = 6000


class CoactionError(ValueError):
    pass


# -- fiber products and intertwiners --------------------------------------------------

def compress(t: RelTensor, m: np.ndarray) -> np.ndarray:
    return t.W.conj().T @ m @ t.W


def fiber_product(A: OperatorSpace, beta, B: OperatorSpace, gamma, variant: str = "fibre") -> tuple[OperatorSpace, RelTensor]:
    """``A *_b B = Ind_{|beta>_1}(B) ∩ Ind_{|gamma>_2}(A)`` in compressed coordinates.

    ``variant='fib'`` replaces the first induced algebra by Ind_{[|beta>_1 B]}(B).
    Returns the space and the relative tensor product carrying it.
    """
    t = RelTensor(beta, gamma)
    wh = t.W.conj().T
    d = t.dim
    e1 = [wh @ t.ket1(x) for x in beta.space.basis]
    if variant == "fib":
        e1 = [m @ b for m in e1 for b in B.basis]
    elif variant != "fibre":
        raise ValueError("variant must be 'fibre' or 'fib'")
    E1 = onb_span(e1, A.tol, shape=(d, gamma.H_dim))
    E2 = onb_span([wh @ t.ket2(y) for y in gamma.space.basis], A.tol, shape=(d, beta.H_dim))
    ind1 = induced_algebra(E1, B)
    ind2 = induced_algebra(E2, A)
    return intersect(ind1, ind2), t


def intersect(x: OperatorSpace, y: OperatorSpace) -> OperatorSpace:
    """X ∩ Y via the nullspace of [basis_X | -basis_Y]."""
    if x.dim == 0 or y.dim == 0:
        return zero_space(*x.shape, tol=x.tol)
    m = np.hstack([x.flat().T, -y.flat().T])
    cons = ConstraintStack(m.shape[1])
    cons.add(m)
    ns = cons.nullspace(x.tol)
    vecs = (x.flat().T @ ns[: x.dim]).T
    if vecs.shape[0] == 0:
        return zero_space(*x.shape, tol=x.tol)
    return onb_span(vecs.reshape(-1, *x.shape), x.tol)


def intertwiner_space(pairs, src_dim: int, tgt_dim: int, src_labels=None, tgt_labels=None, tol: float = 1e-9) -> OperatorSpace:
    """``{T : T a = b T for all (a, b) in pairs}`` with T: C^src -> C^tgt.

    With labels, T is further required to preserve the gradings
    (T P_u = P'_u T), which is ``T gamma ⊆ gamma'`` and ``T* gamma' ⊆ gamma``.
    """
    if src_labels is not None:
        allowed = np.asarray(tgt_labels)[:, None] == np.asarray(src_labels)[None, :]
    else:
        allowed = np.ones((tgt_dim, src_dim), dtype=bool)
    idx = np.flatnonzero(allowed.reshape(-1))
    cons = ConstraintStack(idx.size)
    eye_t, eye_s = np.eye(tgt_dim), np.eye(src_dim)
    for a, b in pairs:
        # row-major vec: vec(T a) = (I kron a^T) vec T, vec(b T) = (b kron I) vec T
        blk = np.kron(eye_t, np.asarray(a).T) - np.kron(np.asarray(b), eye_s)
        cons.add(blk[:, idx])
    ns = cons.nullspace(tol)
    if ns.shape[1] == 0:
        return zero_space(tgt_dim, src_dim, tol)
    full = np.zeros((tgt_dim * src_dim, ns.shape[1]), dtype=complex)
    full[idx] = ns
    return onb_span(full.T.reshape(-1, tgt_dim, src_dim), tol)


# -- coactions ------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Coaction:
    sys: GroupoidKacSystem
    leg: str
    gamma: np.ndarray
    C: OperatorSpace
    table: np.ndarray
    X: np.ndarray | None = None
    X_src: tuple | None = None  # (K labels, 'r' or 's' for the H factor) of the source of X
    name: str = ""
    notes: list = field(default_factory=list)

    @property
    def K_dim(self) -> int:
        return int(self.gamma.size)

    @property
    def n(self) -> int:
        return self.sys.n

    @cached_property
    def gamma_module(self):
        return graded_module(self.gamma, self.sys.k, self.sys.tol)

    @cached_property
    def carrier(self) -> RelTensor:
        return RelTensor(self.gamma_module, self.sys.alpha)

    @property
    def target_label(self) -> np.ndarray:
        """Grading of the H factor in the target module (gamma > alpha or gamma > beta_hat)."""
        return self.sys.r if self.leg == "A" else self.sys.s

    @cached_property
    def leg_algebra(self) -> OperatorSpace:
        hat, low = self.sys.leg_algebras
        return low if self.leg == "A" else hat

    def delta(self, c) -> np.ndarray:
        return np.einsum("i,ijk->jk", self.C.coords(c), self.table)

    @cached_property
    def tol(self) -> float:
        return self.sys.tol


def coaction_from_rep(X: np.ndarray, C: OperatorSpace, sys: GroupoidKacSystem, gamma, src_labels,
                      leg: str = "A", src_h: str = "r", name: str = "", check: bool = True) -> Coaction:
    """delta(c) = X (c (x) 1) X*, for a representation X of V (or an implementing unitary)."""
    gamma = np.asarray(gamma, dtype=int)
    n = sys.n
    table = np.array([X @ np.kron(c, np.eye(n)) @ X.conj().T for c in C.basis]) if C.dim else np.zeros((0, X.shape[0], X.shape[0]))
    co = Coaction(sys, leg, gamma, C, table, X, (np.asarray(src_labels, dtype=int), src_h), name)
    if check:
        rep = representation_report(co)
        bad = rep.failures()
        if bad:
            raise CoactionError(f"not a representation of V: {bad[0].id} (residual {bad[0].residual:.2e})")
    return co


def _label(sys, kind):
    return sys.r if kind == "r" else sys.s


def representation_report(co: Coaction) -> Report:
    """X is a partial isometry from its source onto the carrier; for leg A, X12 X13 V23 = V23 X12."""
    rep = Report("coaction.representation", co.name, co.tol)
    sys = co.sys
    ks, hs = co.X_src
    src = RelTensor(graded_module(ks, sys.k, sys.tol), graded_module(_label(sys, hs), sys.k, sys.tol))
    X = co.X
    rep.add("unitary", "X*X = 1 on source, XX* = 1 on carrier",
            max(rel_residual(X.conj().T @ X, src.P), rel_residual(X @ X.conj().T, co.carrier.P)))
    if co.leg == "A":
        tr = triple_from_labels(ks, sys.r, sys.s, sys.r)
        dims = (co.K_dim, sys.n, sys.n)
        V = sys.V
        rep.add("rep", "X₁₂X₁₃V₂₃ = V₂₃X₁₂",
                identity_residual(tr.W, dims, [(X, [0, 1]), (X, [0, 2]), (V, [1, 2])], [(V, [1, 2]), (X, [0, 1])]))
    return rep


def _rng(co: Coaction):
    return np.random.default_rng(20240917 + co.C.dim)


def _random_elements(co: Coaction, k: int):
    g = _rng(co)
    return [np.einsum("i,ijk->jk", g.normal(size=co.C.dim) + 1j * g.normal(size=co.C.dim), co.C.basis) for _ in range(k)]


def verify_coaction(co: Coaction, morphisms: bool | None = None) -> Report:
    """Coaction axioms and flags: multiplicative, *-preserving, target membership,
    coassociativity, injective, left-/right-full, fine and very fine."""
    rep = Report("coaction", co.name, co.tol)
    sys, n, K = co.sys, co.n, co.K_dim
    car = co.carrier
    C = co.C
    tol = co.tol
    if C.dim == 0:
        rep.check("nonzero", "C ≠ 0", False)
        return rep
    # algebraic structure on random elements (bilinear identities, seeded)
    samples = _random_elements(co, 6)
    mult = max(rel_residual(co.delta(a @ b), co.delta(a) @ co.delta(b)) for a, b in zip(samples[::2], samples[1::2]))
    star = max(rel_residual(co.delta(a.conj().T), co.delta(a).conj().T) for a in samples)
    rep.add("multiplicative", "δ(cd) = δ(c)δ(d)", mult)
    rep.add("*-preserving", "δ(c*) = δ(c)*", star)
    rep.add("supported on carrier", "δ(c) ∈ L(K γ⊗ H)",
            max(rel_residual(car.P @ t @ car.P, t) for t in co.table))
    # delta(C) ⊆ C fib A: T [|gamma>_1 A] ⊆ [|gamma>_1 A], T* likewise, and T |beta>_2 ⊆ [|beta>_2 C]
    A = co.leg_algebra
    GA = onb_span([car.ket1(g) @ a for g in co.gamma_module.space.basis for a in A.basis], tol)
    BC = onb_span([car.ket2(b) @ c for b in sys.beta.space.basis for c in C.basis], tol)
    worst = 0.0
    for t in co.table:
        for tt in (t, t.conj().T):
            worst = max(worst, inclusion_residual(onb_span(tt @ GA.basis, tol, shape=GA.shape), GA))
            img = onb_span([tt @ car.ket2(b) @ c for b in sys.beta.space.basis for c in [np.eye(K)]], tol,
                           shape=BC.shape)
            worst = max(worst, inclusion_residual(img, BC))
    rep.add("delta(C) in C fib A", "δ(C) ⊆ C ⋆ A", worst)
    if co.X is not None:
        rep.add("coassociative", "(δ∗id)δ = (id∗Δ)δ", coassociativity_residual(co))
    ok_inj, ra, rb, _ = check_linear_iso(list(C.basis), list(co.table), tol)
    rep.check("injective", "δ injective", ok_inj and ra == C.dim)
    DC = onb_span(co.table, tol)
    lf = onb_span([d @ g for d in DC.basis for g in GA.basis], tol, shape=GA.shape)
    rep.add("left-full", "[δ(C)|γ⟩₁A] = [|γ⟩₁A]", equality_residual(lf, GA))
    rf = onb_span([d @ car.ket2(b) for d in DC.basis for b in sys.beta.space.basis], tol, shape=BC.shape)
    rep.add("right-full", "[δ(C)|β⟩₂] = [|β⟩₂C]", equality_residual(rf, BC))
    rho = onb_span([co.gamma_module.projections[u] @ c for u in range(sys.k) for c in C.basis], tol, shape=C.shape)
    rep.add("rho(B)C = C", "[ρ_γ(𝔅†)C] = C", equality_residual(rho, C))
    m_unknowns = car.dim * K
    if morphisms is None:
        morphisms = m_unknowns <= MAX_INTERTWINER_UNKNOWNS
    if morphisms:
        r_m, r_vf = morphism_residuals(co)
        rep.add("morphism", "[ℒ^δ γ] = γ▷α", r_m)
        rep.add("very fine", "δ⁻¹ is a morphism", r_vf)
    else:
        co.notes.append(f"morphism checks skipped: {m_unknowns} unknowns")
    return rep


def flags(rep: Report) -> dict[str, bool]:
    get = lambda k: any(i.id == k and i.passed for i in rep.items)
    f = {k: get(k) for k in ("injective", "left-full", "right-full", "morphism", "very fine", "coassociative")}
    f["fine"] = f["injective"] and f["morphism"] and f["right-full"] and get("rho(B)C = C")
    f["very fine"] = f["fine"] and f["very fine"]
    return f


def coassociativity_residual(co: Coaction) -> float:
    sys, K, n = co.sys, co.K_dim, co.n
    X, Xs = co.X, co.X.conj().T
    V, Vs = sys.V, sys.V.conj().T
    dims = (K, n, n)
    worst = 0.0
    if co.leg == "A":
        tr = triple_from_labels(co.gamma, sys.r, sys.r, sys.r)
        for t in co.table:
            lhs = [(X, [0, 1]), (t, [0, 2]), (Xs, [0, 1])]
            rhs = [(V, [1, 2]), (t, [0, 1]), (Vs, [1, 2])]
            worst = max(worst, identity_residual(tr.W, dims, lhs, rhs))
    else:
        tr = triple_from_labels(co.gamma, sys.r, sys.s, sys.r)
        for t in co.table:
            lhs = [(X, [0, 1]), (t, [0, 2]), (Xs, [0, 1])]
            rhs = [(Vs, [1, 2]), (t, [0, 2]), (V, [1, 2])]
            worst = max(worst, identity_residual(tr.W, dims, lhs, rhs))
    return worst


def morphism_residuals(co: Coaction) -> tuple[float, float]:
    """Residuals of [ℒ^δ γ] = γ▷(target module) and of the very-fine condition."""
    sys, K = co.sys, co.K_dim
    car = co.carrier
    W = car.W
    d = car.dim
    # carrier coordinates (k, y) and their target grading
    kk, yy = np.divmod(car.index, sys.n)
    tgt = co.target_label[yy]
    cmp_tab = [W.conj().T @ t @ W for t in co.table]
    L = intertwiner_space(list(zip(co.C.basis, cmp_tab)), K, d, co.gamma, tgt, co.tol)
    gam = co.gamma_module.space
    target = graded_module(tgt, sys.k, co.tol).space  # γ▷(module) in carrier coordinates
    img = onb_span([T @ g for T in L.basis for g in gam.basis], co.tol, shape=target.shape)
    r_morph = equality_residual(img, target)
    Linv = intertwiner_space(list(zip(cmp_tab, co.C.basis)), d, K, tgt, co.gamma, co.tol)
    img2 = onb_span([S @ g for S in Linv.basis for g in target.basis], co.tol, shape=gam.shape)
    r_vf = equality_residual(img2, gam)
    return r_morph, r_vf


# -- reduced crossed products and dual coactions --------------------------------------------

@dataclass(frozen=True, eq=False)
class CrossedProduct:
    algebra: OperatorSpace        # on the compressed carrier of the original coaction
    module_labels: np.ndarray     # gamma ▷ beta_hat: unit label s(y) of carrier coordinate (k, y)
    dual: Coaction
    carrier: RelTensor            # carrier of the original coaction (W compresses)
    report: Report


def _carrier_coords(co: Coaction):
    kk, yy = np.divmod(co.carrier.index, co.n)
    return kk, yy


def crossed_product_dual(co: Coaction, name: str = "") -> CrossedProduct:
    """C ⋊ Â = [δ(C)(1 ⊗ Â)] with the dual coaction of (Â, Δ̂) implemented by 1 ⊗ V̌."""
    if co.leg != "A":
        raise CoactionError("crossed_product_dual expects a coaction of (A, Δ)")
    sys = co.sys
    hat, _ = sys.leg_algebras
    return _crossed(co, hat, sys.V_check, "A_hat", "s", lambda f: comult_hat(sys, f), lambda m: m, name)


def crossed_product_dual_hatside(co: Coaction, name: str = "") -> CrossedProduct:
    """C ⋊ A = [δ(C)(1 ⊗ UAU)] with the dual coaction of (A, Δ) implemented by 1 ⊗ U₁VU₁."""
    if co.leg != "A_hat":
        raise CoactionError("crossed_product_dual_hatside expects a coaction of (Â, Δ̂)")
    sys = co.sys
    _, low = sys.leg_algebras
    U, U1 = sys.U, sys.U1
    W = U1 @ sys.V @ U1
    return _crossed(co, low, W, "A", "r",
                    lambda a: U1 @ comult(sys, a) @ U1, lambda a: U @ a @ U, name)


def _crossed(co: Coaction, leg_alg: OperatorSpace, Wu: np.ndarray, dual_leg: str, src_h: str,
             comult_fn, twist, name: str) -> CrossedProduct:
    sys, n, K = co.sys, co.n, co.K_dim
    car = co.carrier
    Wc = car.W
    d1 = car.dim
    tol = co.tol
    eyeK = np.eye(K)
    gens = []
    for t in co.table:
        for a in leg_alg.basis:
            gens.append(Wc.conj().T @ t @ np.kron(eyeK, twist(a)) @ Wc)
    alg = onb_span(gens, tol, shape=(d1, d1))
    kk, yy = _carrier_coords(co)
    labels = sys.s[yy]
    # implementing unitary of the dual, compressed on the first two legs
    big = np.kron(eyeK, Wu)
    Wk = np.kron(Wc, np.eye(n))
    Xd = Wk.conj().T @ big @ Wk
    src_k = sys.r[yy] if dual_leg == "A" else sys.s[yy]
    dual = coaction_from_rep(Xd, alg, sys, labels, src_k, leg=dual_leg, src_h=src_h,
                             name=(name or co.name) + "^", check=False)
    rep = Report("crossed-product", co.name, tol)
    rep.extend(representation_report(dual), "dual.")
    rep.add("adjoint closed", "(C⋊Â)* = C⋊Â", equality_residual(adjoint_space(alg), alg))
    dm = graded_module(labels, sys.k, tol)
    rho = onb_span([x @ dm.projections[u] for x in alg.basis for u in range(sys.k)], tol, shape=alg.shape)
    rep.add("[(C x A)rho(B)] = C x A", "[(C⋊Â)ρ(𝔅)] = C⋊Â", equality_residual(rho, alg))
    # generator formula on a few generators: δ̂(δ(c)(1⊗a)) = (δ(c)⊗1)(1⊗Δ(a))
    worst = 0.0
    g = np.random.default_rng(7 + d1)
    car2 = dual.carrier
    for _ in range(3):
        i = int(g.integers(co.C.dim))
        j = int(g.integers(leg_alg.dim))
        t, a = co.table[i], leg_alg.basis[j]
        x = Wc.conj().T @ t @ np.kron(eyeK, twist(a)) @ Wc
        lhs = dual.delta(x)
        rhs = Wk.conj().T @ np.kron(t, np.eye(n)) @ np.kron(eyeK, comult_fn(a)) @ Wk
        worst = max(worst, rel_residual(lhs @ car2.W, rhs @ car2.W))
    rep.add("generator formula", "δ̂(δ(c)(1⊗a)) = (δ(c)⊗1)(1⊗Δ(a))", worst)
    return CrossedProduct(alg, labels, dual, car, rep)


# -- biduality -------------------------------------------------------------------------------

def bidual_duality_check(co: Coaction) -> Report:
    """C ⋊ Â ⋊ A versus [|β⟩₂ C ⟨β|₂] through Ψ(x) = (1⊗V*) X₁₂ x₁₃ X₁₂* (1⊗V)."""
    sys, n, K = co.sys, co.n, co.K_dim
    tol = co.tol
    rep = Report("duality", co.name, tol)
    cp1 = crossed_product_dual(co)
    cp2 = crossed_product_dual_hatside(cp1.dual)
    car1 = co.carrier
    W1 = car1.W
    d1 = car1.dim
    car2 = cp1.dual.carrier
    W2 = np.kron(W1, np.eye(n)) @ car2.W  # bidual carrier inside K (x) H (x) H
    bidual = cp2.algebra
    # target [|β⟩₂ C ⟨β|₂] in compressed carrier coordinates
    kets = [W1.conj().T @ car1.ket2(b) for b in sys.beta.space.basis]
    T = onb_span([k1 @ c @ k2.conj().T for k1 in kets for c in co.C.basis for k2 in kets], tol, shape=(d1, d1))
    rep.add("dim bidual = dim target", "dim C⋊Â⋊A = dim [|β⟩₂C⟨β|₂]", abs(bidual.dim - T.dim))
    X, V = co.X, sys.V
    dims = (K, n, n)
    N = K * n * n
    eye = np.eye(N, dtype=complex)

    def psi(t: np.ndarray) -> np.ndarray:
        amb = W1 @ t @ W1.conj().T
        cols = W2
        out = apply_legs(V, [1, 2], dims, cols)
        out = apply_legs(X.conj().T, [0, 1], dims, out)
        out = apply_legs(amb, [0, 2], dims, out)
        out = apply_legs(X, [0, 1], dims, out)
        out = apply_legs(V.conj().T, [1, 2], dims, out)
        return out  # Ψ(t) W2, an N x d2 block

    imgs, leak = [], 0.0
    for t in T.basis:
        blk = psi(t)
        c = W2.conj().T @ blk
        leak = max(leak, rel_residual(W2 @ c, blk))
        imgs.append(c)
    rep.add("Psi preserves carrier", "Ψ(x) ∈ L(bidual carrier)", leak)
    img = onb_span(imgs, tol, shape=(car2.dim, car2.dim))
    rep.add("Psi onto bidual", "Ψ([|β⟩₂C⟨β|₂]) = C⋊Â⋊A", equality_residual(img, bidual))
    ok, ra, rb, _ = check_linear_iso(list(T.basis), imgs, tol)
    rep.check("Psi injective", "Ψ injective", ok and ra == T.dim)
    g = np.random.default_rng(11 + T.dim)
    worst_m = worst_s = 0.0
    for _ in range(4):
        a = np.einsum("i,ijk->jk", g.normal(size=T.dim) + 1j * g.normal(size=T.dim), T.basis)
        b = np.einsum("i,ijk->jk", g.normal(size=T.dim) + 1j * g.normal(size=T.dim), T.basis)
        pa, pb = W2.conj().T @ psi(a), W2.conj().T @ psi(b)
        worst_m = max(worst_m, rel_residual(W2.conj().T @ psi(a @ b), pa @ pb))
        worst_s = max(worst_s, rel_residual(W2.conj().T @ psi(a.conj().T), pa.conj().T))
    rep.add("Psi multiplicative", "Ψ(xy) = Ψ(x)Ψ(y)", worst_m)
    rep.add("Psi *-preserving", "Ψ(x*) = Ψ(x)*", worst_s)
    back = onb_span([k1.conj().T @ t @ k2 for k1 in kets for t in T.basis for k2 in kets], tol, shape=co.C.shape)
    rep.add("compression recovers C", "[⟨β|₂[|β⟩₂C⟨β|₂]|β⟩₂] = C", equality_residual(back, co.C))
    return rep
