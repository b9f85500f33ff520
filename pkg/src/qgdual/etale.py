"""Reconstructing a Fell bundle from a coaction of C*_r(G).

For a subset U of arrows on which r and s are injective (a bisection),

    C_U = { c in [C rho_gamma(C0(s(U)))] : delta(c)|gamma>_1 ⊆ [|gamma>_1 L(C0(U))] }.

Both conditions are linear in c, so C_U is a nullspace. The fibers of the
reconstructed bundle are C_{x} for single arrows, sitting inside the one
ambient algebra L(K) (the "internal" backend). The expectation onto C_{G⁰}
is p(c) = <xi0|_2 delta(c) |xi0>_2 with xi0 = j(chi_{G⁰}).

Finite groupoids are discrete, so only counting measures occur; runs with a
non-constant quasi-invariant weight are refused.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .coaction import Coaction, CoactionError, coaction_from_rep, flags, verify_coaction
from .fell import (
    BundleError,
    ConcreteFellBundle,
    bundle_coaction,
    star_iso_report,
    validate_bundle,
    weights_and_rep,
)
from .kac import GroupoidKacSystem, build_system
from .opspace import (
    ConstraintStack,
    OperatorSpace,
    equality_residual,
    inclusion_residual,
    onb_span,
    rel_residual,
    space_product,
    zero_space,
)
from .report import Report


class ReconstructionError(ValueError):
    pass


def _need_counting(sys: GroupoidKacSystem) -> None:
    if not sys.w.constant:
        raise ReconstructionError("reconstruction runs with a constant weight mu only")


def comultiplication_coaction(sys: GroupoidKacSystem, name: str = "Delta") -> Coaction:
    """Δ(a) = V(a ⊗ 1)V* as a coaction of (A, Δ) on A itself."""
    _, A = sys.leg_algebras
    return coaction_from_rep(sys.V, A, sys, sys.r, sys.s, leg="A", src_h="r", name=name)


# -- bisections --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BisectionSpace:
    U: tuple          # arrow names
    space: OperatorSpace


def is_bisection(G, U: Sequence[str]) -> bool:
    rs = [G.r[x] for x in U]
    ss = [G.s[x] for x in U]
    return len(set(rs)) == len(rs) and len(set(ss)) == len(ss)


def bisection_space(co: Coaction, U: Sequence[str]) -> BisectionSpace:
    """Solve the two linear membership conditions defining C_U."""
    if co.leg != "A":
        raise CoactionError("bisection spaces are defined for coactions of (A, Δ)")
    sys = co.sys
    G = sys.G
    U = tuple(U)
    for x in U:
        if x not in G.index:
            raise ReconstructionError(f"unknown arrow {x!r}")
    if not is_bisection(G, U):
        raise ReconstructionError(f"{' '.join(U)} is not a bisection")
    K, m = co.K_dim, co.C.dim
    if m == 0 or not U:
        return BisectionSpace(U, zero_space(K, K, co.tol))
    car = co.carrier
    # target span [|gamma>_1 L(C0(U))], as operators H -> ambient carrier
    kets = [car.ket1(b) for b in co.gamma_module.space.basis]
    target = onb_span([k @ sys.L(x) for k in kets for x in U], co.tol)
    Q = target.flat()  # rows: orthonormal vec(T)
    src_units = {G.unit_index[G.s[x]] for x in U}
    keep = np.isin(co.gamma, list(src_units))
    off = np.diag((~keep).astype(complex))
    stack = ConstraintStack(m)
    stack.add(np.array([(c @ off).reshape(-1) for c in co.C.basis]).T)
    for k in kets:
        cols = np.array([(t @ k).reshape(-1) for t in co.table]).T  # vec(delta(C_i)|e_k>_1)
        stack.add(cols - Q.T @ (Q.conj() @ cols))
    ns = stack.nullspace(co.tol)
    if ns.shape[1] == 0:
        return BisectionSpace(U, zero_space(K, K, co.tol))
    mats = np.einsum("ia,ijk->ajk", ns, co.C.basis)
    return BisectionSpace(U, onb_span(mats, co.tol))


def singleton_spaces(co: Coaction) -> list[OperatorSpace]:
    return [bisection_space(co, (x,)).space for x in co.sys.G.arrows]


def bisection_report(co: Coaction, fibers: Sequence[OperatorSpace] | None = None) -> Report:
    """(C_x)* = C_{x⁻¹}, C_x C_y ⊆ C_{xy} and C_U = [C_V C0(U)] for U ⊆ V."""
    G = co.sys.G
    fibers = fibers if fibers is not None else singleton_spaces(co)
    rep = Report("etale.bisections", co.name, co.tol)
    inv = max(equality_residual(_adjoint(fibers[i]), fibers[G.inv_idx()[i]]) for i in range(G.n))
    rep.add("involution", "(C_U)* = C_{U⁻¹}", inv)
    prod = 0.0
    for (x, y), z in G.compose.items():
        fx, fy = fibers[G.index[x]], fibers[G.index[y]]
        prod = max(prod, inclusion_residual(space_product(fx, fy), fibers[G.index[z]]))
    rep.add("products", "C_V C_U ⊆ C_VU", prod)
    # a two-arrow bisection V restricted to each of its arrows
    restr = 0.0
    for V in _small_bisections(G):
        CV = bisection_space(co, V).space
        for x in V:
            u = G.unit_index[G.s[x]]
            P = np.diag((co.gamma == u).astype(complex))
            cut = onb_span([c @ P for c in CV.basis], co.tol, shape=CV.shape) if CV.dim else CV
            restr = max(restr, equality_residual(cut, fibers[G.index[x]]))
    rep.add("restriction", "C_U = [C_V C₀(U)]", restr)
    return rep


def _small_bisections(G, limit: int = 6) -> list[tuple[str, ...]]:
    out = []
    for i, x in enumerate(G.arrows):
        for y in G.arrows[i + 1:]:
            if is_bisection(G, (x, y)):
                out.append((x, y))
                if len(out) >= limit:
                    return out
    return out


def _adjoint(x: OperatorSpace) -> OperatorSpace:
    if x.dim == 0:
        return zero_space(x.cols, x.rows, x.tol)
    return onb_span(np.conj(np.transpose(x.basis, (0, 2, 1))), x.tol)


# -- the conditional expectation ------------------------------------------------------------

def conditional_expectation(co: Coaction) -> Callable[[np.ndarray], np.ndarray]:
    """p(c) = <xi0|_2 delta(c) |xi0>_2 with xi0 = j(chi_{G⁰})."""
    sys = co.sys
    chi = np.zeros(sys.n)
    chi[sys.G.unit_arrow_idx()] = 1.0
    ket = co.carrier.ket2(sys.j(chi))
    bra = ket.conj().T
    return lambda c: bra @ co.delta(c) @ ket


def expectation_report(co: Coaction, fibers: Sequence[OperatorSpace] | None = None, samples: int = 4) -> Report:
    G = co.sys.G
    fibers = fibers if fibers is not None else singleton_spaces(co)
    p = conditional_expectation(co)
    rep = Report("etale.expectation", co.name, co.tol)
    units = onb_span([b for u in G.units for b in fibers[G.index[u]].basis], co.tol, shape=(co.K_dim, co.K_dim))
    images = [p(c) for c in co.C.basis]
    onto = onb_span(images, co.tol, shape=(co.K_dim, co.K_dim))
    rep.add("range", "p(C) = C_{G⁰}", equality_residual(onto, units))
    rep.add("idempotent", "p|_{C_{G⁰}} = Id", max((rel_residual(p(b), b) for b in units.basis), default=0.0))
    g = np.random.default_rng(29)
    worst = 0.0
    for _ in range(samples):
        c = np.einsum("i,ijk->jk", g.normal(size=co.C.dim) + 1j * g.normal(size=co.C.dim), co.C.basis)
        excess = np.linalg.norm(p(c), 2) - np.linalg.norm(c, 2)
        worst = max(worst, max(0.0, excess) / max(1.0, np.linalg.norm(c, 2)))
    rep.add("contractive", "‖p(c)‖ ≤ ‖c‖", worst)
    # tr∘p is a faithful positive functional iff its Gram matrix on C is positive definite
    B = co.C.basis
    gram = np.array([[np.trace(p(a.conj().T @ b)) for b in B] for a in B])
    gram = (gram + gram.conj().T) / 2
    ev = np.linalg.eigvalsh(gram) if len(B) else np.zeros(0)
    top = float(ev.max()) if ev.size else 1.0
    rep.check("faithful", "p(c*c) = 0 ⇒ c = 0", int(np.sum(ev > co.tol * top)) == len(B))
    off = [fibers[i] for i, x in enumerate(G.arrows) if not G.is_unit(x)]
    kill = max((np.linalg.norm(p(b)) for f in off for b in f.basis), default=0.0)
    rep.add("annihilates", "p(C_U) = 0 for U ∩ G⁰ = ∅", kill)
    return rep


# -- bundle assembly ------------------------------------------------------------------------

def assemble_bundle(co: Coaction, check: bool = True) -> tuple[ConcreteFellBundle, Callable]:
    """Fibers C_{x} inside L(K); the second value is iota on sections, c ↦ Σ_x c(x)."""
    _need_counting(co.sys)
    if check and not flags(verify_coaction(co))["very fine"]:
        raise ReconstructionError("coaction not very fine")
    fibers = tuple(singleton_spaces(co))
    F = ConcreteFellBundle(co.sys.G, fibers, backend="internal", name=co.name)

    def iota(c):
        return sum(np.asarray(m, dtype=complex) for m in c)

    return F, iota


def verify_reconstruction(co: Coaction, check: bool = True) -> Report:
    """The reconstructed bundle is a Fell bundle and iota: C*_r(F) → C is a *-isomorphism."""
    F, iota = assemble_bundle(co, check)
    rep = Report("etale.reconstruct", co.name, co.tol)
    rep.extend(validate_bundle(F), "bundle.")
    rep.extend(bisection_report(co, F.fibers), "C_U.")
    rep.extend(expectation_report(co, F.fibers), "p.")
    total = onb_span([b for f in F.fibers for b in f.basis], co.tol, shape=co.C.shape)
    rep.add("fibers span C", "C = Σ_x C_{x}", equality_residual(total, co.C))
    rep.check("sum is direct", "dim C = Σ_x dim C_{x}", sum(f.dim for f in F.fibers) == co.C.dim)
    rep.check("admissible", "F is admissible", F.admissible)
    if not F.admissible:
        return rep
    # iota sends pi_F(delta_x b) to b; check it is a *-isomorphism C*_r(F) → C
    frep = weights_and_rep(F, co.sys)
    src = frep.pi_basis
    dst = [iota(F.delta_section(i, b)) for i, b in F.section_basis]
    src_alg = onb_span(src, co.tol, shape=(frep.dim, frep.dim))
    star_iso_report(rep, src, dst, src_alg, co.C, "iota.", co.tol)
    # strong nondegeneracy of the counit: [iota(C*_r F) C_{G⁰}] = C
    units = [b for u in F.G.units for b in F.fiber(u).basis]
    prods = onb_span([c @ e for c in co.C.basis for e in units], co.tol, shape=co.C.shape)
    rep.add("nondegenerate", "[ρ(C)D_{G⁰}] = D", equality_residual(prods, co.C))
    return rep


def round_trip_eta(F: ConcreteFellBundle, sys: GroupoidKacSystem | None = None) -> Report:
    """eta_x(b) = pi(b δ_x) maps F_x onto the reconstructed fiber C_{x}, isometrically."""
    if not F.admissible:
        raise BundleError("bundle is not admissible")
    sys = sys or build_system(F.G, None, F.tol)
    _need_counting(sys)
    G = F.G
    frep = weights_and_rep(F, sys)
    co = bundle_coaction(F, rep=frep)
    rep = Report("etale.eta", F.name, F.tol)
    recon, iota = assemble_bundle(co, check=False)
    dims = max(abs(F.fibers[i].dim - recon.fibers[i].dim) for i in range(G.n))
    rep.add("fiber dims", "dim Ǧ(F̌F)_x = dim F_x", dims)
    into = 0.0
    onto = 0.0
    iso = 0.0
    for i, f in enumerate(F.fibers):
        imgs = [frep.pi(F.delta_section(i, b)) for b in f.basis]
        target = recon.fibers[i]
        into = max([into] + [target.residual(m) for m in imgs])
        if f.dim:
            onto = max(onto, equality_residual(onb_span(imgs, F.tol), target))
        g = np.random.default_rng(41 + i)
        for _ in range(2 if f.dim else 0):
            b = np.einsum("i,ijk->jk", g.normal(size=f.dim) + 1j * g.normal(size=f.dim), f.basis)
            nb = np.linalg.norm(b, 2)
            iso = max(iso, abs(np.linalg.norm(frep.pi(F.delta_section(i, b)), 2) - nb) / max(1.0, nb))
    rep.add("eta into fibers", "η̌_x(F_x) ⊆ C_{x}", into)
    rep.add("eta onto fibers", "η̌_x(F_x) = C_{x}", onto)
    rep.add("eta isometric", "‖η̌_x(b)‖ = ‖b‖", iso)
    mult = 0.0
    for (x, y), z in G.compose.items():
        ix, iy, iz = G.index[x], G.index[y], G.index[z]
        for a in F.fibers[ix].basis[:2]:
            for b in F.fibers[iy].basis[:2]:
                lhs = frep.pi(F.delta_section(ix, a)) @ frep.pi(F.delta_section(iy, b))
                mult = max(mult, rel_residual(lhs, frep.pi(F.delta_section(iz, a @ b))))
    rep.add("eta multiplicative", "η̌(ab) = η̌(a)η̌(b)", mult)
    star = 0.0
    for i, f in enumerate(F.fibers):
        j = G.inv_idx()[i]
        for b in f.basis:
            star = max(star, rel_residual(frep.pi(F.delta_section(i, b)).conj().T,
                                          frep.pi(F.delta_section(j, b.conj().T))))
    rep.add("eta *-compatible", "η̌(b*) = η̌(b)*", star)
    # iota ∘ (eta)_* = pi on whole sections
    g = np.random.default_rng(43)
    comp = 0.0
    for _ in range(3):
        c = [np.einsum("i,ijk->jk", g.normal(size=f.dim) + 1j * g.normal(size=f.dim), f.basis)
             if f.dim else np.zeros(f.shape, dtype=complex) for f in F.fibers]
        pushed = [frep.pi(F.delta_section(i, c[i])) for i in range(G.n)]
        comp = max(comp, rel_residual(iota(pushed), frep.pi(c)))
    rep.add("iota eta = pi", "ι ∘ (η̌)_* = π", comp)
    return rep


def reconstruction_dims(co: Coaction) -> dict[str, int]:
    return {x: f.dim for x, f in zip(co.sys.G.arrows, singleton_spaces(co))}


__all__ = [
    "BisectionSpace",
    "ReconstructionError",
    "assemble_bundle",
    "bisection_report",
    "bisection_space",
    "comultiplication_coaction",
    "conditional_expectation",
    "expectation_report",
    "is_bisection",
    "reconstruction_dims",
    "round_trip_eta",
    "singleton_spaces",
    "verify_reconstruction",
]
