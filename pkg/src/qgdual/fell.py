"""Finite Fell bundles realized by matrices, their reduced algebras and coactions.

Every fiber F_x is a space of n_{r(x)} x n_{s(x)} matrices; the product
is matrix multiplication and the involution is the adjoint. The
``internal`` backend is the special case where all unit dimensions are
equal and the fibers sit inside one matrix algebra (this is what the
étale reconstruction produces).

The Hilbert space K_phi of a weight family is the direct sum over arrows
of F_x rho_{s(x)}^{1/2}, with the Frobenius inner product. In its
orthonormal coordinates the representation pi and the unitary X do not
depend on the quasi-invariant measure, in the same way V and L do not.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .base import graded_module
from .coaction import Coaction, coaction_from_rep, crossed_product_dual, verify_coaction, flags
from .groupoid import FiniteGroupoid, pair_name, transformation_groupoid, validate
from .kac import GroupoidKacSystem, build_system
from .opspace import (
    DEFAULT_TOL,
    OperatorSpace,
    adjoint_space,
    check_linear_iso,
    equality_residual,
    inclusion_residual,
    is_star_algebra,
    onb_span,
    rel_residual,
    space_product,
    zero_space,
)
from .report import Report


class BundleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ConcreteFellBundle:
    G: FiniteGroupoid
    fibers: tuple  # OperatorSpace per arrow, in G.arrows order
    backend: str = "rectangular"
    name: str = ""

    def __post_init__(self):
        if len(self.fibers) != self.G.n:
            raise BundleError(f"expected {self.G.n} fibers, got {len(self.fibers)}")
        if self.backend not in ("rectangular", "internal"):
            raise BundleError(f"unknown backend {self.backend!r}")
        dims = self.unit_dims
        for i, x in enumerate(self.G.arrows):
            want = (dims[self.G.unit_index[self.G.r[x]]], dims[self.G.unit_index[self.G.s[x]]])
            if self.fibers[i].shape != want:
                raise BundleError(f"fiber {x}: shape {self.fibers[i].shape}, expected {want}")

    @cached_property
    def unit_dims(self) -> tuple[int, ...]:
        return tuple(self.fibers[self.G.index[u]].rows for u in self.G.units)

    def fiber(self, x: str) -> OperatorSpace:
        return self.fibers[self.G.index[x]]

    @property
    def tol(self) -> float:
        return self.fibers[0].tol

    @cached_property
    def admissible(self) -> bool:
        return all(self.fiber(u).dim > 0 for u in self.G.units)

    @cached_property
    def section_basis(self) -> list[tuple[int, np.ndarray]]:
        """(arrow index, fiber basis matrix) pairs: a basis of all sections."""
        return [(i, b) for i, f in enumerate(self.fibers) for b in f.basis]

    def zero_section(self) -> list[np.ndarray]:
        return [np.zeros(f.shape, dtype=complex) for f in self.fibers]

    def delta_section(self, i: int, m) -> list[np.ndarray]:
        c = self.zero_section()
        c[i] = np.asarray(m, dtype=complex)
        return c


def line_bundle(G: FiniteGroupoid, tol: float = DEFAULT_TOL) -> ConcreteFellBundle:
    one = onb_span([np.ones((1, 1))], tol)
    return ConcreteFellBundle(G, tuple(one for _ in G.arrows), name="line")


def bundle_from_mats(G: FiniteGroupoid, mats: dict, shapes: dict | None = None, tol: float = DEFAULT_TOL,
                     backend: str = "rectangular", name: str = "") -> ConcreteFellBundle:
    """Fibers spanned by the given matrices; ``shapes`` fixes the shape of empty fibers."""
    fib = []
    for x in G.arrows:
        ms = mats.get(x, [])
        if ms:
            fib.append(onb_span(ms, tol))
        else:
            if shapes is None or x not in shapes:
                raise BundleError(f"fiber {x} is empty and has no declared shape")
            fib.append(zero_space(*shapes[x], tol=tol))
    return ConcreteFellBundle(G, tuple(fib), backend, name)


# -- validation ---------------------------------------------------------------------------

def _norm_ok(m: np.ndarray) -> float:
    """| ||m*m|| - ||m||^2 | for the operator norm (holds for matrices; spot check)."""
    a = np.linalg.norm(m, 2)
    return abs(np.linalg.norm(m.conj().T @ m, 2) - a * a)


def validate_bundle(F: ConcreteFellBundle) -> Report:
    G = F.G
    rep = Report("fell.validate", F.name, F.tol)
    bad = validate(G)
    rep.check("groupoid", "groupoid axioms", not bad)
    worst_prod = 0.0
    for x in G.arrows:
        for y in G.arrows:
            fx, fy = F.fiber(x), F.fiber(y)
            z = G.mul(x, y)
            if z is None:
                continue
            worst_prod = max(worst_prod, inclusion_residual(space_product(fx, fy), F.fiber(z)))
    rep.add("products", "F_x F_y ⊆ F_xy", worst_prod)
    rep.add("involution", "F_x* = F_{x⁻¹}",
            max(equality_residual(adjoint_space(F.fiber(x)), F.fiber(G.inv(x))) for x in G.arrows))
    rep.add("unit fibers", "F_u is a *-algebra", max(is_star_algebra(F.fiber(u)) for u in G.units))
    # e*e >= 0 inside F_{s(x)}: it is positive as a matrix and lies in the unit fiber
    pos, memb = 0.0, 0.0
    g = np.random.default_rng(5)
    for x in G.arrows:
        f = F.fiber(x)
        if f.dim == 0:
            continue
        for _ in range(2):
            e = np.einsum("i,ijk->jk", g.normal(size=f.dim) + 1j * g.normal(size=f.dim), f.basis)
            ee = e.conj().T @ e
            memb = max(memb, F.fiber(G.s[x]).residual(ee))
            ev = np.linalg.eigvalsh((ee + ee.conj().T) / 2)
            pos = max(pos, max(0.0, -float(ev.min())) / max(1.0, float(np.abs(ev).max())))
            pos = max(pos, _norm_ok(e) / max(1.0, np.linalg.norm(e, 2) ** 2))
    rep.add("positivity", "e*e ≥ 0 in F_s(x), ‖e*e‖ = ‖e‖²", max(pos, memb))
    rep.check("admissible", "F_u ≠ 0 for all units", F.admissible)
    return rep


def is_saturated(F: ConcreteFellBundle) -> bool:
    G = F.G
    for (x, y), z in G.compose.items():
        if equality_residual(space_product(F.fiber(x), F.fiber(y)), F.fiber(z)) > F.tol:
            return False
    return True


# -- sections -----------------------------------------------------------------------------

def convolve(F: ConcreteFellBundle, c: Sequence[np.ndarray], d: Sequence[np.ndarray]) -> list[np.ndarray]:
    """(cd)(x) = sum over y in G^{r(x)} of c(y) d(y⁻¹x), counting measure."""
    G = F.G
    out = F.zero_section()
    for (y, z), x in G.compose.items():
        i, j, k = G.index[y], G.index[z], G.index[x]
        out[k] = out[k] + c[i] @ d[j]
    return out


def involute(F: ConcreteFellBundle, c: Sequence[np.ndarray]) -> list[np.ndarray]:
    G = F.G
    return [np.asarray(c[G.inv_idx()[i]]).conj().T for i in range(G.n)]


def check_section(F: ConcreteFellBundle, c: Sequence[np.ndarray]) -> float:
    return max(F.fibers[i].residual(c[i]) for i in range(F.G.n))


def random_section(F: ConcreteFellBundle, rng: np.random.Generator) -> list[np.ndarray]:
    out = []
    for f in F.fibers:
        if f.dim == 0:
            out.append(np.zeros(f.shape, dtype=complex))
        else:
            out.append(np.einsum("i,ijk->jk", rng.normal(size=f.dim) + 1j * rng.normal(size=f.dim), f.basis))
    return out


def gamma2_inner(F: ConcreteFellBundle, c, d) -> list[np.ndarray]:
    """<c|d>(u) = sum over x in G_u of c(x)* d(x), an element of F_u."""
    G = F.G
    out = [np.zeros((n, n), dtype=complex) for n in F.unit_dims]
    for i, x in enumerate(G.arrows):
        out[G.unit_index[G.s[x]]] += np.asarray(c[i]).conj().T @ np.asarray(d[i])
    return out


def gamma2_report(F: ConcreteFellBundle, k: int = 4) -> Report:
    """The Γ² inner product is F_u-valued, positive, and equals (c*d)(u)."""
    if not F.admissible:
        raise BundleError("bundle is not admissible")
    G = F.G
    rep = Report("fell.gamma2", F.name, F.tol)
    g = np.random.default_rng(3)
    secs = [random_section(F, g) for _ in range(k)]
    memb = conv = 0.0
    for c in secs:
        for d in secs:
            ip = gamma2_inner(F, c, d)
            cd = convolve(F, involute(F, c), d)
            for u in G.units:
                ui, ai = G.unit_index[u], G.index[u]
                memb = max(memb, F.fiber(u).residual(ip[ui]))
                conv = max(conv, rel_residual(ip[ui], cd[ai]))
    rep.add("values in F_u", "⟨c|d⟩(u) ∈ F_u", memb)
    rep.add("inner = (c*d)(u)", "⟨c|d⟩(u) = (c*d)(u)", conv)
    # Gram matrix of the trace-realized inner product, on the section basis
    basis = F.section_basis
    gram = np.zeros((len(basis), len(basis)), dtype=complex)
    for a, (i, b) in enumerate(basis):
        for c_, (j, e) in enumerate(basis):
            if i == j:
                gram[a, c_] = np.trace(b.conj().T @ e)
    ev = np.linalg.eigvalsh((gram + gram.conj().T) / 2)
    rep.add("gram psd", "⟨c|c⟩ ≥ 0", max(0.0, -float(ev.min())))
    return rep


# -- the Hilbert space K_phi, pi and X ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class FellRep:
    """K = ⊕_phi K_phi in orthonormal coordinates, with gradings, pi and X."""

    F: ConcreteFellBundle
    sys: GroupoidKacSystem
    coords: tuple          # (weight index, arrow index, fiber basis matrix of F_x rho^{1/2})
    densities: tuple       # per weight: per unit density matrix rho_u

    @property
    def dim(self) -> int:
        return len(self.coords)

    @cached_property
    def arrow_of(self) -> np.ndarray:
        return np.array([c[1] for c in self.coords], dtype=int)

    @cached_property
    def gamma(self) -> np.ndarray:
        """Grading of j_phi: r(x)."""
        return self.sys.r[self.arrow_of]

    @cached_property
    def delta_hat(self) -> np.ndarray:
        """Grading of ĵ_phi: s(x)."""
        return self.sys.s[self.arrow_of]

    @cached_property
    def _blocks(self) -> dict:
        out = {}
        for k, (p, i, _) in enumerate(self.coords):
            out.setdefault((p, i), []).append(k)
        return out

    def pi(self, c: Sequence[np.ndarray]) -> np.ndarray:
        """(pi(c)d)(x) = sum_z c(z) d(z⁻¹x), in orthonormal coordinates."""
        G = self.F.G
        M = np.zeros((self.dim, self.dim), dtype=complex)
        for (z, y), x in G.compose.items():
            cz = np.asarray(c[G.index[z]])
            if not cz.any():
                continue
            iy, ix = G.index[y], G.index[x]
            for p in range(len(self.densities)):
                src = self._blocks.get((p, iy), [])
                dst = self._blocks.get((p, ix), [])
                if not src or not dst:
                    continue
                B = np.array([self.coords[k][2] for k in dst])
                for kj in src:
                    img = cz @ self.coords[kj][2]
                    M[dst, kj] += np.einsum("iab,ab->i", B.conj(), img)
        return M

    @cached_property
    def pi_basis(self) -> list[np.ndarray]:
        return [self.pi(self.F.delta_section(i, b)) for i, b in self.F.section_basis]

    @cached_property
    def X(self) -> np.ndarray:
        """X((x,k) ⊗ e_y) = (x,k) ⊗ e_{xy} for s(x) = r(y)."""
        G = self.F.G
        n = G.n
        K = self.dim
        X = np.zeros((K * n, K * n))
        mul = G.mul_table()
        for k in range(K):
            x = self.arrow_of[k]
            for y in range(n):
                z = mul[x, y]
                if z >= 0:
                    X[k * n + z, k * n + y] = 1.0
        return X


def _rank(mats, tol: float) -> int:
    return onb_span(mats, tol).dim if len(mats) else 0


def trace_weights(F: ConcreteFellBundle) -> list[list[np.ndarray]]:
    return [[np.eye(d) for d in F.unit_dims]]


def weights_and_rep(F: ConcreteFellBundle, sys: GroupoidKacSystem | None = None, weights=None) -> FellRep:
    """Build K, the gradings, pi and X for a weight family (default: fiberwise traces).

    Each weight is a list of positive semidefinite density matrices, one per unit,
    giving phi_u(a) = tr(rho_u a).
    """
    if not F.admissible:
        raise BundleError("bundle is not admissible")
    sys = sys or build_system(F.G, None, F.tol)
    weights = trace_weights(F) if weights is None else weights
    G = F.G
    coords = []
    dens = []
    for p, rhos in enumerate(weights):
        rhos = [np.asarray(r, dtype=complex) for r in rhos]
        if len(rhos) != len(G.units):
            raise BundleError("each weight needs one density per unit")
        roots = []
        for r in rhos:
            w, v = np.linalg.eigh((r + r.conj().T) / 2)
            if w.min() < -F.tol * max(1.0, abs(w).max()):
                raise BundleError("weight density is not positive")
            roots.append((v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T)
        dens.append(tuple(rhos))
        for i, x in enumerate(G.arrows):
            f = F.fibers[i]
            if f.dim == 0:
                continue
            root = roots[G.unit_index[G.s[x]]]
            sp = onb_span([b @ root for b in f.basis], F.tol, shape=f.shape)
            coords += [(p, i, b) for b in sp.basis]
    rep = FellRep(F, sys, tuple(coords), tuple(dens))
    # pi must be injective on sections (the family is faithful)
    if _rank(rep.pi_basis, F.tol) != len(F.section_basis):
        raise BundleError("weight family not faithful")
    return rep


def reduced_algebra(F: ConcreteFellBundle, sys: GroupoidKacSystem | None = None, rep: FellRep | None = None) -> OperatorSpace:
    """C*_r(F) = [L_F(Γ(F))] on the trace realization of Γ²."""
    rep = rep or weights_and_rep(F, sys)
    alg = onb_span(rep.pi_basis, F.tol, shape=(rep.dim, rep.dim))
    r = is_star_algebra(alg)
    if r > F.tol:
        raise BundleError(f"span of pi(sections) is not a *-algebra (residual {r:.2e})")
    return alg


def reduced_report(F: ConcreteFellBundle, sys: GroupoidKacSystem | None = None) -> Report:
    """pi is a faithful *-representation of the convolution algebra."""
    rep = weights_and_rep(F, sys)
    out = Report("fell.reduced", F.name, F.tol)
    g = np.random.default_rng(9)
    mult = star = assoc = 0.0
    for _ in range(3):
        c, d, e = (random_section(F, g) for _ in range(3))
        cd = convolve(F, c, d)
        mult = max(mult, rel_residual(rep.pi(cd), rep.pi(c) @ rep.pi(d)))
        star = max(star, rel_residual(rep.pi(involute(F, c)), rep.pi(c).conj().T))
        l = convolve(F, cd, e)
        r = convolve(F, c, convolve(F, d, e))
        assoc = max(assoc, max(rel_residual(a, b) for a, b in zip(l, r)))
        anti = involute(F, cd)
        dc = convolve(F, involute(F, d), involute(F, c))
        assoc = max(assoc, max(rel_residual(a, b) for a, b in zip(anti, dc)))
    out.add("associative", "(cd)e = c(de), (cd)* = d*c*", assoc)
    out.add("pi multiplicative", "π(cd) = π(c)π(d)", mult)
    out.add("pi *-preserving", "π(c*) = π(c)*", star)
    out.check("pi faithful", "∩ ker φ = {0}", _rank(rep.pi_basis, F.tol) == len(F.section_basis))
    alg = reduced_algebra(F, rep=rep)
    out.add("dim", "dim C*_r(F) = dim Γ(F)", abs(alg.dim - len(F.section_basis)))
    return out


# -- the coaction --------------------------------------------------------------------------

def bundle_coaction(F: ConcreteFellBundle, sys: GroupoidKacSystem | None = None, rep: FellRep | None = None) -> Coaction:
    """δ(π(c)) = X(π(c) ⊗ 1)X*, a coaction of C*_r(G) on π(C*_r(F))."""
    rep = rep or weights_and_rep(F, sys)
    alg = reduced_algebra(F, rep=rep)
    return coaction_from_rep(rep.X, alg, rep.sys, rep.gamma, rep.delta_hat, leg="A", src_h="r",
                             name=F.name or "bundle")


def bundle_coaction_report(F: ConcreteFellBundle, sys: GroupoidKacSystem | None = None) -> tuple[Report, Coaction, FellRep]:
    rep = weights_and_rep(F, sys)
    co = bundle_coaction(F, rep=rep)
    sys = rep.sys
    out = Report("fell.coaction", F.name, F.tol)
    gm = graded_module(rep.gamma, sys.k, F.tol)
    dm = graded_module(rep.delta_hat, sys.k, F.tol)
    out.add("gamma module", "(K, γ) is a C*-𝔟-module", max(gm.axiom_residuals().values()))
    out.add("delta-hat module", "(K, δ̂) is a C*-𝔟-module", max(dm.axiom_residuals().values()))
    out.extend(verify_coaction(co))
    # explicit formula: δ(π(c_z)) = (π(c_z) ⊗ L(δ_z)) on the carrier
    P = co.carrier.P
    worst = 0.0
    for (i, b), t in zip(F.section_basis, rep.pi_basis):
        d = co.delta(t)
        explicit = P @ np.kron(t, sys.L(F.G.arrows[i])) @ P
        worst = max(worst, rel_residual(d, explicit))
    out.add("explicit formula", "δ(π(c))(x,y) = Σ c(z)d(z⁻¹x,z⁻¹y)", worst)
    if sys.w.constant:
        out.add("slice formula", "⟨j(g)|₂δ(π(c))|j(g′)⟩₂ = π(c·h)", slice_residual(F, rep, co))
    f = flags(out)
    out.check("very fine and left-full", "very fine and left-full coaction", f["very fine"] and f["left-full"])
    return out, co, rep


def slice_residual(F: ConcreteFellBundle, rep: FellRep, co: Coaction, trials: int = 3) -> float:
    """<j(g)|_2 δ(π(c)) |j(g')>_2 = π(c h) with h(z) = sum_y conj(g(y)) g'(z⁻¹y)."""
    G, sys = F.G, rep.sys
    g_ = np.random.default_rng(13)
    car = co.carrier
    worst = 0.0
    for _ in range(trials):
        g = g_.normal(size=G.n) + 1j * g_.normal(size=G.n)
        g2 = g_.normal(size=G.n) + 1j * g_.normal(size=G.n)
        h = np.zeros(G.n, dtype=complex)
        for (zi, ai), yi in G.compose.items():  # y = z a, so z⁻¹y = a
            h[G.index[zi]] += np.conj(g[G.index[yi]]) * g2[G.index[ai]]
        c = random_section(F, g_)
        ch = [c[i] * h[i] for i in range(G.n)]
        lhs = car.bra2(sys.j(g)) @ co.delta(rep.pi(c)) @ car.ket2(sys.j(g2))
        worst = max(worst, rel_residual(lhs, rep.pi(ch)))
    return worst


def line_identification_report(G: FiniteGroupoid, mu=None, tol: float = DEFAULT_TOL) -> Report:
    """For the line bundle: K ≅ H, X = V, π(δ_x) = L(δ_x) and C*_r(F) = C*_r(G)."""
    sys = build_system(G, mu, tol)
    F = line_bundle(G, tol)
    rep = weights_and_rep(F, sys)
    out = Report("fell.line", F.name or "line", tol)
    # the identification sends the coordinate (x, b) to b * e_x; b is a phase
    Uid = np.zeros((G.n, rep.dim), dtype=complex)
    for k, (_, i, b) in enumerate(rep.coords):
        Uid[i, k] = b[0, 0]
    out.add("unitary", "K ≅ H", rel_residual(Uid.conj().T @ Uid, np.eye(rep.dim)))
    out.add("pi = L", "π(δ_x) = L(δ_x)",
            max(rel_residual(Uid @ rep.pi(F.delta_section(i, np.ones((1, 1)))) @ Uid.conj().T, sys.L(x))
                for i, x in enumerate(G.arrows)))
    W = np.kron(Uid, np.eye(G.n))
    out.add("X = V", "X ≅ V", rel_residual(W @ rep.X @ W.conj().T, sys.V))
    _, low = sys.leg_algebras
    alg = reduced_algebra(F, rep=rep)
    img = onb_span([Uid @ a @ Uid.conj().T for a in alg.basis], tol)
    out.add("C*r(F) = C*r(G)", "C*ᵣ(F) ≅ C*ᵣ(G)", equality_residual(img, low))
    return out


# -- transformation bundle and the crossed-product isomorphism ----------------------------

def transformation_bundle(F: ConcreteFellBundle) -> ConcreteFellBundle:
    """F²_sr over G ⋉ G: the fiber over (x, y) is F_x, with unit dims n_{r(y)}."""
    G = F.G
    T = transformation_groupoid(G)
    fib = {}
    for x in G.arrows:
        for y in G.arrows:
            if G.s[x] == G.r[y]:
                fib[pair_name(x, y)] = F.fiber(x)
    return ConcreteFellBundle(T, tuple(fib[a] for a in T.arrows), F.backend, (F.name or "F") + "²")


def transformation_convolution_residual(F: ConcreteFellBundle, T: ConcreteFellBundle, trials: int = 2) -> float:
    """(cd)(x,y) = sum_z c(xz⁻¹, zy) d(z, y), summed over z with s(z) = r(y)."""
    G, GT = F.G, T.G
    g = np.random.default_rng(17)
    worst = 0.0
    for _ in range(trials):
        c, d = random_section(T, g), random_section(T, g)
        cd = convolve(T, c, d)
        for x in G.arrows:
            for y in G.arrows:
                if G.s[x] != G.r[y]:
                    continue
                acc = np.zeros(F.fiber(x).shape, dtype=complex)
                for z in G.source_fiber(G.r[y]):
                    xz = G.mul(x, G.inv(z))
                    if xz is None:
                        continue
                    acc = acc + c[GT.index[pair_name(xz, G.mul(z, y))]] @ d[GT.index[pair_name(z, y)]]
                worst = max(worst, rel_residual(acc, cd[GT.index[pair_name(x, y)]]))
    return worst


def _linear_map(src: list[np.ndarray], dst: list[np.ndarray], tol: float) -> Callable[[np.ndarray], np.ndarray]:
    """The linear map sending src[i] to dst[i] (assumed well defined)."""
    A = np.array([np.asarray(s).reshape(-1) for s in src]).T
    B = np.array([np.asarray(d).reshape(-1) for d in dst]).T
    shape = np.asarray(dst[0]).shape
    pinv = np.linalg.pinv(A, rcond=tol)

    def f(m):
        return (B @ (pinv @ np.asarray(m).reshape(-1))).reshape(shape)
    return f


def star_iso_report(rep: Report, src: list[np.ndarray], dst: list[np.ndarray], src_alg: OperatorSpace,
                    dst_alg: OperatorSpace, prefix: str, tol: float, max_pairs: int = 400) -> None:
    """Well-definedness, bijectivity and *-multiplicativity of src[i] -> dst[i]."""
    ok, ra, rb, rj = check_linear_iso(src, dst, tol)
    rep.check(prefix + "well defined", "generator map extends linearly", ok)
    rep.add(prefix + "dims", "equal dimensions", abs(src_alg.dim - dst_alg.dim))
    rep.check(prefix + "bijective", "generator spans are the algebras", ok and ra == src_alg.dim and rb == dst_alg.dim)
    if not ok:
        rep.add(prefix + "multiplicative", "Φ(ab) = Φ(a)Φ(b)", np.inf)
        return
    f = _linear_map(src, dst, tol)
    g = np.random.default_rng(23)
    idx = [(i, j) for i in range(len(src)) for j in range(len(src))]
    if len(idx) > max_pairs:
        idx = [idx[k] for k in g.choice(len(idx), max_pairs, replace=False)]
    mult = max(rel_residual(f(src[i] @ src[j]), dst[i] @ dst[j]) for i, j in idx)
    star = max(rel_residual(f(s.conj().T), d.conj().T) for s, d in zip(src, dst))
    rep.add(prefix + "multiplicative", "Φ(ab) = Φ(a)Φ(b)", mult)
    rep.add(prefix + "*-preserving", "Φ(a*) = Φ(a)*", star)


def compact_operators(F: ConcreteFellBundle, rep: FellRep) -> OperatorSpace:
    """𝒦(Γ²) on K: span of |c⟩⟨d| for sections c, d supported on single arrows with s equal."""
    G = F.G
    mats = []
    blocks = rep._blocks
    K = rep.dim
    for w in G.arrows:
        for w2 in G.arrows:
            if G.s[w] != G.s[w2]:
                continue
            iw, iw2 = G.index[w], G.index[w2]
            src = blocks.get((0, iw), [])
            dst = blocks.get((0, iw2), [])
            for c in F.fiber(w2).basis:
                for d in F.fiber(w).basis:
                    M = np.zeros((K, K), dtype=complex)
                    for kj in src:
                        img = c @ d.conj().T @ rep.coords[kj][2]
                        for ki in dst:
                            M[ki, kj] = np.vdot(rep.coords[ki][2], img)
                    mats.append(M)
    return onb_span(mats, F.tol, shape=(K, K))


def crossed_product_iso(F: ConcreteFellBundle, sys: GroupoidKacSystem | None = None) -> Report:
    """π(C*_r(F)) ⋊ C₀(G) ≅ C*_r(F²_sr) by δ(π(c))(1 ⊗ δ_y) ↦ L(c at (x, y)); saturated: ≅ 𝒦(Γ²)."""
    rep = weights_and_rep(F, sys)
    sys = rep.sys
    G = F.G
    co = bundle_coaction(F, rep=rep)
    cp = crossed_product_dual(co)
    out = Report("fell.crossed", F.name, F.tol)
    out.extend(cp.report, "cp.")
    T = transformation_bundle(F)
    vt = validate_bundle(T)
    out.add("F2 valid", "F²ₛᵣ is a Fell bundle", max(i.residual for i in vt.items))
    out.add("F2 convolution", "(cd)(x,y) = Σ c(xz⁻¹,zy)d(z,y)", transformation_convolution_residual(F, T))
    trep = weights_and_rep(T)
    talg = reduced_algebra(T, rep=trep)
    W = co.carrier.W
    n = G.n
    src, dst = [], []
    for (i, b), t in zip(F.section_basis, rep.pi_basis):
        x = G.arrows[i]
        d = co.delta(t)
        for y in G.arrows:
            if G.s[x] != G.r[y]:
                continue
            Py = np.zeros((n, n))
            Py[G.index[y], G.index[y]] = 1.0
            src.append(W.conj().T @ d @ np.kron(np.eye(rep.dim), Py) @ W)
            dst.append(trep.pi(T.delta_section(T.G.index[pair_name(x, y)], b)))
    star_iso_report(out, src, dst, cp.algebra, talg, "", F.tol)
    if is_saturated(F):
        kop = compact_operators(F, rep)
        # Ψ: L(c at (x, y)) ↦ π(c_x) P_y, where P_y projects K onto the fiber over y
        psi = []
        for (i, b) in F.section_basis:
            x = G.arrows[i]
            t = rep.pi(F.delta_section(i, b))
            for y in G.arrows:
                if G.s[x] != G.r[y]:
                    continue
                Py = np.diag((rep.arrow_of == G.index[y]).astype(complex))
                psi.append(t @ Py)
        star_iso_report(out, dst, psi, talg, kop, "K.", F.tol)
        img = onb_span(psi, F.tol, shape=kop.shape)
        out.add("K.image", "Ψ(C*ᵣ(F²ₛᵣ)) = 𝒦(Γ²)", equality_residual(img, kop))
    return out


# -- morphisms -----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BundleMorphism:
    """Fiberwise maps T_x: F_x → 𝓜(𝒢)_x, given by the images of the fiber bases."""

    source: ConcreteFellBundle
    target: ConcreteFellBundle
    images: tuple  # per arrow: array (dim F_x, m_r, m_s)

    def apply(self, i: int, m: np.ndarray) -> np.ndarray:
        c = self.source.fibers[i].coords(m)
        im = self.images[i]
        if len(c) == 0:
            return np.zeros(self.target.fibers[i].shape, dtype=complex)
        return np.einsum("i,ijk->jk", c, im)

    def push(self, c: Sequence[np.ndarray]) -> list[np.ndarray]:
        return [self.apply(i, c[i]) for i in range(self.source.G.n)]


def identity_morphism(F: ConcreteFellBundle) -> BundleMorphism:
    return BundleMorphism(F, F, tuple(f.basis.copy() for f in F.fibers))


class MorphismError(ValueError):
    pass


def morphism_report(T: BundleMorphism) -> Report:
    F, Gb = T.source, T.target
    G = F.G
    if not G.same(Gb.G):
        raise MorphismError("not a bundle morphism: bundles live over different groupoids")
    tol = F.tol
    rep = Report("fell.morphism", F.name, tol)
    mult = star = mul_ok = 0.0
    for (x, y), z in G.compose.items():
        ix, iy, iz = G.index[x], G.index[y], G.index[z]
        for a in F.fibers[ix].basis:
            for b in F.fibers[iy].basis:
                mult = max(mult, rel_residual(T.apply(iz, a @ b), T.apply(ix, a) @ T.apply(iy, b)))
    for i, x in enumerate(G.arrows):
        j = G.inv_idx()[i]
        for a in F.fibers[i].basis:
            ta = T.apply(i, a)
            star = max(star, rel_residual(T.apply(j, a.conj().T), ta.conj().T))
            # multiplier of order x: T(a) 𝒢_s(x) ⊆ 𝒢_x and T(a)* 𝒢_x ⊆ 𝒢_s(x)
            for g in Gb.fiber(G.s[x]).basis:
                mul_ok = max(mul_ok, Gb.fibers[i].residual(ta @ g))
            for g in Gb.fibers[i].basis:
                mul_ok = max(mul_ok, Gb.fiber(G.s[x]).residual(ta.conj().T @ g))
    rep.add("multiplicative", "T(ab) = T(a)T(b)", mult)
    rep.add("*-compatible", "T(a*) = T(a)*", star)
    rep.add("multipliers", "T(F_x) ⊆ 𝓜(𝒢)_x", mul_ok)
    nd = 0.0
    for i, x in enumerate(G.arrows):
        span = onb_span([T.apply(i, a) @ g for a in F.fibers[i].basis for g in Gb.fiber(G.s[x]).basis],
                        tol, shape=Gb.fibers[i].shape)
        nd = max(nd, equality_residual(span, Gb.fibers[i]))
    rep.add("nondegenerate", "[T(F_x)𝒢_s(x)] = 𝒢_x", nd)
    return rep


def apply_morphism(T: BundleMorphism, sys: GroupoidKacSystem | None = None) -> Report:
    """T_* on sections, its extension π_F(c) ↦ π_𝒢(T_* c), and equivariance of the coactions."""
    rep = morphism_report(T)
    if not rep.ok:
        bad = rep.failures()[0]
        raise MorphismError(f"not a bundle morphism: {bad.id}")
    F, Gb = T.source, T.target
    G = F.G
    sys = sys or build_system(G, None, F.tol)
    rF = weights_and_rep(F, sys)
    rG = weights_and_rep(Gb, sys)
    g = np.random.default_rng(29)
    mult = 0.0
    for _ in range(3):
        c, d = random_section(F, g), random_section(F, g)
        mult = max(mult, rel_residual(rG.pi(T.push(convolve(F, c, d))), rG.pi(T.push(c)) @ rG.pi(T.push(d))))
    rep.add("T_* multiplicative", "T_*(cd) = T_*(c)T_*(d)", mult)
    src = rF.pi_basis
    dst = [rG.pi(T.push(F.delta_section(i, b))) for i, b in F.section_basis]
    ok, ra, _, _ = check_linear_iso(src, dst, F.tol)
    rep.check("extends to C*r", "π_F(c) ↦ π_𝒢(T_* c) well defined", ok or ra == len(src))
    coG = bundle_coaction(Gb, rep=rG)
    P = coG.carrier.P
    worst = 0.0
    for (i, b), t in zip(F.section_basis, dst):
        lhs = coG.X @ np.kron(t, np.eye(G.n)) @ coG.X.conj().T
        rhs = P @ np.kron(t, sys.L(G.arrows[i])) @ P
        worst = max(worst, rel_residual(lhs, rhs))
    rep.add("equivariant", "δ_𝒢(T̃(π(c))) = (T̃ ∗ id)(δ_F(π(c)))", worst)
    return rep
