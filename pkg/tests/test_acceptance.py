"""Acceptance criteria 1-9, one test per criterion.

Each test records a single PASS/FAIL line; the lines are printed in the
terminal summary (see conftest.py) and by running this file directly.
Tolerances: 1e-9 relative Frobenius unless a criterion says otherwise.
"""

import io
import json
from pathlib import Path

import numpy as np
import pytest

from qgdual import zoo
from qgdual.actions import coaction_from_action, groupoid_crossed_iso, roundtrip_report
from qgdual.cli import EXIT_FAIL, EXIT_INPUT, EXIT_OK, run_command
from qgdual.coaction import bidual_duality_check, flags, verify_coaction
from qgdual.etale import comultiplication_coaction, round_trip_eta, singleton_spaces, verify_reconstruction
from qgdual.fell import (
    bundle_coaction,
    bundle_coaction_report,
    compact_operators,
    crossed_product_iso,
    is_saturated,
    line_identification_report,
    validate_bundle,
    weights_and_rep,
)
from qgdual.fileformat import parse_action, parse_bundle, serialize_action, serialize_bundle
from qgdual.groupoid import parse_groupoid, serialize
from qgdual.kac import (
    build_system,
    legs_report,
    mutate,
    swap_columns,
    verify_kac,
    verify_leg_identities,
    verify_pmu,
)
from qgdual.opspace import equality_residual, onb_span, rel_residual

TOL = 1e-9
FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
RESULTS: dict[int, str] = {}


def record(n: int, failures: list[str], checked: str) -> None:
    if failures:
        shown = "; ".join(failures[:4]) + (f"; +{len(failures) - 4} more" if len(failures) > 4 else "")
        RESULTS[n] = f"criterion {n}: FAIL  {checked}: {shown}"
    else:
        RESULTS[n] = f"criterion {n}: PASS  {checked}"
    print(RESULTS[n])
    assert not failures, RESULTS[n]


def within(rep, tol=TOL) -> bool:
    return rep.ok and all(i.residual <= tol for i in rep.items)


def named_systems():
    """Every zoo groupoid with mu = 1 and, where there are two or more units, a skewed mu."""
    out = []
    for name, G in zoo.groupoids().items():
        out.append((name, build_system(G, None, TOL)))
        mu = zoo.skewed_weight(G)
        if mu is not None:
            out.append((name + "_mu", build_system(G, mu, TOL)))
    return out


@pytest.fixture(scope="module")
def all_systems():
    return named_systems()


def convolution_rank(G) -> int:
    """Rank of span{L(delta_a)} from the composition table alone."""
    pos = {x: i for i, x in enumerate(G.arrows)}
    mats = []
    for a in G.arrows:
        m = np.zeros((G.n, G.n))
        for (x, y), xy in G.compose.items():
            if x == a:
                m[pos[xy], pos[y]] = 1.0
        mats.append(m.ravel())
    return int(np.linalg.matrix_rank(np.array(mats)))


# -- 1 ------------------------------------------------------------------------------------------

def test_criterion_1_kac_axioms(all_systems):
    bad = []
    for name, sys in all_systems:
        for rep in (verify_pmu(sys), verify_kac(sys)):
            bad += [f"{name} {i.id}" for i in rep.items if not (i.passed and i.residual <= TOL)]
        if sys.n < 2:
            continue  # a 1x1 unitary has no transposition to apply
        G, n = sys.G, sys.n
        pairs = sorted(G.compose)
        c0, c1 = (G.index[a] * n + G.index[b] for a, b in (pairs[0], pairs[-1]))
        mV = mutate(sys, V=swap_columns(sys.V, c0, c1))
        if verify_pmu(mV).ok and verify_kac(mV).ok:
            bad.append(f"{name} V mutant undetected")
        mU = mutate(sys, U=swap_columns(sys.U, 0, n - 1))
        if verify_pmu(mU).ok and verify_kac(mU).ok:
            bad.append(f"{name} U mutant undetected")
    record(1, bad, f"pmu + Kac identities and V/U mutants on {len(all_systems)} systems")


# -- 2 ------------------------------------------------------------------------------------------

def test_criterion_2_legs(all_systems):
    bad = []
    for name, sys in all_systems:
        G = sys.G
        hat, low = sys.leg_algebras
        if hat.dim != G.n:
            bad.append(f"{name} dim A_hat {hat.dim} != {G.n}")
        diag = onb_span([np.diag(np.eye(G.n)[i]) for i in range(G.n)], TOL)
        if equality_residual(hat, diag) > TOL:
            bad.append(f"{name} A_hat is not the diagonal algebra")
        oracle = convolution_rank(G)
        if low.dim != oracle:
            bad.append(f"{name} dim A {low.dim} != convolution rank {oracle}")
        if name.startswith("pair") and not name.endswith("_mu"):
            k = len(G.units)
            if low.dim != k * k:
                bad.append(f"{name} dim A {low.dim} != {k * k}")
        if len(G.units) == 1 and low.dim != G.n:
            bad.append(f"{name} group dim A {low.dim} != |G|")
        legs = legs_report(sys)
        if legs.residual("comult_hat = f(xy)") != 0.0:
            bad.append(f"{name} comult_hat differs from f(xy) on a basis vector")
        if not within(legs):
            bad.append(f"{name} legs report")
        ids = verify_leg_identities(sys)
        for key in ("coassoc[comult]", "coassoc[comult_hat]"):
            if ids.residual(key) > TOL:
                bad.append(f"{name} {key} {ids.residual(key):.1e}")
    record(2, bad, "leg dimensions, diagonal A_hat, convolution rank oracle, coassociativity")


# -- 3 ------------------------------------------------------------------------------------------

def test_criterion_3_derived_identities(all_systems):
    bad = []
    for name, sys in all_systems:
        r = rel_residual(sys.V_hat, sys.V_op)
        if r > 1e-12:
            bad.append(f"{name} V_hat - V_op {r:.1e}")
        rep = verify_leg_identities(sys)
        bad += [f"{name} {i.id}" for i in rep.items if not (i.passed and i.residual <= TOL)]
    record(3, bad, "V_hat = V_op (1e-12), [A A_hat] = [ah ah*], leg identities of V_check and V_hat")


# -- 4 ------------------------------------------------------------------------------------------

def test_criterion_4_fell_bundles():
    bad = []
    for name, G in zoo.groupoids().items():
        skew = zoo.skewed_weight(G)
        for tag, mu in [("", None)] + ([("_mu", skew)] if skew else []):
            if not within(line_identification_report(G, mu, TOL)):
                bad.append(f"line bundle over {name}{tag}")
    for name, F in zoo.bundles(TOL).items():
        if not validate_bundle(F).ok:
            bad.append(f"{name} validate")
        if F.admissible:
            rep, _, _ = bundle_coaction_report(F)
            f = flags(rep)
            if not (rep.ok and f["very fine"] and f["left-full"]):
                bad.append(f"{name} coaction not certified very fine and left-full")
    record(4, bad, "line bundle = C*r(G), bundle fixtures validate, bundle coactions very fine + left-full")


# -- 5 ------------------------------------------------------------------------------------------

def test_criterion_5_crossed_products():
    bad = []
    for name, F in zoo.bundles(TOL).items():
        if not F.admissible:
            continue
        rep = crossed_product_iso(F)
        if rep.residual("dims") != 0.0:
            bad.append(f"{name} crossed product and C*r(F2) differ in dimension")
        if rep.residual("multiplicative") > TOL or rep.residual("*-preserving") > TOL:
            bad.append(f"{name} generator map not *-multiplicative")
        if not rep.ok:
            bad += [f"{name} {i.id}" for i in rep.failures()]
        if is_saturated(F):
            # literal clause: dim K(Gamma2) = (rank of the Gamma2 realization)^2
            frep = weights_and_rep(F)
            k_dim = compact_operators(F, frep).dim
            if k_dim != frep.dim ** 2:
                bad.append(f"{name} dim K(Gamma2) = {k_dim}, rank^2 = {frep.dim ** 2}")
    record(5, bad, "pi(C*r F) x C0(G) = C*r(F2), saturated: C*r(F2) = K(Gamma2) with dim = rank^2")


# -- 6 ------------------------------------------------------------------------------------------

def fine_coactions():
    out = [(name, bundle_coaction(F)) for name, F in zoo.bundles(TOL).items() if F.admissible]
    groupoids = zoo.groupoids()
    out += [(f"Delta {g}", comultiplication_coaction(build_system(groupoids[g], None, TOL)))
            for g in ("z2", "z3", "pair2", "z2_z3")]
    return out


def test_criterion_6_duality():
    bad = []
    count = 0
    for name, co in fine_coactions():
        if not flags(verify_coaction(co))["fine"]:
            continue
        count += 1
        rep = bidual_duality_check(co)
        if rep.residual("dim bidual = dim target") != 0.0:
            bad.append(f"{name} dimensions differ")
        if rep.residual("Psi multiplicative") > TOL or rep.residual("Psi *-preserving") > TOL:
            bad.append(f"{name} Psi not *-multiplicative")
        if not rep.ok:
            bad += [f"{name} {i.id}" for i in rep.failures()]
    if count == 0:
        bad.append("no fine coaction among the fixtures")
    record(6, bad, f"biduality with Psi a *-isomorphism on {count} fine coactions")


# -- 7 ------------------------------------------------------------------------------------------

def test_criterion_7_actions():
    bad = []
    for name, act in zoo.actions(TOL).items():
        rt = roundtrip_report(act)
        if rt.residual("sigma round trip") > TOL:
            bad.append(f"{name} sigma round trip {rt.residual('sigma round trip'):.1e}")
        if not rt.ok:
            bad += [f"{name} {i.id}" for i in rt.failures()]
        cp = groupoid_crossed_iso(act)
        if cp.residual("multiplicative") > TOL or not cp.ok:
            bad.append(f"{name} crossed product map")
        f = flags(verify_coaction(coaction_from_action(act).coaction))
        if not (f["injective"] and f["left-full"] and f["right-full"]):
            bad.append(f"{name} admissible coaction not injective, left-full and right-full")
    record(7, bad, "sigma -> delta -> sigma, crossed products agree, admissible coactions full and injective")


# -- 8 ------------------------------------------------------------------------------------------

def test_criterion_8_reconstruction():
    bad = []
    for name, F in zoo.bundles(TOL).items():
        if not F.admissible:
            continue
        eta = round_trip_eta(F)
        if eta.residual("fiber dims") != 0.0:
            bad.append(f"{name} fiber dimensions")
        if eta.residual("iota eta = pi") > TOL or not eta.ok:
            bad.append(f"{name} iota eta != pi")
        rec = verify_reconstruction(bundle_coaction(F))
        for key in ("p.idempotent", "p.contractive", "p.faithful"):
            if rec.residual(key) > TOL:
                bad.append(f"{name} {key}")
        if not rec.ok:
            bad += [f"{name} {i.id}" for i in rec.failures()]
    for g in ("z2", "z3", "s3"):
        sys = build_system(zoo.groupoids()[g], None, TOL)
        for x, f in zip(sys.G.arrows, singleton_spaces(comultiplication_coaction(sys))):
            if f.dim != 1 or equality_residual(f, onb_span([sys.L(x)], TOL)) > TOL:
                bad.append(f"Delta {g}: fiber over {x} is not C L(delta_x)")
    record(8, bad, "fiber dims, iota eta = pi, p idempotent/contractive/faithful, Delta of a group gives the line bundle")


# -- 9 ------------------------------------------------------------------------------------------

def _run(argv):
    out, err = io.BytesIO(), io.StringIO()
    return run_command(argv, out, err), out.getvalue()


def test_criterion_9_formats_and_reports(tmp_path):
    bad = []
    files = sorted(FIXTURES.iterdir())
    for p in files:
        text = p.read_text()
        if p.suffix == ".gpd":
            again = serialize(*parse_groupoid(text))
        elif p.suffix == ".bnd":
            again = serialize_bundle(parse_bundle(text))
        else:
            again = serialize_action(parse_action(text))
        if again != text:
            bad.append(f"{p.name} parse/serialize")
    for argv in (["kac", "verify", "pair2_mu.gpd"], ["fell", "crossed", "graded_z2.bnd"],
                 ["duality", "line_pair2.bnd"], ["action", "roundtrip", "conj_z2.act"],
                 ["reconstruct", "rank12_pair2.bnd"]):
        cmd = argv[:-1] + [str(FIXTURES / argv[-1]), "--format", "json"]
        a, b = _run(cmd), _run(cmd)
        if a != b:
            bad.append(f"{' '.join(argv)} json differs between runs")
        if a[0] != EXIT_OK or not json.loads(a[1])["pass"]:
            bad.append(f"{' '.join(argv)} did not exit {EXIT_OK}")
    if _run(["kac", "verify", str(FIXTURES / "z3.gpd"), "--tol", "1e-300"])[0] != EXIT_FAIL:
        bad.append(f"failing check did not exit {EXIT_FAIL}")
    broken = tmp_path / "broken.bnd"
    broken.write_text((FIXTURES / "graded_z2.bnd").read_text().replace("0 1; 0 0", "0 1; 0 zero"))
    for argv in (["fell", "verify", str(broken)], ["groupoid", "validate", str(tmp_path / "missing.gpd")]):
        if _run(argv)[0] != EXIT_INPUT:
            bad.append(f"{argv[-1]} did not exit {EXIT_INPUT}")
    golden = Path(__file__).resolve().parent / "golden"
    if not any(golden.glob("*.json")):
        bad.append("no golden files")
    record(9, bad, f"parse/serialize on {len(files)} fixture files, byte-identical json, exit codes 0/1/2")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
