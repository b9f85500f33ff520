"""Named fixtures: groupoids, weights, Fell bundles and actions.

``write_fixtures(dir)`` stores the whole zoo as text files, which is what
the command line suites and the golden-file tests read back.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .actions import GroupoidAction
from .fell import ConcreteFellBundle
from .fileformat import ActionSpec, BundleSpec, serialize_action, serialize_bundle
from .groupoid import (
    FiniteGroupoid,
    cyclic_group,
    group_bundle,
    pair_groupoid,
    serialize,
    symmetric_group,
    transformation_groupoid,
    trivial_groupoid,
)
from .opspace import DEFAULT_TOL

FLIP = np.array([[0.0, 1.0], [1.0, 0.0]])


def unit(i: int, j: int, rows: int, cols: int) -> np.ndarray:
    m = np.zeros((rows, cols))
    m[i, j] = 1.0
    return m


def matrix_units(rows: int, cols: int) -> list[np.ndarray]:
    return [unit(i, j, rows, cols) for i in range(rows) for j in range(cols)]


# -- groupoids ------------------------------------------------------------------------------

def groupoids() -> dict[str, FiniteGroupoid]:
    return {
        "trivial": trivial_groupoid(),
        "z2": cyclic_group(2),
        "z3": cyclic_group(3),
        "s3": symmetric_group(3),
        "pair2": pair_groupoid(2),
        "pair3": pair_groupoid(3),
        "pair4": pair_groupoid(4),
        "z2_z3": group_bundle([2, 3]),
        "trans_z2": transformation_groupoid(cyclic_group(2)),
    }


def skewed_weight(G: FiniteGroupoid) -> dict[str, float] | None:
    """A non-constant mu (1, 2, 3, ...) when there is more than one unit."""
    if len(G.units) < 2:
        return None
    return {u: float(i + 1) for i, u in enumerate(G.units)}


# -- bundles --------------------------------------------------------------------------------

def _pair_ends(G: FiniteGroupoid):
    u1, u2 = G.units[:2]
    a12 = next(a for a in G.arrows if G.r[a] == u1 and G.s[a] == u2)
    return u1, u2, a12, G.inverse[a12]


def _line_spec(G: FiniteGroupoid) -> BundleSpec:
    return BundleSpec(G, None, {x: (1, 1) for x in G.arrows}, {x: [np.eye(1)] for x in G.arrows})


def bundle_specs() -> dict[str, BundleSpec]:
    """Bundles as written in their files: spanning matrices per arrow."""
    z2, p2, triv = cyclic_group(2), pair_groupoid(2), trivial_groupoid()
    out = {
        "line_z2": _line_spec(z2),
        "line_z3": _line_spec(cyclic_group(3)),
        "line_pair2": _line_spec(p2),
        "line_z2_z3": _line_spec(group_bundle([2, 3])),
        "matrix_trivial": BundleSpec(triv, None, {"e": (2, 2)}, {"e": matrix_units(2, 2)}),
        # e carries the diagonal, g the off-diagonal part of M_2
        "graded_z2": BundleSpec(z2, None, {"e": (2, 2), "g": (2, 2)},
                                {"e": [unit(0, 0, 2, 2), unit(1, 1, 2, 2)], "g": [unit(0, 1, 2, 2), unit(1, 0, 2, 2)]}),
        # zero fiber over g: admissible but not saturated
        "sparse_z2": BundleSpec(z2, None, {"e": (1, 1), "g": (1, 1)}, {"e": [np.eye(1)], "g": []}),
    }
    u1, u2, a12, a21 = _pair_ends(p2)
    out["rank12_pair2"] = BundleSpec(
        p2, None, {u1: (1, 1), u2: (2, 2), a12: (1, 2), a21: (2, 1)},
        {u1: [np.eye(1)], u2: matrix_units(2, 2), a12: matrix_units(1, 2), a21: matrix_units(2, 1)})
    return out


def bundles(tol: float = DEFAULT_TOL) -> dict[str, ConcreteFellBundle]:
    return {name: spec.bundle(tol, name) for name, spec in bundle_specs().items()}


# -- actions --------------------------------------------------------------------------------

def action_specs() -> dict[str, ActionSpec]:
    """Actions as written in their files: a basis per unit and its images per arrow."""
    z2, p2 = cyclic_group(2), pair_groupoid(2)
    u1, u2, a12, a21 = _pair_ends(p2)
    m2 = matrix_units(2, 2)
    conj = [FLIP @ m @ FLIP for m in m2]
    one = [np.eye(1)]
    out = {
        "conj_z2": ActionSpec(z2, None, {"e": (2, 2)}, {"e": m2}, {"e": m2, "g": conj}),
        "trivial_z2": ActionSpec(z2, None, {"e": (1, 1)}, {"e": one}, {"e": one, "g": one}),
        "line_pair2": ActionSpec(p2, None, {u1: (1, 1), u2: (1, 1)}, {u1: one, u2: one},
                                 {x: one for x in p2.arrows}),
        # C I_2 over one unit and C over the other: the action does not preserve plain traces
        "scalar_pair2": ActionSpec(p2, None, {u1: (2, 2), u2: (1, 1)}, {u1: [np.eye(2)], u2: one},
                                   {u1: [np.eye(2)], a12: [np.eye(2)], a21: one, u2: one}),
    }
    diag = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    out["flip_diag_z2"] = ActionSpec(z2, None, {"e": (2, 2)}, {"e": diag}, {"e": diag, "g": diag[::-1]})
    return out


def actions(tol: float = DEFAULT_TOL) -> dict[str, GroupoidAction]:
    return {name: spec.action(tol, name) for name, spec in action_specs().items()}


# -- files ----------------------------------------------------------------------------------

def write_fixtures(directory: str | Path) -> list[Path]:
    """Write every groupoid (.gpd), bundle (.bnd) and action (.act); returns the paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name: str, text: str) -> None:
        p = d / name
        p.write_text(text, encoding="utf-8")
        written.append(p)

    for name, G in groupoids().items():
        put(f"{name}.gpd", serialize(G))
        mu = skewed_weight(G)
        if mu is not None:
            put(f"{name}_mu.gpd", serialize(G, mu))
    for name, spec in bundle_specs().items():
        put(f"{name}.bnd", serialize_bundle(spec))
    for name, spec in action_specs().items():
        put(f"{name}.act", serialize_action(spec))
    return written
