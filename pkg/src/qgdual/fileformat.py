"""Text formats for Fell bundles (.bnd) and groupoid actions (.act).

Both extend the groupoid format. The groupoid sections may be written
inline or replaced by a reference line ``groupoid: other.gpd`` (resolved
relative to the referencing file). Matrices are written row-major with
rows separated by ``;`` and entries by spaces; complex entries read
``a+bi``. Several matrices on one line are separated by ``|``.

Bundle files add a ``fibers:`` section with one line per arrow::

    fibers:
      e 2x2: 1 0; 0 0 | 0 0; 0 1
      g 2x2: 0 1; 0 0 | 0 0; 1 0

The matrices span F_x; ``-`` marks a zero fiber of the stated shape.

Action files add ``algebras:`` (a basis of C_u per unit) and ``actions:``
(the images sigma_x(b) of that basis of C_{s(x)}, in order)::

    algebras:
      u 2x2: 1 0; 0 0 | 0 0; 0 1
    actions:
      g: 0 0; 0 1 | 1 0; 0 0
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .actions import CgAlgebra, GroupoidAction, action_from_images
from .fell import ConcreteFellBundle, bundle_from_mats
from .groupoid import (
    SECTIONS,
    FiniteGroupoid,
    GroupoidFormatError,
    _split_sections,
    parse_groupoid,
    parse_sections,
    serialize,
    validate,
)
from .opspace import DEFAULT_TOL, onb_span


class FormatError(GroupoidFormatError):
    """Malformed bundle or action file; carries a 1-based line number."""


# -- numbers and matrices -------------------------------------------------------------------

_COMPLEX = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:e[+-]?\d+)?)?(?:([+-])((?:\d+\.?\d*|\.\d+)(?:e[+-]?\d+)?)?i)?$",
                      re.IGNORECASE)


def parse_number(tok: str, line: int = 0) -> complex:
    """``1``, ``-0.5``, ``2e-3``, ``i``, ``-i``, ``0.5i``, ``1-2i`` and so on."""
    t = tok.strip()
    if t.endswith(("i", "I")) and re.match(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:e[+-]?\d+)?i$|^[+-]?i$", t, re.IGNORECASE):
        # a bare imaginary number
        body = t[:-1]
        if body in ("", "+", "-"):
            body += "1"
        return complex(0.0, float(body))
    m = _COMPLEX.match(t)
    if not m or not t or m.group(1) is None:
        raise FormatError(f"bad number {tok!r}", line)
    re_part = float(m.group(1))
    im_part = 0.0
    if m.group(2):
        mag = float(m.group(3)) if m.group(3) else 1.0
        im_part = mag if m.group(2) == "+" else -mag
    return complex(re_part, im_part)


def _real(v: float) -> str:
    if v == 0:
        return "0"
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def format_number(z: complex) -> str:
    z = complex(z)
    re_, im = z.real, z.imag
    if not (math.isfinite(re_) and math.isfinite(im)):
        raise ValueError("cannot write a non-finite entry")
    if im == 0:
        return _real(re_)
    mag = _real(abs(im))
    mag = "" if mag == "1" else mag
    if re_ == 0:
        return ("-" if im < 0 else "") + mag + "i"
    return f"{_real(re_)}{'-' if im < 0 else '+'}{mag}i"


def parse_matrix(text: str, shape: tuple[int, int], line: int = 0) -> np.ndarray:
    rows = [r.split() for r in text.split(";")]
    if len(rows) != shape[0] or any(len(r) != shape[1] for r in rows):
        raise FormatError(f"matrix {text.strip()!r} does not have shape {shape[0]}x{shape[1]}", line)
    return np.array([[parse_number(t, line) for t in r] for r in rows], dtype=complex).reshape(shape)


def format_matrix(m: np.ndarray) -> str:
    return "; ".join(" ".join(format_number(v) for v in row) for row in np.asarray(m))


def _parse_shape(tok: str, line: int) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+)x(\d+)", tok)
    if not m:
        raise FormatError(f"expected a shape like 2x3, got {tok!r}", line)
    return int(m.group(1)), int(m.group(2))


def _parse_list(body: str, shape: tuple[int, int], line: int) -> list[np.ndarray]:
    body = body.strip()
    if body == "-":
        return []
    if not body:
        raise FormatError("missing matrices (write '-' for a zero fiber)", line)
    return [parse_matrix(part, shape, line) for part in body.split("|")]


def _format_list(mats) -> str:
    return " | ".join(format_matrix(m) for m in mats) if len(mats) else "-"


# -- shared groupoid handling ----------------------------------------------------------------

def _groupoid_part(sec, extra: str, base_dir: Path | None):
    """Either the inline groupoid sections or a ``groupoid: path`` reference."""
    ref_items = sec.get("groupoid")
    inline = [k for k in SECTIONS if k in sec]
    if ref_items is None:
        G, mu = parse_sections(sec)
        bad = validate(G)
        if bad:
            raise FormatError("groupoid axioms violated: " + "; ".join(bad[:5]))
        return G, mu, None
    if inline:
        raise FormatError(f"section {inline[0]!r} given next to a groupoid reference", ref_items[0][0])
    if len(ref_items) != 1:
        raise FormatError("groupoid reference needs exactly one path", ref_items[0][0] if ref_items else 0)
    no, ref = ref_items[0]
    path = Path(ref)
    if not path.is_absolute():
        if base_dir is None:
            raise FormatError(f"relative groupoid reference {ref!r} needs a base directory", no)
        path = base_dir / path
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read groupoid {ref!r}: {exc.strerror}", no) from None
    try:
        G, mu = parse_groupoid(text)
    except GroupoidFormatError as exc:
        raise FormatError(f"in {ref}: {exc}", no) from None
    return G, mu, ref


def _groupoid_text(G: FiniteGroupoid, mu, ref: str | None) -> str:
    return f"groupoid: {ref}\n" if ref is not None else serialize(G, mu)


def _entries(sec, key: str):
    """Lines ``name [shape]: body`` of a section, as (line, name, shape token or None, body)."""
    out = []
    for no, line in sec.get(key, []):
        head, sep, body = line.partition(":")
        if not sep:
            raise FormatError(f"expected ':' in {line!r}", no)
        parts = head.split()
        if len(parts) not in (1, 2):
            raise FormatError(f"malformed entry head {head.strip()!r}", no)
        out.append((no, parts[0], parts[1] if len(parts) == 2 else None, body))
    return out


# -- bundles ----------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BundleSpec:
    """A bundle exactly as written: spanning matrices per arrow."""

    G: FiniteGroupoid
    mu: Mapping[str, float] | None
    shapes: dict          # arrow -> (rows, cols)
    mats: dict            # arrow -> list of matrices
    ref: str | None = None

    def bundle(self, tol: float = DEFAULT_TOL, name: str = "") -> ConcreteFellBundle:
        return bundle_from_mats(self.G, self.mats, self.shapes, tol, name=name)

    def same(self, other: "BundleSpec") -> bool:
        if not self.G.same(other.G) or dict(self.mu or {}) != dict(other.mu or {}) or self.ref != other.ref:
            return False
        if self.shapes != other.shapes:
            return False
        return all(len(self.mats[x]) == len(other.mats[x])
                   and all(np.array_equal(a, b) for a, b in zip(self.mats[x], other.mats[x]))
                   for x in self.G.arrows)


def parse_bundle(text: str, base_dir: str | Path | None = None) -> BundleSpec:
    sec = _split_sections(text, SECTIONS + ("groupoid", "fibers"))
    G, mu, ref = _groupoid_part(sec, "fibers", Path(base_dir) if base_dir is not None else None)
    if "fibers" not in sec:
        raise FormatError("missing section 'fibers'")
    shapes, mats = {}, {}
    for no, x, shp, body in _entries(sec, "fibers"):
        if x not in G.index:
            raise FormatError(f"unknown arrow {x!r}", no)
        if x in shapes:
            raise FormatError(f"duplicate fiber for {x!r}", no)
        if shp is None:
            raise FormatError(f"fiber {x!r} needs a shape", no)
        shapes[x] = _parse_shape(shp, no)
        mats[x] = _parse_list(body, shapes[x], no)
    header = next(n for n, k in sec["_headers"] if k == "fibers")
    for x in G.arrows:
        if x not in shapes:
            raise FormatError(f"fiber for arrow {x!r} missing", header)
    dims = {}
    for x in G.arrows:
        for u, d in ((G.r[x], shapes[x][0]), (G.s[x], shapes[x][1])):
            if dims.setdefault(u, d) != d:
                raise FormatError(f"fiber {x!r}: unit {u!r} has dimension {dims[u]} elsewhere", header)
    return BundleSpec(G, mu, shapes, mats, ref)


def serialize_bundle(spec: BundleSpec) -> str:
    lines = [_groupoid_text(spec.G, spec.mu, spec.ref).rstrip("\n"), "fibers:"]
    for x in spec.G.arrows:
        r, c = spec.shapes[x]
        lines.append(f"  {x} {r}x{c}: {_format_list(spec.mats[x])}")
    return "\n".join(lines) + "\n"


def bundle_spec(F: ConcreteFellBundle, mu=None, ref: str | None = None) -> BundleSpec:
    G = F.G
    return BundleSpec(G, mu, {x: F.fiber(x).shape for x in G.arrows}, {x: list(F.fiber(x).basis) for x in G.arrows}, ref)


def load_bundle(path: str | Path) -> BundleSpec:
    p = Path(path)
    return parse_bundle(p.read_text(encoding="utf-8"), p.parent)


# -- actions ----------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ActionSpec:
    G: FiniteGroupoid
    mu: Mapping[str, float] | None
    shapes: dict        # unit -> (m, m)
    algebras: dict      # unit -> basis matrices of C_u as written
    images: dict        # arrow -> images of the basis of C_{s(x)}
    ref: str | None = None

    def action(self, tol: float = DEFAULT_TOL, name: str = "") -> GroupoidAction:
        G = self.G
        fibers = tuple(onb_span(self.algebras[u], tol) for u in G.units)
        C = CgAlgebra(G, fibers, name)
        ims = {}
        for x in G.arrows:
            # express sigma_x on the orthonormal basis: sigma(b_on) = sum S⁻¹ coefficients
            src = fibers[G.unit_index[G.s[x]]]
            gens = np.array([src.coords(b) for b in self.algebras[G.s[x]]]).T  # dim x dim
            inv = np.linalg.inv(gens)
            imgs = np.array(self.images[x])
            ims[x] = [np.einsum("i,ijk->jk", inv[:, k], imgs) for k in range(src.dim)]
        return action_from_images(C, ims)

    def same(self, other: "ActionSpec") -> bool:
        if not self.G.same(other.G) or dict(self.mu or {}) != dict(other.mu or {}) or self.ref != other.ref:
            return False
        if self.shapes != other.shapes:
            return False
        eq = lambda a, b: len(a) == len(b) and all(np.array_equal(p, q) for p, q in zip(a, b))
        return all(eq(self.algebras[u], other.algebras[u]) for u in self.G.units) and \
            all(eq(self.images[x], other.images[x]) for x in self.G.arrows)


def parse_action(text: str, base_dir: str | Path | None = None, tol: float = DEFAULT_TOL) -> ActionSpec:
    sec = _split_sections(text, SECTIONS + ("groupoid", "algebras", "actions"))
    G, mu, ref = _groupoid_part(sec, "algebras", Path(base_dir) if base_dir is not None else None)
    for key in ("algebras", "actions"):
        if key not in sec:
            raise FormatError(f"missing section {key!r}")
    heads = dict((k, n) for n, k in sec["_headers"])
    shapes, algebras = {}, {}
    for no, u, shp, body in _entries(sec, "algebras"):
        if u not in G.unit_index:
            raise FormatError(f"unknown unit {u!r}", no)
        if u in shapes:
            raise FormatError(f"duplicate algebra for {u!r}", no)
        if shp is None:
            raise FormatError(f"algebra {u!r} needs a shape", no)
        shape = _parse_shape(shp, no)
        if shape[0] != shape[1]:
            raise FormatError(f"algebra {u!r} must consist of square matrices", no)
        mats = _parse_list(body, shape, no)
        if not mats:
            raise FormatError(f"algebra {u!r} is zero", no)
        if onb_span(mats, tol).dim != len(mats):
            raise FormatError(f"matrices for {u!r} are linearly dependent", no)
        shapes[u], algebras[u] = shape, mats
    for u in G.units:
        if u not in shapes:
            raise FormatError(f"algebra for unit {u!r} missing", heads["algebras"])
    images = {}
    for no, x, shp, body in _entries(sec, "actions"):
        if x not in G.index:
            raise FormatError(f"unknown arrow {x!r}", no)
        if x in images:
            raise FormatError(f"duplicate action entry for {x!r}", no)
        if shp is not None:
            raise FormatError(f"action entry {x!r} takes no shape", no)
        src, tgt = G.s[x], G.r[x]
        mats = _parse_list(body, shapes[tgt], no)
        if len(mats) != len(algebras[src]):
            raise FormatError(f"arrow {x!r}: {len(algebras[src])} images expected, got {len(mats)}", no)
        span = onb_span(algebras[tgt], tol)
        for m in mats:
            if span.residual(m) > tol:
                raise FormatError(f"arrow {x!r}: image outside the algebra over {tgt!r}", no)
        images[x] = mats
    for x in G.arrows:
        if x not in images:
            raise FormatError(f"action entry for arrow {x!r} missing", heads["actions"])
    return ActionSpec(G, mu, shapes, algebras, images, ref)


def serialize_action(spec: ActionSpec) -> str:
    lines = [_groupoid_text(spec.G, spec.mu, spec.ref).rstrip("\n"), "algebras:"]
    for u in spec.G.units:
        m = spec.shapes[u][0]
        lines.append(f"  {u} {m}x{m}: {_format_list(spec.algebras[u])}")
    lines.append("actions:")
    for x in spec.G.arrows:
        lines.append(f"  {x}: {_format_list(spec.images[x])}")
    return "\n".join(lines) + "\n"


def action_spec(act: GroupoidAction, mu=None, ref: str | None = None) -> ActionSpec:
    """Write an action on the orthonormal bases of its fibers."""
    C, G = act.C, act.G
    algebras = {u: list(C.fiber(u).basis) for u in G.units}
    shapes = {u: C.fiber(u).shape for u in G.units}
    images = {x: [act.apply(x, b) for b in C.fiber(G.s[x]).basis] for x in G.arrows}
    return ActionSpec(G, mu, shapes, algebras, images, ref)


def load_action(path: str | Path, tol: float = DEFAULT_TOL) -> ActionSpec:
    p = Path(path)
    return parse_action(p.read_text(encoding="utf-8"), p.parent, tol)
