"""Finite groupoids, quasi-invariant weights and the groupoid file format."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


class GroupoidFormatError(ValueError):
    """Malformed groupoid description; ``line`` is 1-based (0 when unknown)."""

    def __init__(self, message: str, line: int = 0):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True, eq=False)
class FiniteGroupoid:
    """A finite groupoid with named arrows.

    Arrows and units are kept sorted by name; ``index`` maps a name to its
    position. Construction does not validate; call :func:`validate`.
    """

    arrows: tuple[str, ...]
    units: tuple[str, ...]
    r: Mapping[str, str]
    s: Mapping[str, str]
    compose: Mapping[tuple[str, str], str]
    inverse: Mapping[str, str]
    index: dict = field(init=False, repr=False)
    unit_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "arrows", tuple(sorted(self.arrows)))
        object.__setattr__(self, "units", tuple(sorted(self.units)))
        object.__setattr__(self, "index", {a: i for i, a in enumerate(self.arrows)})
        object.__setattr__(self, "unit_index", {u: i for i, u in enumerate(self.units)})

    def __len__(self) -> int:
        return len(self.arrows)

    def __repr__(self) -> str:
        return f"FiniteGroupoid({len(self.arrows)} arrows, {len(self.units)} units)"

    @property
    def n(self) -> int:
        return len(self.arrows)

    def mul(self, x: str, y: str) -> str | None:
        return self.compose.get((x, y))

    def inv(self, x: str) -> str:
        return self.inverse[x]

    def is_unit(self, x: str) -> bool:
        return x in self.unit_index

    def range_fiber(self, u: str) -> list[str]:
        """G^u: arrows with range u."""
        return [x for x in self.arrows if self.r[x] == u]

    def source_fiber(self, u: str) -> list[str]:
        """G_u: arrows with source u."""
        return [x for x in self.arrows if self.s[x] == u]

    # integer views used by the linear algebra
    def r_idx(self) -> np.ndarray:
        return np.array([self.unit_index[self.r[x]] for x in self.arrows], dtype=int)

    def s_idx(self) -> np.ndarray:
        return np.array([self.unit_index[self.s[x]] for x in self.arrows], dtype=int)

    def inv_idx(self) -> np.ndarray:
        return np.array([self.index[self.inverse[x]] for x in self.arrows], dtype=int)

    def mul_table(self) -> np.ndarray:
        """n x n table of product indices, -1 where not composable."""
        t = -np.ones((self.n, self.n), dtype=int)
        for (x, y), z in self.compose.items():
            t[self.index[x], self.index[y]] = self.index[z]
        return t

    def unit_arrow_idx(self) -> np.ndarray:
        """Arrow index of each unit, in unit order."""
        return np.array([self.index[u] for u in self.units], dtype=int)

    def same(self, other: "FiniteGroupoid") -> bool:
        return (
            self.arrows == other.arrows
            and self.units == other.units
            and dict(self.r) == dict(other.r)
            and dict(self.s) == dict(other.s)
            and dict(self.compose) == dict(other.compose)
            and dict(self.inverse) == dict(other.inverse)
        )


# -- weights -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuasiInvariantWeight:
    """Positive weight mu on units; D(x) = mu(r(x)) / mu(s(x))."""

    G: FiniteGroupoid
    mu: Mapping[str, float]

    def __post_init__(self):
        for u in self.G.units:
            v = self.mu.get(u)
            if v is None:
                raise ValueError(f"weight missing for unit {u!r}")
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"weight of unit {u!r} must be positive, got {v}")

    def D(self, x: str) -> float:
        return self.mu[self.G.r[x]] / self.mu[self.G.s[x]]

    def mu_vec(self) -> np.ndarray:
        return np.array([self.mu[u] for u in self.G.units], dtype=float)

    def D_vec(self) -> np.ndarray:
        return np.array([self.D(x) for x in self.G.arrows], dtype=float)

    def nu_vec(self) -> np.ndarray:
        """Point masses of nu: nu({x}) = mu(r(x))."""
        return np.array([self.mu[self.G.r[x]] for x in self.G.arrows], dtype=float)

    @property
    def constant(self) -> bool:
        vals = list(self.mu.values())
        return max(vals) == min(vals)


def counting_weight(G: FiniteGroupoid) -> QuasiInvariantWeight:
    return QuasiInvariantWeight(G, {u: 1.0 for u in G.units})


def weight(G: FiniteGroupoid, mu: Mapping[str, float] | Sequence[float] | None) -> QuasiInvariantWeight:
    if mu is None:
        return counting_weight(G)
    if not isinstance(mu, Mapping):
        mu = list(mu)
        if len(mu) != len(G.units):
            raise ValueError(f"expected {len(G.units)} weights, got {len(mu)}")
        mu = dict(zip(G.units, mu))
    return QuasiInvariantWeight(G, dict(mu))


def cocycle_residual(w: QuasiInvariantWeight) -> float:
    """max |D(xy) - D(x)D(y)| over composable pairs, with unit and inverse laws."""
    G = w.G
    worst = 0.0
    for (x, y), z in G.compose.items():
        worst = max(worst, abs(w.D(z) - w.D(x) * w.D(y)))
    for u in G.units:
        worst = max(worst, abs(w.D(u) - 1.0))
    for x in G.arrows:
        worst = max(worst, abs(w.D(G.inverse[x]) * w.D(x) - 1.0))
    return worst


# -- validation ----------------------------------------------------------------

def validate(G: FiniteGroupoid) -> list[str]:
    """All violated groupoid axioms; empty iff ``G`` is a groupoid."""
    out: list[str] = []
    arrows = set(G.arrows)
    for u in G.units:
        if u not in arrows:
            out.append(f"unit {u} is not an arrow")
            continue
        if G.r.get(u) != u or G.s.get(u) != u:
            out.append(f"unit {u} must satisfy r(u) = s(u) = u")
    for x in G.arrows:
        if G.r.get(x) not in G.unit_index or G.s.get(x) not in G.unit_index:
            out.append(f"arrow {x} has range/source outside the units")
    if out:
        return out
    for x, y in itertools.product(G.arrows, repeat=2):
        composable = G.s[x] == G.r[y]
        z = G.compose.get((x, y))
        if composable and z is None:
            out.append(f"composition table incomplete: {x} {y} missing")
        elif not composable and z is not None:
            out.append(f"composition {x} {y} defined although s({x}) != r({y})")
        elif z is not None:
            if z not in arrows:
                out.append(f"composition {x} {y} -> unknown arrow {z}")
            elif G.r[z] != G.r[x] or G.s[z] != G.s[y]:
                out.append(f"composition {x} {y} -> {z} has wrong range/source")
    if out:
        return out
    for x in G.arrows:
        if G.compose[(x, G.s[x])] != x or G.compose[(G.r[x], x)] != x:
            out.append(f"unit law fails for {x}")
    for x, y, z in itertools.product(G.arrows, repeat=3):
        if G.s[x] == G.r[y] and G.s[y] == G.r[z]:
            if G.compose[(G.compose[(x, y)], z)] != G.compose[(x, G.compose[(y, z)])]:
                out.append(f"associativity fails for ({x}, {y}, {z})")
    for x in G.arrows:
        y = G.inverse.get(x)
        if y not in arrows:
            out.append(f"inverse of {x} missing or unknown")
            continue
        if G.r[y] != G.s[x] or G.s[y] != G.r[x]:
            out.append(f"inverse of {x} has wrong range/source")
            continue
        if G.compose.get((y, x)) != G.s[x] or G.compose.get((x, y)) != G.r[x]:
            out.append(f"inverse law fails for {x}")
    for u in G.units:
        if not any(G.r[x] == u for x in G.arrows) or not any(G.s[x] == u for x in G.arrows):
            out.append(f"range or source not onto unit {u}")
    return out


def composable_pairs(G: FiniteGroupoid, mode: str = "s×r") -> list[tuple[str, str]]:
    """Pairs with s(x) = r(y) (mode 's×r' or 'sr') or r(x) = r(y) (mode 'r×r' or 'rr')."""
    mode = mode.replace("×", "").replace("x", "")
    if mode == "sr":
        return [(x, y) for x in G.arrows for y in G.arrows if G.s[x] == G.r[y]]
    if mode == "rr":
        return [(x, y) for x in G.arrows for y in G.arrows if G.r[x] == G.r[y]]
    raise ValueError(f"unknown mode {mode!r}")


# -- standard constructions ------------------------------------------------------

def from_table(elements: Sequence[str], table: Mapping[tuple[str, str], str]) -> FiniteGroupoid:
    """A group as a one-unit groupoid, from its full multiplication table."""
    elements = list(elements)
    units = [e for e in elements if all(table[(e, g)] == g for g in elements)]
    if len(units) != 1:
        raise ValueError("multiplication table has no unique identity")
    e = units[0]
    inverse = {}
    for g in elements:
        hs = [h for h in elements if table[(g, h)] == e]
        if len(hs) != 1:
            raise ValueError(f"element {g} has no unique inverse")
        inverse[g] = hs[0]
    return FiniteGroupoid(
        tuple(elements), (e,), {g: e for g in elements}, {g: e for g in elements},
        dict(table), inverse,
    )


def cyclic_group(n: int) -> FiniteGroupoid:
    if n < 1:
        raise ValueError("group order must be positive")
    names = ["e"] + ["g" if k == 1 else f"g{k}" for k in range(1, n)]
    table = {(names[a], names[b]): names[(a + b) % n] for a in range(n) for b in range(n)}
    return from_table(names, table)


def symmetric_group(n: int = 3) -> FiniteGroupoid:
    perms = sorted(itertools.permutations(range(n)))
    name = {p: "p" + "".join(str(i + 1) for i in p) for p in perms}
    table = {}
    for p, q in itertools.product(perms, repeat=2):
        pq = tuple(p[q[i]] for i in range(n))  # (pq)(i) = p(q(i))
        table[(name[p], name[q])] = name[pq]
    return from_table([name[p] for p in perms], table)


def group(spec) -> FiniteGroupoid:
    """``group(n)`` is Z/n; ``group((elements, table))`` uses an explicit table."""
    if isinstance(spec, int):
        return cyclic_group(spec)
    elements, table = spec
    return from_table(elements, table)


def pair_groupoid(n: int) -> FiniteGroupoid:
    if n < 1:
        raise ValueError("pair groupoid needs at least one point")
    pts = range(1, n + 1)
    nm = lambda i, j: f"({i},{j})"
    arrows = [nm(i, j) for i in pts for j in pts]
    units = [nm(i, i) for i in pts]
    r = {nm(i, j): nm(i, i) for i in pts for j in pts}
    s = {nm(i, j): nm(j, j) for i in pts for j in pts}
    comp = {(nm(i, j), nm(j, k)): nm(i, k) for i in pts for j in pts for k in pts}
    inv = {nm(i, j): nm(j, i) for i in pts for j in pts}
    return FiniteGroupoid(tuple(arrows), tuple(units), r, s, comp, inv)


def trivial_groupoid() -> FiniteGroupoid:
    return cyclic_group(1)


def relabel(G: FiniteGroupoid, f) -> FiniteGroupoid:
    return FiniteGroupoid(
        tuple(f(x) for x in G.arrows),
        tuple(f(u) for u in G.units),
        {f(x): f(u) for x, u in G.r.items()},
        {f(x): f(u) for x, u in G.s.items()},
        {(f(x), f(y)): f(z) for (x, y), z in G.compose.items()},
        {f(x): f(y) for x, y in G.inverse.items()},
    )


def disjoint_union(*parts: FiniteGroupoid, prefixes: Sequence[str] | None = None) -> FiniteGroupoid:
    if prefixes is None:
        prefixes = [chr(ord("a") + i) for i in range(len(parts))]
    arrows, units, r, s, comp, inv = [], [], {}, {}, {}, {}
    for p, G in zip(prefixes, parts):
        H = relabel(G, lambda x, p=p: f"{p}.{x}")
        arrows += H.arrows
        units += H.units
        r.update(H.r)
        s.update(H.s)
        comp.update(H.compose)
        inv.update(H.inverse)
    if len(set(arrows)) != len(arrows):
        raise ValueError("prefixes do not separate the arrow names")
    return FiniteGroupoid(tuple(arrows), tuple(units), r, s, comp, inv)


def group_bundle(groups: Iterable) -> FiniteGroupoid:
    return disjoint_union(*[g if isinstance(g, FiniteGroupoid) else group(g) for g in groups])


def make_standard(kind: str, params=None) -> FiniteGroupoid:
    """Fixture constructor: kind in {trivial, group, symmetric, pair_groupoid, group_bundle, disjoint_union}."""
    makers = {
        "trivial": lambda p: trivial_groupoid(),
        "group": group,
        "symmetric": lambda p: symmetric_group(p or 3),
        "pair_groupoid": pair_groupoid,
        "group_bundle": group_bundle,
        "disjoint_union": lambda p: disjoint_union(*p),
    }
    if kind not in makers:
        raise ValueError(f"unknown groupoid kind {kind!r}")
    try:
        G = makers[kind](params)
    except (TypeError, KeyError) as exc:
        raise ValueError(f"malformed parameters for {kind}: {exc}") from None
    bad = validate(G)
    if bad:
        raise ValueError(f"construction produced an invalid groupoid: {bad[0]}")
    return G


def pair_name(x: str, y: str) -> str:
    return f"{x}|{y}"


def transformation_groupoid(G: FiniteGroupoid) -> FiniteGroupoid:
    """G ⋉ G for right multiplication: arrows (x, y) with s(x) = r(y).

    r(x, y) = xy, s(x, y) = y, (x, y)(x', y') = (xx', y') when y = x'y';
    the unit over y is (r(y), y).
    """
    pairs = composable_pairs(G, "sr")
    unit_of = {y: pair_name(G.r[y], y) for y in G.arrows}
    arrows = [pair_name(x, y) for x, y in pairs]
    r = {pair_name(x, y): unit_of[G.compose[(x, y)]] for x, y in pairs}
    s = {pair_name(x, y): unit_of[y] for x, y in pairs}
    comp = {}
    for (x, y), (x2, y2) in itertools.product(pairs, repeat=2):
        if y == G.compose[(x2, y2)]:
            comp[(pair_name(x, y), pair_name(x2, y2))] = pair_name(G.compose[(x, x2)], y2)
    inv = {pair_name(x, y): pair_name(G.inverse[x], G.compose[(x, y)]) for x, y in pairs}
    return FiniteGroupoid(tuple(arrows), tuple(unit_of.values()), r, s, comp, inv)


# -- text and json formats ---------------------------------------------------------

SECTIONS = ("units", "arrows", "compose", "inverse", "mu")


def serialize(G: FiniteGroupoid, mu: Mapping[str, float] | None = None) -> str:
    lines = ["units: " + " ".join(G.units), "arrows:"]
    lines += [f"  {x} {G.r[x]} {G.s[x]}" for x in G.arrows]
    lines.append("compose:")
    for x in G.arrows:
        for y in G.arrows:
            z = G.compose.get((x, y))
            if z is not None:
                lines.append(f"  {x} {y} -> {z}")
    lines.append("inverse:")
    lines += [f"  {x} -> {G.inverse[x]}" for x in G.arrows]
    if mu is not None:
        lines.append("mu:")
        lines += [f"  {u} {mu[u]!r}" for u in G.units]
    return "\n".join(lines) + "\n"


def _split_sections(text: str, allowed: Sequence[str]) -> dict[str, list[tuple[int, str]]]:
    """Group the lines of a sectioned file; returns name -> [(lineno, content)]."""
    sections: dict[str, list[tuple[int, str]]] = {}
    header_line: dict[str, int] = {}
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, sep, rest = line.partition(":")
        key = head.strip()
        if sep and " " not in key and key in allowed and not raw[:1].isspace():
            if key in sections:
                raise GroupoidFormatError(f"section {key!r} repeated (first at line {header_line[key]})", no)
            sections[key] = []
            header_line[key] = no
            current = key
            if rest.strip():
                sections[key].append((no, rest.strip()))
            continue
        if current is None:
            raise GroupoidFormatError(f"content outside of a section: {line!r}", no)
        sections[current].append((no, line))
    sections["_headers"] = [(n, k) for k, n in header_line.items()]  # type: ignore[assignment]
    return sections


def _header_line(sections, key: str) -> int:
    for n, k in sections["_headers"]:
        if k == key:
            return n
    return 0


def _build(units_items, arrow_items, compose_items, inverse_items, mu_items, where):
    """Shared assembly for text and json. Items are (location, fields) pairs."""
    units: list[str] = []
    seen_units = {}
    for loc, name in units_items:
        if name in seen_units:
            raise GroupoidFormatError(f"duplicate unit {name!r}", loc)
        seen_units[name] = loc
        units.append(name)
    r, s, arrows = {}, {}, []
    for loc, fields in arrow_items:
        if len(fields) != 3:
            raise GroupoidFormatError(f"arrow entry needs 'name r s', got {' '.join(fields)!r}", loc)
        name, ru, su = fields
        if name in r:
            raise GroupoidFormatError(f"duplicate arrow {name!r}", loc)
        for u in (ru, su):
            if u not in seen_units:
                raise GroupoidFormatError(f"unknown unit {u!r} for arrow {name!r}", loc)
        r[name], s[name] = ru, su
        arrows.append(name)
    for u, loc in seen_units.items():
        if u not in r:
            raise GroupoidFormatError(f"unit {u!r} is not listed among the arrows", loc)
    comp = {}
    for loc, fields in compose_items:
        if len(fields) != 3:
            raise GroupoidFormatError("composition entry needs 'x y -> z'", loc)
        x, y, z = fields
        for a in (x, y, z):
            if a not in r:
                raise GroupoidFormatError(f"unknown arrow {a!r} in composition", loc)
        if (x, y) in comp:
            raise GroupoidFormatError(f"duplicate composition entry for {x} {y}", loc)
        if s[x] != r[y]:
            raise GroupoidFormatError(f"{x} {y} is not composable (s({x}) != r({y}))", loc)
        comp[(x, y)] = z
    for x in arrows:
        for y in arrows:
            if s[x] == r[y] and (x, y) not in comp:
                raise GroupoidFormatError(f"composition table incomplete: {x} {y} missing", where["compose"])
    inv = {}
    for loc, fields in inverse_items:
        if len(fields) != 2:
            raise GroupoidFormatError("inverse entry needs 'x -> y'", loc)
        x, y = fields
        for a in (x, y):
            if a not in r:
                raise GroupoidFormatError(f"unknown arrow {a!r} in inverse", loc)
        if x in inv:
            raise GroupoidFormatError(f"duplicate inverse entry for {x}", loc)
        inv[x] = y
    for x in arrows:
        if x not in inv:
            raise GroupoidFormatError(f"inverse of {x!r} missing", where["inverse"])
    mu = None
    if mu_items is not None:
        mu = {}
        for loc, fields in mu_items:
            if len(fields) != 2:
                raise GroupoidFormatError("mu entry needs 'unit value'", loc)
            u, v = fields
            if u not in seen_units:
                raise GroupoidFormatError(f"unknown unit {u!r} in mu", loc)
            if u in mu:
                raise GroupoidFormatError(f"duplicate mu entry for {u!r}", loc)
            try:
                val = float(v)
            except ValueError:
                raise GroupoidFormatError(f"mu value {v!r} is not a number", loc) from None
            if not (val > 0 and math.isfinite(val)):
                raise GroupoidFormatError(f"mu value for {u!r} must be positive", loc)
            mu[u] = val
        missing = [u for u in units if u not in mu]
        if missing:
            raise GroupoidFormatError(f"mu missing for unit {missing[0]!r}", where["mu"])
    return FiniteGroupoid(tuple(arrows), tuple(units), r, s, comp, inv), mu


def _parse_text(text: str):
    return parse_sections(_split_sections(text, SECTIONS))


def parse_sections(sec) -> tuple[FiniteGroupoid, dict | None]:
    """Build a groupoid from already split sections (shared with the bundle and action formats)."""
    for key in ("units", "arrows", "compose", "inverse"):
        if key not in sec:
            raise GroupoidFormatError(f"missing section {key!r}")
    where = {k: _header_line(sec, k) for k in SECTIONS}
    units_items = [(no, name) for no, line in sec["units"] for name in line.split()]

    def arrowed(items, n_left):
        out = []
        for no, line in items:
            left, sep, right = line.partition("->")
            if not sep:
                raise GroupoidFormatError(f"expected '->' in {line!r}", no)
            lf, rf = left.split(), right.split()
            if len(lf) != n_left or len(rf) != 1:
                raise GroupoidFormatError(f"malformed entry {line!r}", no)
            out.append((no, lf + rf))
        return out

    arrow_items = [(no, line.split()) for no, line in sec["arrows"]]
    mu_items = None
    if "mu" in sec:
        mu_items = [(no, line.replace(":", " ").split()) for no, line in sec["mu"]]
    return _build(units_items, arrow_items, arrowed(sec["compose"], 2), arrowed(sec["inverse"], 1), mu_items, where)


def _json_line(text: str, key: str) -> int:
    idx = text.find(f'"{key}"')
    return text.count("\n", 0, idx) + 1 if idx >= 0 else 0


def _parse_json(text: str):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GroupoidFormatError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(obj, dict):
        raise GroupoidFormatError("JSON groupoid must be an object", 1)
    for key in ("units", "arrows", "compose", "inverse"):
        if key not in obj:
            raise GroupoidFormatError(f"missing field {key!r}", 1)
    where = {k: _json_line(text, k) for k in SECTIONS}

    def as_list(key, width):
        val = obj[key]
        if isinstance(val, dict):
            val = [[k, v] for k, v in val.items()]
        out = []
        for i, item in enumerate(val):
            if isinstance(item, str):
                item = [item]
            if not isinstance(item, (list, tuple)) or not all(isinstance(t, (str, int, float)) for t in item):
                raise GroupoidFormatError(f"{key}[{i}] is malformed", where[key])
            out.append((where[key], [str(t) for t in item]))
        return out

    units_items = [(loc, f[0]) for loc, f in as_list("units", 1)]
    mu_items = as_list("mu", 2) if "mu" in obj else None
    return _build(units_items, as_list("arrows", 3), as_list("compose", 3), as_list("inverse", 2), mu_items, where)


def parse_groupoid(text: str, check: bool = True) -> tuple[FiniteGroupoid, dict | None]:
    """Parse the text (or JSON) groupoid format; returns (G, mu or None).

    With ``check`` the groupoid axioms are validated and violations raise
    :class:`GroupoidFormatError`.
    """
    if text.lstrip().startswith("{"):
        G, mu = _parse_json(text)
    else:
        G, mu = _parse_text(text)
    if check:
        bad = validate(G)
        if bad:
            raise GroupoidFormatError("groupoid axioms violated: " + "; ".join(bad[:5]))
    return G, mu


def to_json(G: FiniteGroupoid, mu: Mapping[str, float] | None = None) -> str:
    obj = {
        "units": list(G.units),
        "arrows": [[x, G.r[x], G.s[x]] for x in G.arrows],
        "compose": [[x, y, G.compose[(x, y)]] for x in G.arrows for y in G.arrows if (x, y) in G.compose],
        "inverse": [[x, G.inverse[x]] for x in G.arrows],
    }
    if mu is not None:
        obj["mu"] = {u: mu[u] for u in G.units}
    return json.dumps(obj, indent=1) + "\n"
