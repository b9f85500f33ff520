"""Check reports: residuals against a tolerance, rendered as text or JSON."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .opspace import DEFAULT_TOL


@dataclass(frozen=True)
class Item:
    id: str
    anchor: str
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return math.isfinite(self.residual) and self.residual <= self.tol


@dataclass
class Report:
    suite: str
    fixture: str = ""
    tol: float = DEFAULT_TOL
    items: list[Item] = field(default_factory=list)
    seconds: float | None = None  # shown in text output only

    def add(self, id: str, anchor: str, residual: float, tol: float | None = None) -> Item:
        it = Item(id, anchor, float(residual), self.tol if tol is None else tol)
        self.items.append(it)
        return it

    def check(self, id: str, anchor: str, ok: bool) -> Item:
        """Boolean check recorded with residual 0 (pass) or inf (fail)."""
        return self.add(id, anchor, 0.0 if ok else math.inf)

    def extend(self, other: "Report", prefix: str = "") -> None:
        for it in other.items:
            self.items.append(Item(prefix + it.id, it.anchor, it.residual, it.tol))

    @property
    def ok(self) -> bool:
        return bool(self.items) and all(i.passed for i in self.items)

    def failures(self) -> list[Item]:
        return [i for i in self.items if not i.passed]

    def __getitem__(self, id: str) -> Item:
        for it in self.items:
            if it.id == id:
                return it
        raise KeyError(id)

    def residual(self, id: str) -> float:
        return self[id].residual


def format_residual(r: float) -> str:
    if math.isinf(r):
        return "inf"
    if math.isnan(r):
        return "nan"
    return f"{r:.2e}"


def to_dict(r: Report) -> dict:
    return {
        "suite": r.suite,
        "fixture": r.fixture,
        "tol": format_residual(r.tol),
        "items": [
            {"id": i.id, "anchor": i.anchor, "residual": format_residual(i.residual), "pass": i.passed}
            for i in r.items
        ],
    }


def emit_report(r: Report, fmt: str = "text") -> bytes:
    """Render a completed report. JSON output is byte-stable for equal reports."""
    if not r.items:
        raise ValueError(f"suite {r.suite!r} produced no checks")
    if fmt == "json":
        return (json.dumps(to_dict(r), indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    head = f"{r.suite}"
    if r.fixture:
        head += f" [{r.fixture}]"
    head += f"  tol={format_residual(r.tol)}"
    if r.seconds is not None:
        head += f"  ({r.seconds:.2f}s)"
    lines = [head]
    width = max(len(i.id) for i in r.items)
    for i in r.items:
        mark = "PASS" if i.passed else "FAIL"
        lines.append(f"  {mark}  {i.id.ljust(width)}  {format_residual(i.residual):>9}  {i.anchor}")
    n_fail = len(r.failures())
    lines.append(f"  {len(r.items) - n_fail}/{len(r.items)} passed")
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_report_json(data: bytes | str) -> Report:
    obj = json.loads(data)
    tol = float(obj["tol"])
    rep = Report(obj["suite"], obj.get("fixture", ""), tol)
    for it in obj["items"]:
        rep.add(it["id"], it["anchor"], float(it["residual"]))
    return rep


def emit_reports(reports: list[Report], fmt: str = "text") -> bytes:
    """Several reports as one document; JSON carries an overall pass flag."""
    if fmt == "json":
        obj = {"pass": all(r.ok for r in reports), "reports": [to_dict(r) for r in reports]}
        return (json.dumps(obj, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    return b"".join(emit_report(r, fmt) for r in reports)


def parse_reports_json(data: bytes | str) -> list[Report]:
    obj = json.loads(data)
    return [parse_report_json(json.dumps(r)) for r in obj["reports"]]
