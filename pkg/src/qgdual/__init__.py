"""Finite-groupoid models of pseudo-Kac systems, coactions, Fell bundles and their dualities.

Everything is realized on explicit finite-dimensional Hilbert spaces, and
every identity is checked numerically against a tolerance.
"""

from .groupoid import FiniteGroupoid, cyclic_group, pair_groupoid, parse_groupoid, symmetric_group, trivial_groupoid
from .kac import GroupoidKacSystem, build_system, verify_kac, verify_pmu
from .opspace import DEFAULT_TOL, OperatorSpace, onb_span
from .report import Report, emit_report

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TOL",
    "FiniteGroupoid",
    "GroupoidKacSystem",
    "OperatorSpace",
    "Report",
    "build_system",
    "cyclic_group",
    "emit_report",
    "onb_span",
    "pair_groupoid",
    "parse_groupoid",
    "symmetric_group",
    "trivial_groupoid",
    "verify_kac",
    "verify_pmu",
]
