import numpy as np
import pytest

from qgdual import zoo
from qgdual.kac import build_system


@pytest.fixture(scope="session")
def groupoids():
    return zoo.groupoids()


@pytest.fixture(scope="session")
def bundles():
    return zoo.bundles()


@pytest.fixture(scope="session")
def actions():
    return zoo.actions()


@pytest.fixture(scope="session")
def systems(groupoids):
    """Kac systems for the small groupoids, with and without a skewed weight."""
    out = {}
    for name in ("trivial", "z2", "z3", "pair2", "z2_z3", "trans_z2"):
        G = groupoids[name]
        out[name] = build_system(G)
        mu = zoo.skewed_weight(G)
        if mu is not None:
            out[name + "_mu"] = build_system(G, mu)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance lines collected by test_acceptance.py, if it ran."""
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
