import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wassercalc.measures import DiscreteMeasure, canonicalize  # noqa: E402


def random_measure(rng, n, d, uniform=False, scale=1.0):
    pts = scale * rng.standard_normal((n, d))
    w = np.full(n, 1.0 / n) if uniform else rng.dirichlet(np.ones(n))
    return canonicalize(DiscreteMeasure(pts, w))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_variation(rng, anchor, max_arrows=4, scale=1.0):
    """Random plan-valued variation: 1..max_arrows arrows per atom."""
    from wassercalc.tangent import variation

    arrows = []
    for k in range(anchor.n):
        p = int(rng.integers(1, max_arrows + 1))
        split = rng.dirichlet(np.ones(p)) * anchor.weights[k]
        for t in range(p):
            arrows.append((k, scale * rng.standard_normal(anchor.dim), float(split[t])))
    return variation(anchor, arrows)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
