import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from dlelp.kc_graph import ConceptGraph  # noqa: E402


@pytest.fixture
def chain3():
    return ConceptGraph.build(["a", "b", "c"], [(0, 1), (1, 2)])


@pytest.fixture
def diamond():
    # 0 -> 2, 1 -> 2, 3 -> 1
    return ConceptGraph.build(["w", "x", "y", "z"], [(0, 2), (1, 2), (3, 1)])


def pytest_terminal_summary(terminalreporter):
    for mod in list(sys.modules.values()):
        results = getattr(mod, "ACCEPTANCE_RESULTS", None)
        if isinstance(results, dict) and results:
            terminalreporter.section("acceptance criteria")
            for n in sorted(results):
                terminalreporter.write_line(results[n])
            return
