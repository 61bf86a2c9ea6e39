import numpy as np
import pytest

from gwtree.model import two_class_params

P_REF = (0.4, 0.3, 0.3)


@pytest.fixture
def p_ref():
    return P_REF


@pytest.fixture
def params_ref():
    return two_class_params(P_REF, 2.0, 2, 2)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=_criterion_key):
            terminalreporter.write_line(line)


def _criterion_key(line):
    num = line.split("criterion ")[1].split(":")[0].split(" ")[0]
    return (int(num), line)
