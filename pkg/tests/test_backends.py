import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from gwtree import _jit

sys.path.insert(0, str(Path(__file__).parent))
from backend_probe import probe  # noqa: E402

PROBE = Path(__file__).parent / "backend_probe.py"


def _run(no_numba):
    env = dict(os.environ, GWTREE_NO_NUMBA="1" if no_numba else "0")
    r = subprocess.run([sys.executable, str(PROBE)], env=env, capture_output=True, text=True,
                       check=True)
    return json.loads(r.stdout)


@pytest.fixture(scope="module")
def pure():
    return _run(True)


def test_flag_selects_python(pure):
    assert pure["backend"] == "python"


@pytest.mark.skipif(not _jit.USE_NUMBA, reason="numba unavailable")
def test_backends_agree(pure):
    fast = probe()
    assert fast["backend"] == "numba"
    for key in ("linear", "log"):
        a, b = np.array(fast[key]), np.array(pure[key])
        assert np.allclose(a, b, rtol=1e-12, atol=0), key
    assert fast["stream"] == pytest.approx(pure["stream"], rel=1e-13)
    for key in ("count", "local", "local_accepted", "global", "classify", "approach"):
        assert fast[key] == pure[key], key


def test_python_impl_unwraps():
    from gwtree import _rec_kernels as rk
    f = _jit.python_impl(rk.lin_step)
    s = np.zeros(rk.NSTATE)
    s[:2] = 1.0
    out = np.empty(rk.NSTATE)
    f(np.array([0.4, 0.3, 0.3]), 2.0, s, out)
    assert out[0] == pytest.approx(1.0) and out[1] == pytest.approx(1.3)
