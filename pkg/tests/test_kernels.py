import os
import subprocess
import sys

import numpy as np
import pytest

from evanscompat import _kernels_py, kernels
from evanscompat.inflation import symmetry_maps


def radices(n):
    return np.array([2] * n + [3] * n + [2] * (n * n) + [2] * n, np.int64)


@pytest.mark.parametrize("n", [1, 2])
def test_backends_agree(n):
    pytest.importorskip("evanscompat._kernels")
    from evanscompat import _kernels
    perms, adm = symmetry_maps(n)
    a = np.asarray(_kernels_py.orbit_representatives(radices(n), perms, adm))
    b = np.asarray(_kernels.orbit_representatives(radices(n), perms, adm))
    assert np.array_equal(a, b)


def test_identity_group_gives_identity():
    perms, adm = symmetry_maps(1)
    rep = np.asarray(kernels.orbit_representatives(radices(1), perms, adm))
    assert np.array_equal(rep, np.arange(rep.size))


def test_env_var_forces_fallback():
    env = dict(os.environ, EVANSCOMPAT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from evanscompat import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_compiled_backend_selected_when_built():
    try:
        import evanscompat._kernels  # noqa: F401
    except ImportError:
        assert kernels.BACKEND == "python"
    else:
        assert kernels.BACKEND == "cython" or os.environ.get("EVANSCOMPAT_PURE_PYTHON")
