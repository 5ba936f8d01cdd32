"""Select the compiled kernels when available, else the pure-Python ones.

Set ``CONEWATCH_PURE_PYTHON=1`` to force the fallback.
"""

import os

from conewatch import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("CONEWATCH_PURE_PYTHON") != "1":
    try:
        from conewatch import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        kernels = _ckernels
        BACKEND = "cython"


def get_kernels(name=None):
    """Return a kernel module by name (``"cython"``, ``"python"``) or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        from conewatch import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
