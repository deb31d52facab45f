"""Kernel backend selection.

The compiled extension is used when importable; set ``LOCAGG_PURE_PYTHON=1``
to force the numpy fallback. ``BACKEND`` names whichever was picked.
"""

import os

from . import _kernels_py

STATUS_CONVERGED = _kernels_py.STATUS_CONVERGED
STATUS_MAX_ITER = _kernels_py.STATUS_MAX_ITER
STATUS_LINE_SEARCH = _kernels_py.STATUS_LINE_SEARCH
STATUS_NON_FINITE = _kernels_py.STATUS_NON_FINITE

_compiled = None
if os.environ.get("LOCAGG_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def get_backend(name=None):
    """Return the kernel module for ``name`` ('cython', 'python' or None for the default)."""
    if name is None:
        name = BACKEND
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not available; build with `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


def compiled_available():
    return _compiled is not None


def prox_grad_solve(*args, backend=None, **kwargs):
    return get_backend(backend).prox_grad_solve(*args, **kwargs)
