"""Simulation backend selection.

The compiled Cython kernel is preferred when its extension module built;
otherwise the numpy fallback is used.  ``DOC_SIM_BACKEND=python`` or
``=compiled`` forces the choice at import time.
"""

from __future__ import annotations

import os

from . import _kernel_py

try:
    from . import _kernel  # compiled extension
except ImportError:
    _kernel = None

_choice = os.environ.get("DOC_SIM_BACKEND", "auto").strip().lower()
if _choice in ("", "auto"):
    kernel = _kernel if _kernel is not None else _kernel_py
elif _choice in ("compiled", "cython", "c"):
    if _kernel is None:
        raise ImportError(
            "DOC_SIM_BACKEND=compiled but the compiled kernel is not built; "
            "reinstall the package with Cython and a C compiler available")
    kernel = _kernel
elif _choice in ("python", "numpy", "py"):
    kernel = _kernel_py
else:
    raise ValueError(f"unrecognized DOC_SIM_BACKEND={_choice!r}")


def backend_name() -> str:
    return "compiled" if kernel is not _kernel_py else "python"


def available_kernels() -> dict:
    """Name -> kernel module, for benchmarks and cross-checks."""
    out = {"python": _kernel_py}
    if _kernel is not None:
        out["compiled"] = _kernel
    return out
