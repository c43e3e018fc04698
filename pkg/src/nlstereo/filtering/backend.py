"""Scan-kernel backend selection.

The compiled extension is preferred when importable; set
``NLSTEREO_BACKEND=python`` (or ``compiled``) to force a choice.  The two
backends implement the same loops; the forward scans are bit-identical.
"""

import os

from . import _kernels_py

_FORCED = os.environ.get("NLSTEREO_BACKEND", "").strip().lower()

try:
    from . import _kernels as _kernels_cy
except ImportError:
    _kernels_cy = None

if _FORCED in ("python", "py"):
    _active = _kernels_py
    BACKEND = "python"
elif _FORCED in ("compiled", "cython", "c"):
    if _kernels_cy is None:
        raise ImportError(
            "NLSTEREO_BACKEND requested the compiled backend but "
            "nlstereo.filtering._kernels is not built; run pip install -e ."
        )
    _active = _kernels_cy
    BACKEND = "compiled"
elif _kernels_cy is not None:
    _active = _kernels_cy
    BACKEND = "compiled"
else:
    _active = _kernels_py
    BACKEND = "python"


def get_backend(name: str | None = None):
    """Kernel module for ``name`` ('python' / 'compiled'), default the active one."""
    if name is None:
        return _active
    if name in ("python", "py"):
        return _kernels_py
    if name in ("compiled", "cython", "c"):
        if _kernels_cy is None:
            raise ImportError("compiled backend not available")
        return _kernels_cy
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["python"]
    if _kernels_cy is not None:
        names.append("compiled")
    return names
