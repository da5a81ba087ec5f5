"""Select the E-step kernel implementation at import time.

The compiled Cython kernel is used when it has been built; otherwise the
numpy version. Set ``COHAWKES_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if os.environ.get("COHAWKES_BACKEND", "").lower() != "python":
    try:
        from . import _kernels_c
    except ImportError:
        pass
    else:
        kernels = _kernels_c
        BACKEND = "cython"


def get_kernels(name: str | None = None):
    """Return a kernel module by name ('cython' or 'python'); default is the selected one."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels_c

        return _kernels_c
    raise ValueError(f"unknown backend {name!r}")
