"""Pick the kernel backend once, at import time.

The compiled extension is preferred; ``CHARTDDM_BACKEND=python`` forces the
NumPy fallback and ``CHARTDDM_BACKEND=cython`` makes a missing extension an
import error instead of a silent fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

_requested = os.environ.get("CHARTDDM_BACKEND", "").strip().lower()

if _requested not in ("", "python", "cython"):
    raise ImportError(f"unknown CHARTDDM_BACKEND {_requested!r}")

kernels = _pykernels
name = "python"
if _requested != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        if _requested == "cython":
            raise
    else:
        kernels = _compiled
        name = "cython"


def available() -> dict:
    """Map backend names to kernel modules that can be imported here."""
    out = {"python": _pykernels}
    try:
        from . import _kernels as compiled
    except ImportError:
        pass
    else:
        out["cython"] = compiled
    return out
