"""Kernel backend selection.

Prefers the compiled extension; falls back to pure numpy when it is not
built.  Set LATENTWIRE_PURE=1 before import to force the numpy backend.
The tree builder and predictor look these names up at call time, so tests
can pin a backend by monkeypatching best_split/traverse here.
"""

from __future__ import annotations

import os


def load_backend(name: str):
    """Import a specific backend module: "numpy" or "cython" (may raise ImportError)."""
    if name == "numpy":
        from . import _kernels_py
        return _kernels_py
    if name == "cython":
        from . import _kernels_cy
        return _kernels_cy
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> dict:
    backends = {"numpy": load_backend("numpy")}
    try:
        backends["cython"] = load_backend("cython")
    except ImportError:
        pass
    return backends


if os.environ.get("LATENTWIRE_PURE") == "1":
    BACKEND = "numpy"
    _impl = load_backend("numpy")
else:
    try:
        _impl = load_backend("cython")
        BACKEND = "cython"
    except ImportError:
        _impl = load_backend("numpy")
        BACKEND = "numpy"

best_split = _impl.best_split
traverse = _impl.traverse
GAIN_EPS = _impl.GAIN_EPS
