"""Kernel backend selection.

The compiled Cython kernel is preferred when importable; the pure-NumPy
fallback is always available. ``CONVDYN_BACKEND`` overrides the choice:
``compiled`` (error if the extension is missing), ``python``, or ``auto``
(the default). Both kernels implement the same iteration sequence; see
``_gd_python`` for the normative definition.
"""

from __future__ import annotations

import os

from . import _gd_python

try:
    from . import _gd_cython
except ImportError:  # extension not built; fall back silently
    _gd_cython = None

__all__ = ["backend_name", "gd_loop", "get_kernel"]


def _select():
    choice = os.environ.get("CONVDYN_BACKEND", "auto").strip().lower()
    if choice in ("", "auto"):
        return ("compiled", _gd_cython) if _gd_cython is not None else ("python", _gd_python)
    if choice == "compiled":
        if _gd_cython is None:
            raise RuntimeError(
                "CONVDYN_BACKEND=compiled but the compiled kernel is not available"
            )
        return "compiled", _gd_cython
    if choice == "python":
        return "python", _gd_python
    raise RuntimeError(f"unknown CONVDYN_BACKEND value: {choice!r}")


def backend_name() -> str:
    """Name of the kernel that will run: 'compiled' or 'python'."""
    return _select()[0]


def get_kernel(name: str | None = None):
    """Kernel module by name ('compiled' / 'python'), or the selected one."""
    if name is None:
        return _select()[1]
    if name == "compiled":
        if _gd_cython is None:
            raise RuntimeError("compiled kernel is not available")
        return _gd_cython
    if name == "python":
        return _gd_python
    raise ValueError(f"unknown kernel name: {name!r}")


def gd_loop(*args, **kwargs):
    """Dispatch to the selected kernel's ``gd_loop``."""
    return _select()[1].gd_loop(*args, **kwargs)
