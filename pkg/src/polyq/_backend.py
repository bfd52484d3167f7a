"""Kernel backend selection.

The compiled extension is preferred when importable; ``POLYQ_BACKEND=python``
forces the pure-Python mirror (``POLYQ_BACKEND=compiled`` demands the
extension and fails loudly if it is missing).  Both expose the same
``run_stages`` / ``integrate_flow`` surface and produce bit-identical
results.
"""

from __future__ import annotations

import os

from . import _kernels_py

_forced = os.environ.get("POLYQ_BACKEND", "").strip().lower()

if _forced == "python":
    kernels = _kernels_py
elif _forced == "compiled":
    from . import _kernels as kernels
else:
    if _forced:
        raise RuntimeError(
            f"POLYQ_BACKEND={_forced!r} not recognized; use 'compiled' or 'python'"
        )
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _kernels_py


def backend_name() -> str:
    """Name of the active kernel backend: 'compiled' or 'python'."""
    return kernels.BACKEND_NAME
