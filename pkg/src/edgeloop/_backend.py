"""Kernel backend selection: compiled extension if built, pure Python otherwise.

Set EDGELOOP_PURE_PYTHON=1 to force the fallback even when the extension is
available (used by the benchmark and the cross-backend tests).
"""

from __future__ import annotations

import os

FORCE_PURE_PYTHON = os.environ.get("EDGELOOP_PURE_PYTHON", "") not in ("", "0")

try:
    from . import _core  # type: ignore[attr-defined]

    HAVE_CORE = True
except ImportError:
    _core = None
    HAVE_CORE = False


def resolve(backend: str | None) -> str:
    """Map None/'auto'/'compiled'/'python' to the backend that will run."""
    if backend in (None, "auto"):
        return "compiled" if (HAVE_CORE and not FORCE_PURE_PYTHON) else "python"
    if backend == "compiled":
        if not HAVE_CORE:
            raise RuntimeError("compiled backend requested but edgeloop._core is not built")
        return "compiled"
    if backend == "python":
        return "python"
    raise ValueError(f"unknown backend {backend!r} (expected 'auto', 'compiled', or 'python')")


def backend_name() -> str:
    return resolve(None)
