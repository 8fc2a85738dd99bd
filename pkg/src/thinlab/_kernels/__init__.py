"""Sweep kernel backend selection.

The compiled Cython kernels are preferred when the extension built; the
numpy fallback implements identical update rules.  Set THINLAB_KERNEL to
"compiled" or "python" to force a backend ("auto" by default).
"""

import os

_requested = os.environ.get("THINLAB_KERNEL", "auto")

if _requested not in ("auto", "compiled", "python"):
    raise ValueError(f"THINLAB_KERNEL must be auto|compiled|python, got {_requested!r}")

if _requested == "python":
    from . import fallback as _impl
    BACKEND = "python"
else:
    try:
        from . import _sweeps as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from . import fallback as _impl
        BACKEND = "python"

psor_sweep_2d = _impl.psor_sweep_2d
psor_sweep_3d = _impl.psor_sweep_3d
psor_sweep_3d_plain = _impl.psor_sweep_3d_plain


def kernel_backend() -> str:
    """Name of the active sweep backend ("compiled" or "python")."""
    return BACKEND


__all__ = ["BACKEND", "kernel_backend", "psor_sweep_2d", "psor_sweep_3d",
           "psor_sweep_3d_plain"]
