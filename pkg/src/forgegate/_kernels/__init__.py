"""Conv kernel backend selection.

Prefers the compiled Cython kernels when the extension was built, otherwise
falls back to the numpy implementations. ``FORGEGATE_BACKEND=python`` forces
the fallback (used by the benchmark to compare both).
"""

import os

from . import pure

_forced = os.environ.get("FORGEGATE_BACKEND", "").lower()

if _forced in ("python", "numpy", "pure"):
    _impl = pure
    BACKEND = "python"
else:
    try:
        from . import _conv_cy as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = pure
        BACKEND = "python"

im2col = _impl.im2col
col2im = _impl.col2im

__all__ = ["BACKEND", "im2col", "col2im", "pure"]
