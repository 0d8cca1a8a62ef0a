"""Compute-backend selection.

The compiled extension is used when importable; ``HSNCP_BACKEND=python``
forces the NumPy fallback (handy for the backend benchmark), and
``HSNCP_BACKEND=cython`` makes a missing extension a hard error.
"""

from __future__ import annotations

import os

_requested = os.environ.get("HSNCP_BACKEND", "").strip().lower()
if _requested not in ("", "python", "cython"):
    raise ImportError(f"HSNCP_BACKEND must be 'python' or 'cython', "
                      f"got {_requested!r}")

if _requested == "python":
    from . import _pykernels as _impl
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "cython":
            raise
        from . import _pykernels as _impl

BACKEND: str = _impl.BACKEND_NAME
invert_tail_mass = _impl.invert_tail_mass
sample_labels = _impl.sample_labels
