"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise, or when
``BANDITLAB_PURE_PYTHON=1`` is set, the numpy fallback is used. Both expose
``optimistic_scores`` and ``sherman_morrison`` with identical signatures.
"""
import os

from . import _kernels_py

if os.environ.get("BANDITLAB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

optimistic_scores = _impl.optimistic_scores
sherman_morrison = _impl.sherman_morrison

__all__ = ["BACKEND", "optimistic_scores", "sherman_morrison"]
