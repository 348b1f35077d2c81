"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``HYBRIDBFT_PURE=1`` to force the fallback (used by the benchmark and
the cross-check tests).
"""
import os

from . import _kernels_py

NEVER = _kernels_py.NEVER

_impl = _kernels_py
BACKEND = "python"
if not os.environ.get("HYBRIDBFT_PURE"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass

kth_arrivals = _impl.kth_arrivals
covered_sum = _impl.covered_sum
mix64 = _impl.mix64
