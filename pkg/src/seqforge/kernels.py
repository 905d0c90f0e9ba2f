"""Kernel backend selection.

The compiled extension (``seqforge._ckernels``) is used when it has been
built; otherwise the pure-Python fallback is selected. Set
``FORGE_PURE_PYTHON=1`` to force the fallback, e.g. for benchmarking.
Both backends are bit-for-bit equivalent.
"""
import os

if os.environ.get("FORGE_PURE_PYTHON"):
    from seqforge import _pykernels as _impl
else:
    try:
        from seqforge import _ckernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from seqforge import _pykernels as _impl

BACKEND: str = _impl.BACKEND
mix64 = _impl.mix64
next_u64 = _impl.next_u64
hash_bytes64 = _impl.hash_bytes64
edit_ops = _impl.edit_ops
