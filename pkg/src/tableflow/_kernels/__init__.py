"""Kernel backend selection.

The compiled Cython extension is preferred when importable; otherwise the
numpy fallback is used.  Set TABLEFLOW_KERNELS=fallback (or =compiled) to
force a backend, e.g. for the benchmark in benchmarks/bench_kernels.py.
"""
import os

from . import _fallback

_forced = os.environ.get("TABLEFLOW_KERNELS", "").strip().lower()

_compiled = None
if _forced != "fallback":
    try:
        from . import _core as _compiled
    except ImportError:
        if _forced == "compiled":
            raise

if _compiled is not None:
    BACKEND = "compiled"
    _impl = _compiled
else:
    BACKEND = "fallback"
    _impl = _fallback

masked_softmax_fwd = _impl.masked_softmax_fwd
masked_softmax_bwd = _impl.masked_softmax_bwd
layer_norm_fwd = _impl.layer_norm_fwd
layer_norm_bwd = _impl.layer_norm_bwd


def available_backends():
    """Map of backend name -> kernel module, for side-by-side benchmarks."""
    out = {"fallback": _fallback}
    if _compiled is not None:
        out["compiled"] = _compiled
    else:
        try:
            from . import _core
            out["compiled"] = _core
        except ImportError:
            pass
    return out
