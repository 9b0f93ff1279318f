"""Speed-kernel dispatch: compiled extension if built, numpy fallback otherwise.

Set SUBVALUE_NO_EXT=1 to force the fallback (used by the benchmark and tests).
"""
import os

if os.environ.get("SUBVALUE_NO_EXT"):
    from . import fallback as impl
    HAVE_EXT = False
else:
    try:
        from . import speed as impl  # type: ignore[attr-defined]
        HAVE_EXT = True
    except ImportError:
        from . import fallback as impl
        HAVE_EXT = False

eval_terms = impl.eval_terms
eval_polyvec = impl.eval_polyvec
rk4_const_batch = impl.rk4_const_batch
rk4_bangbang_path = impl.rk4_bangbang_path
