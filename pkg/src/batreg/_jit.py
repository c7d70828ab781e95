"""JIT switch.

Hot kernels are decorated with :func:`njit` from this module. Setting the
environment variable ``BATREG_DISABLE_JIT=1`` (before import) replaces the
decorator with a no-op so every kernel runs as plain Python/NumPy. The same
happens automatically when numba is not importable.
"""
import os

_FLAG = "BATREG_DISABLE_JIT"

JIT_DISABLED = os.environ.get(_FLAG, "").strip().lower() in ("1", "true", "yes", "on")

try:
    if JIT_DISABLED:
        raise ImportError
    import numba as _numba
    HAS_NUMBA = True
except ImportError:
    _numba = None
    HAS_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise.

    Jitted functions keep the original Python function on ``.py_func``; the
    fallback sets the same attribute so callers (and the benchmark) can always
    reach the interpreted path.
    """
    if HAS_NUMBA:
        return _numba.njit(*args, **kwargs)

    def wrap(fn):
        fn.py_func = fn
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return wrap(args[0])
    return wrap
