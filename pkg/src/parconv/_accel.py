"""Switch between numba-compiled kernels and the pure-numpy fallback.

Set ``PARCONV_DISABLE_JIT=1`` before import to force the numpy path.
``PARCONV_THREADS`` caps numba and BLAS thread pools.
"""
import os

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_JIT = HAVE_NUMBA and os.environ.get("PARCONV_DISABLE_JIT", "0").lower() in ("", "0", "false", "no")


def optional_njit(*args, **kwargs):
    """``njit`` when numba is usable; the undecorated function otherwise.

    The compiled function is returned only when jitting is enabled, but the
    python original is always reachable as ``f.py_func`` so tests can
    compare both.
    """

    def decorator(func):
        if HAVE_NUMBA:
            return njit(*args, **kwargs)(func)
        func.py_func = func
        return func

    return decorator


def thread_cap():
    raw = os.environ.get("PARCONV_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        return None
    return n if n > 0 else None


def apply_thread_cap():
    """Apply ``PARCONV_THREADS`` to numba and any loaded BLAS library."""
    n = thread_cap()
    if n is None:
        return None
    if HAVE_NUMBA:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)
