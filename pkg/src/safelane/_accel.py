"""Optional numba acceleration for the hot kernels.

Every numeric kernel in this package is written as plain scalar Python over
numpy arrays, so the same source runs either JIT-compiled (default) or as
ordinary Python. Set SAFELANE_NO_NUMBA=1 before importing to select the
pure-Python/numpy fallback; it is slow but has identical semantics and is
useful for debugging and as a benchmark baseline (see benchmarks/).
"""
import os

NUMBA_ENV_VAR = "SAFELANE_NO_NUMBA"


def _plain_njit(*args, **kwargs):
    if args and callable(args[0]):
        return args[0]

    def decorate(func):
        return func

    return decorate


def numba_disabled_by_env() -> bool:
    return os.environ.get(NUMBA_ENV_VAR, "").strip().lower() in ("1", "true", "yes", "on")


if numba_disabled_by_env():
    NUMBA_ENABLED = False
    njit = _plain_njit
    prange = range
else:
    try:
        from numba import njit, prange  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dependency by default
        NUMBA_ENABLED = False
        njit = _plain_njit
        prange = range


def set_worker_threads(n: int) -> None:
    """Bound the worker pool used by parallel episode batches (no-op without numba)."""
    if NUMBA_ENABLED:
        import numba

        numba.set_num_threads(max(1, int(n)))
