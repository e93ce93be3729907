"""Kernel backend selection.

Two interchangeable kernel sets implement the hot forward/backward loops:

- ``numba``: @njit kernels, batch-parallel via prange.  BLAS is pinned to a
  single thread while this backend is active so prange workers do not fight
  OpenBLAS's own pool.
- ``numpy``: pure vectorized fallback, BLAS threading left untouched.

The ``LOGTRIAGE_BACKEND`` environment variable forces a backend ("numba" or
"numpy"); the default is numba when importable, else numpy.
"""

from __future__ import annotations

import importlib
import os

ENV_VAR = "LOGTRIAGE_BACKEND"

_current_name: str | None = None
_current_module = None
_blas_limiter = None


def numba_available() -> bool:
    try:
        importlib.import_module("numba")
        return True
    except ImportError:
        return False


def default_backend_name() -> str:
    env = os.environ.get(ENV_VAR, "auto").strip().lower()
    if env in ("numba", "numpy"):
        return env
    if env not in ("", "auto"):
        raise ValueError(f"{ENV_VAR} must be 'numba', 'numpy' or 'auto', got {env!r}")
    return "numba" if numba_available() else "numpy"


def _limit_blas_threads(active: bool) -> None:
    # prange workers each call BLAS; nested BLAS threading thrashes the cores.
    global _blas_limiter
    if active and _blas_limiter is None:
        try:
            from threadpoolctl import threadpool_limits

            _blas_limiter = threadpool_limits(limits=1, user_api="blas")
        except Exception:
            _blas_limiter = None
    elif not active and _blas_limiter is not None:
        try:
            _blas_limiter.restore_original_limits()
        finally:
            _blas_limiter = None


def set_backend(name: str):
    """Load and activate a kernel backend; returns the kernel module."""
    global _current_name, _current_module
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == _current_name:
        return _current_module
    module = importlib.import_module(f"logtriage.nn.kernels_{name}")
    _limit_blas_threads(name == "numba")
    _current_name, _current_module = name, module
    return module


def kernels():
    """The active kernel module (resolving the default on first use)."""
    if _current_module is None:
        set_backend(default_backend_name())
    return _current_module


def backend_name() -> str:
    if _current_name is None:
        set_backend(default_backend_name())
    return _current_name
