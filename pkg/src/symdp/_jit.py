"""Switch between numba-compiled kernels and their plain Python fallback.

Set ``SYMDP_DISABLE_JIT=1`` before importing :mod:`symdp` to run every kernel
as ordinary Python. Results are identical; only speed differs.
"""

from __future__ import annotations

import os

JIT_DISABLED = os.environ.get("SYMDP_DISABLE_JIT", "").strip().lower() in {"1", "true", "yes", "on"}

if JIT_DISABLED:
    HAVE_NUMBA = False
else:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAVE_NUMBA = False
    else:
        HAVE_NUMBA = True


def njit(func=None, *, inline: bool = False, nrt: bool = True):
    """``numba.njit(cache=True)`` when available, identity otherwise.

    ``inline=True`` asks numba to inline the function at every call site,
    which pays off for small helpers called from recursive kernels.
    ``nrt=False`` drops reference counting of array arguments; such a
    function must not allocate. Recursive kernels that take the whole store
    spend most of their time on reference counts otherwise.
    """
    if func is None:
        return lambda f: njit(f, inline=inline, nrt=nrt)
    if HAVE_NUMBA:
        return numba.njit(cache=True, inline="always" if inline else "never", _nrt=nrt)(func)
    return func


def backend() -> str:
    return "numba" if HAVE_NUMBA else "python"
