"""Numba acceleration shim.

Hot kernels (SOR inpainting sweeps, the range coder, coefficient
tokenization) are written as plain loop-style Python functions and compiled
with numba when available. Setting the environment variable MCM_NUMBA=0
selects the uncompiled fallback path; both paths run the same source, so
results are identical either way (the fallback is just slower).

bench/bench_kernels.py times the two paths against each other.
"""

import os


def _env_enabled() -> bool:
    return os.environ.get("MCM_NUMBA", "1").strip().lower() not in ("0", "false", "off")


NUMBA_ENABLED = False
if _env_enabled():
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False

if NUMBA_ENABLED:

    def maybe_njit(func):
        return _njit(cache=True)(func)

else:

    def maybe_njit(func):
        return func
