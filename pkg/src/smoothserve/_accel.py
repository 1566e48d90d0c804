"""Numba switch.

Set ``SMOOTHSERVE_DISABLE_NUMBA=1`` to route every hot kernel through its
pure-numpy implementation. Numba-compiled variants stay importable either way
(when numba is installed) so the two paths can be compared directly.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_DISABLED = os.environ.get("SMOOTHSERVE_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(fn):
    """Compile ``fn`` with numba when available, otherwise return None."""
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=True, nogil=True)(fn)


def pick(nb_fn, np_fn):
    return nb_fn if (USE_NUMBA and nb_fn is not None) else np_fn
