# Numba is optional. Set UNIFACT_NO_NUMBA=1 to force the pure-numpy kernels.

import logging
import os

logger = logging.getLogger(__name__)

_disabled = os.environ.get("UNIFACT_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is installed in CI
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _disabled

if HAVE_NUMBA:
    njit = numba.njit
else:  # pragma: no cover
    def njit(pyfunc=None, **kwargs):
        """Null decorator when numba is missing."""
        def wrap(func):
            return func
        return wrap if pyfunc is None else wrap(pyfunc)

if _disabled:
    logger.debug("numba kernels disabled by UNIFACT_NO_NUMBA")
