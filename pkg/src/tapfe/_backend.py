"""Backend selection for the hot kernels.

Set ``TAPFE_NUMBA=0`` to force the pure-numpy kernels.  If numba cannot be
imported the numpy kernels are used automatically.
"""
import os

ENV_FLAG = "TAPFE_NUMBA"


def numba_requested() -> bool:
    val = os.environ.get(ENV_FLAG, "1").strip().lower()
    return val not in ("0", "false", "no", "off")


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = numba_requested() and numba_available()
BACKEND = "numba" if USE_NUMBA else "numpy"
