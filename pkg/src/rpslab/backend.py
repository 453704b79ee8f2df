"""Kernel backend selection.

Hot inner loops ship in two interchangeable implementations: a numba
``@njit`` version and a pure-numpy version.  The active backend is chosen
once at import time from the ``RPSLAB_NUMBA`` environment variable
(``1``/``true`` to force numba, ``0``/``false`` to force numpy; unset means
"numba if importable").  Both backends consume the same keyed counter RNG,
so results are bit-identical either way; the switch only trades compile
time against throughput.
"""

import os

_flag = os.environ.get("RPSLAB_NUMBA", "").strip().lower()

if _flag in ("0", "false", "no", "off"):
    NUMBA_ENABLED = False
elif _flag in ("1", "true", "yes", "on"):
    import numba  # noqa: F401  fail loudly if forced on but missing

    NUMBA_ENABLED = True
else:
    try:
        import numba  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


def njit_or_plain(**njit_kwargs):
    """Return ``numba.njit`` when the numba backend is active, else a no-op
    decorator (the undecorated function runs as ordinary Python)."""
    if NUMBA_ENABLED:
        from numba import njit

        return njit(**njit_kwargs)
    return lambda fn: fn
