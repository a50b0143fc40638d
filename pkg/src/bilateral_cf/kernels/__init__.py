"""Hot per-step kernels.

Two interchangeable implementations live here: explicit loops compiled with
numba (``_jit``) and vectorized numpy (``_vec``).  The compiled path is used
when numba imports cleanly, unless ``BILATERAL_CF_DISABLE_NUMBA`` is set to a
truthy value in the environment before this package is imported.

Absent neighbors are encoded as ``inf`` gaps at this level; the simulator
translates them to ``None``/NaN at its public surface.
"""
import os

from . import _vec

_FLAG = "BILATERAL_CF_DISABLE_NUMBA"


def _numba_disabled():
    return os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


def _load_jit():
    try:
        from . import _jit
    except ImportError:  # numba missing or broken
        return None
    return _jit


_impl = None if _numba_disabled() else _load_jit()
if _impl is None:
    _impl = _vec

BACKEND = "numba" if _impl is not _vec else "numpy"

gaps = _impl.gaps
integrate = _impl.integrate
idm_accel = _impl.idm_accel
gipps_accel = _impl.gipps_accel
bcm_accel = _impl.bcm_accel
unilateral_accel = _impl.unilateral_accel

__all__ = [
    "BACKEND",
    "gaps",
    "integrate",
    "idm_accel",
    "gipps_accel",
    "bcm_accel",
    "unilateral_accel",
]
