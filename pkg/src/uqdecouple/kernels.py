"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it imports cleanly;
otherwise the numpy implementation in ``_pykernels`` is used.  Setting
``UQDECOUPLE_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _pykernels

try:
    from . import _ckernels
    HAVE_CYTHON = True
except ImportError:
    _ckernels = None
    HAVE_CYTHON = False

if HAVE_CYTHON and os.environ.get("UQDECOUPLE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    BACKEND, _impl = "cython", _ckernels
else:
    BACKEND, _impl = "python", _pykernels

ndtr = _impl.ndtr
ndtri = _impl.ndtri
counter_uniforms = _impl.counter_uniforms
counter_normals = _impl.counter_normals
batch_chol_matvec = _impl.batch_chol_matvec
batch_chol_solve = _impl.batch_chol_solve

# single-matrix factorization always goes through LAPACK
cholesky_jittered = _pykernels.cholesky_jittered
jitter_schedule = _pykernels.jitter_schedule


def get_backend(name):
    """Return the kernel module for ``"python"`` or ``"cython"``."""
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("the compiled extension is not available")
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
