"""Pure numpy implementation of the hot kernels.

This module is the fallback used when the compiled ``_ckernels`` extension
is unavailable, and the reference the extension is tested against.  Every
function here has an identically named counterpart in ``_ckernels.pyx``.
"""
import math

import numpy as np
from scipy.linalg import lapack
from scipy.special import erfc

from .errors import DecompositionError

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)

# Rational approximation of the normal quantile (P. J. Acklam), relative
# error 1.15e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
P_LOW = 0.02425

JITTER_START = 1e-12
JITTER_STOP = 1e-6

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LANE = np.uint64(0xD1B54A32D192ED03)


def ndtr(x):
    """Standard normal CDF, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * erfc(-x / SQRT2)


def _lower_ndtri(p):
    # p in (0, 0.5]; returns x <= 0
    x = np.empty_like(p)
    tail = p < P_LOW
    if np.any(tail):
        q = np.sqrt(-2.0 * np.log(p[tail]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[tail] = num / den
    mid = ~tail
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[mid] = num / den
    # one Halley step against the erfc-based CDF
    e = 0.5 * erfc(-x / SQRT2) - p
    with np.errstate(over="ignore", invalid="ignore"):
        u = e * SQRT2PI * np.exp(0.5 * x * x)
        step = u / (1.0 + 0.5 * x * u)
    return np.where(np.isfinite(step), x - step, x)


def ndtri(p):
    """Standard normal quantile for p in (0, 1); NaN elsewhere."""
    p = np.asarray(p, dtype=np.float64)
    flat = p.reshape(-1)
    out = np.full(flat.shape, np.nan)
    ok = (flat > 0.0) & (flat < 1.0)
    lo = ok & (flat <= 0.5)
    hi = ok & (flat > 0.5)
    if np.any(lo):
        out[lo] = _lower_ndtri(flat[lo])
    if np.any(hi):
        # 1 - p is exact for p >= 0.5
        out[hi] = -_lower_ndtri(1.0 - flat[hi])
    return out.reshape(p.shape)


def _mix64(z):
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> np.uint64(30))) * _M1) & _MASK64
    z = ((z ^ (z >> np.uint64(27))) * _M2) & _MASK64
    return z ^ (z >> np.uint64(31))


def stream_key(seed, stream):
    """Fold (seed, stream) into a 64-bit key."""
    k = _mix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    s = _mix64(np.array([(stream + 1) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    return int(_mix64(k ^ s)[0])


def counter_uniforms(seed, stream, start, count, dim):
    """Uniforms on (0, 1) that depend only on (seed, stream, row, column).

    Row ``i`` of the result is sample index ``start + i``.  Any split of the
    index range into chunks reproduces the same values.
    """
    key = np.uint64(stream_key(seed, stream))
    rows = np.arange(start, start + count, dtype=np.uint64)
    cols = np.arange(1, dim + 1, dtype=np.uint64) * _LANE & _MASK64
    h = _mix64((key + rows * _GOLDEN) & _MASK64)
    h = _mix64((h[:, None] + cols[None, :]) & _MASK64)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def counter_normals(seed, stream, start, count, dim):
    """Standard normals by inversion of :func:`counter_uniforms`."""
    return ndtri(counter_uniforms(seed, stream, start, count, dim))


def jitter_schedule(a, scale=None):
    """Yield the escalating jitter magnitudes tried for matrix ``a``.

    Magnitudes run from ``1e-12 * scale`` to ``1e-6 * scale`` by doubling,
    where `scale` defaults to ``tr(a) / dim``.
    """
    base = float(np.trace(a)) / a.shape[0] if scale is None else float(scale)
    if not base > 0.0:
        return
    j = JITTER_START * base
    while j <= JITTER_STOP * base * (1.0 + 1e-12):
        yield j
        j *= 2.0


def cholesky_jittered(a, escalate=True, scale=None):
    """Lower Cholesky factor of ``a`` with escalating diagonal jitter.

    `scale` overrides the reference magnitude of the jitter schedule.

    Returns
    -------
    L : ndarray
    jitter : float
        Total jitter added to the diagonal (0.0 if none was needed).
    """
    a = np.asarray(a, dtype=np.float64)
    c, info = lapack.dpotrf(a, lower=1, clean=1, overwrite_a=0)
    if info == 0:
        return c, 0.0
    if info < 0:
        raise ValueError(f"illegal argument {-info} to dpotrf")
    first_pivot = info - 1
    if escalate:
        eye = np.eye(a.shape[0])
        for j in jitter_schedule(a, scale):
            c, info = lapack.dpotrf(a + j * eye, lower=1, clean=1)
            if info == 0:
                return c, j
    raise DecompositionError(
        f"matrix is not positive definite (pivot {first_pivot})", pivot=first_pivot)


def _batch_factor(mats):
    mats = np.ascontiguousarray(mats, dtype=np.float64)
    jit = np.zeros(mats.shape[0])
    try:
        return np.linalg.cholesky(mats), jit
    except np.linalg.LinAlgError:
        pass
    out = np.empty_like(mats)
    for s in range(mats.shape[0]):
        try:
            out[s], jit[s] = cholesky_jittered(mats[s])
        except DecompositionError as exc:
            raise DecompositionError(
                f"batch entry {s}: {exc}", pivot=exc.pivot, index=s) from None
    return out, jit


def batch_chol_matvec(mats, u):
    """Compute ``chol(mats[s]) @ u[s]`` for every s.

    Returns the products and the jitter applied to each matrix.
    """
    L, jit = _batch_factor(mats)
    return np.einsum("sij,sj->si", L, u), jit


def batch_chol_solve(mats, b):
    """Compute ``chol(mats[s])^{-1} @ b[s]`` for every s by forward substitution."""
    L, jit = _batch_factor(mats)
    n, k = b.shape
    out = np.empty((n, k))
    for i in range(k):
        acc = b[:, i] - np.einsum("sj,sj->s", L[:, i, :i], out[:, :i])
        out[:, i] = acc / L[:, i, i]
    return out, jit
