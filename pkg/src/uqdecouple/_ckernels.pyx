# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.  Mirrors ``_pykernels`` function by function."""
import numpy as np
cimport numpy as cnp
from libc.math cimport erfc, exp, log, sqrt, isfinite, NAN
from libc.stdint cimport uint64_t
from libc.stdlib cimport malloc, free

from .errors import DecompositionError

cnp.import_array()

cdef double SQRT2 = 1.4142135623730951
cdef double SQRT2PI = 2.5066282746310002
cdef double P_LOW = 0.02425
cdef double JITTER_START = 1e-12
cdef double JITTER_STOP = 1e-6

cdef double A0 = -3.969683028665376e01, A1 = 2.209460984245205e02
cdef double A2 = -2.759285104469687e02, A3 = 1.383577518672690e02
cdef double A4 = -3.066479806614716e01, A5 = 2.506628277459239e00
cdef double B0 = -5.447609879822406e01, B1 = 1.615858368580409e02
cdef double B2 = -1.556989798598866e02, B3 = 6.680131188771972e01
cdef double B4 = -1.328068155288572e01
cdef double C0 = -7.784894002430293e-03, C1 = -3.223964580411365e-01
cdef double C2 = -2.400758277161838e00, C3 = -2.549732539343734e00
cdef double C4 = 4.374664141464968e00, C5 = 2.938163982698783e00
cdef double D0 = 7.784695709041462e-03, D1 = 3.224671290700398e-01
cdef double D2 = 2.445134137142996e00, D3 = 3.754408661907416e00

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef uint64_t LANE = 0xD1B54A32D192ED03ULL


cdef inline double _ndtr(double x) noexcept nogil:
    return 0.5 * erfc(-x / SQRT2)


cdef inline double _lower_ndtri(double p) noexcept nogil:
    cdef double q, r, x, e, u, step
    if p < P_LOW:
        q = sqrt(-2.0 * log(p))
        x = (((((C0 * q + C1) * q + C2) * q + C3) * q + C4) * q + C5) / \
            ((((D0 * q + D1) * q + D2) * q + D3) * q + 1.0)
    else:
        q = p - 0.5
        r = q * q
        x = (((((A0 * r + A1) * r + A2) * r + A3) * r + A4) * r + A5) * q / \
            (((((B0 * r + B1) * r + B2) * r + B3) * r + B4) * r + 1.0)
    e = 0.5 * erfc(-x / SQRT2) - p
    u = e * SQRT2PI * exp(0.5 * x * x)
    step = u / (1.0 + 0.5 * x * u)
    if isfinite(step):
        x = x - step
    return x


cdef inline double _ndtri(double p) noexcept nogil:
    if not (p > 0.0 and p < 1.0):
        return NAN
    if p <= 0.5:
        return _lower_ndtri(p)
    return -_lower_ndtri(1.0 - p)


cdef inline uint64_t _mix64(uint64_t z) noexcept nogil:
    z = z + GOLDEN
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


def ndtr(x):
    """Standard normal CDF, elementwise."""
    arr = np.asarray(x, dtype=np.float64)
    flat = np.ascontiguousarray(arr).reshape(-1)
    out = np.empty_like(flat)
    cdef double[::1] xv = flat
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = flat.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = _ndtr(xv[i])
    return out.reshape(arr.shape)


def ndtri(p):
    """Standard normal quantile for p in (0, 1); NaN elsewhere."""
    arr = np.asarray(p, dtype=np.float64)
    flat = np.ascontiguousarray(arr).reshape(-1)
    out = np.empty_like(flat)
    cdef double[::1] pv = flat
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = flat.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = _ndtri(pv[i])
    return out.reshape(arr.shape)


def stream_key(seed, stream):
    """Fold (seed, stream) into a 64-bit key."""
    cdef uint64_t k = _mix64(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF))
    cdef uint64_t s = _mix64(<uint64_t>((stream + 1) & 0xFFFFFFFFFFFFFFFF))
    return int(_mix64(k ^ s))


cdef void _fill(uint64_t key, uint64_t start, Py_ssize_t count, Py_ssize_t dim,
                double[:, ::1] out, bint normal) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef uint64_t h, g
    cdef double u
    for i in range(count):
        h = _mix64(key + (start + <uint64_t>i) * GOLDEN)
        for j in range(dim):
            g = _mix64(h + <uint64_t>(j + 1) * LANE)
            u = (<double>(g >> 11) + 0.5) * 1.1102230246251565e-16
            out[i, j] = _ndtri(u) if normal else u


def counter_uniforms(seed, stream, start, count, dim):
    """Uniforms on (0, 1) that depend only on (seed, stream, row, column)."""
    out = np.empty((count, dim))
    cdef uint64_t key = <uint64_t>stream_key(seed, stream)
    cdef uint64_t st = <uint64_t>start
    cdef Py_ssize_t c = count, d = dim
    cdef double[:, ::1] ov = out
    with nogil:
        _fill(key, st, c, d, ov, False)
    return out


def counter_normals(seed, stream, start, count, dim):
    """Standard normals by inversion of :func:`counter_uniforms`."""
    out = np.empty((count, dim))
    cdef uint64_t key = <uint64_t>stream_key(seed, stream)
    cdef uint64_t st = <uint64_t>start
    cdef Py_ssize_t c = count, d = dim
    cdef double[:, ::1] ov = out
    with nogil:
        _fill(key, st, c, d, ov, True)
    return out


cdef int _chol(const double[:, ::1] a, double jit, double* L, Py_ssize_t k) noexcept nogil:
    # returns -1 on success, otherwise the failing pivot index
    cdef Py_ssize_t i, j, p
    cdef double s
    for j in range(k):
        s = a[j, j] + jit
        for p in range(j):
            s -= L[j * k + p] * L[j * k + p]
        if not s > 0.0:
            return <int>j
        L[j * k + j] = sqrt(s)
        for i in range(j + 1, k):
            s = a[i, j]
            for p in range(j):
                s -= L[i * k + p] * L[j * k + p]
            L[i * k + j] = s / L[j * k + j]
    return -1


cdef int _chol_jittered(const double[:, ::1] a, double* L, Py_ssize_t k,
                        double* jit_out) noexcept nogil:
    cdef int piv = _chol(a, 0.0, L, k)
    cdef int first = piv
    cdef double base = 0.0, j
    cdef Py_ssize_t i
    jit_out[0] = 0.0
    if piv < 0:
        return -1
    for i in range(k):
        base += a[i, i]
    base /= k
    if not base > 0.0:
        return first
    j = JITTER_START * base
    while j <= JITTER_STOP * base * (1.0 + 1e-12):
        if _chol(a, j, L, k) < 0:
            jit_out[0] = j
            return -1
        j *= 2.0
    return first


cdef int _batch(const double[:, :, ::1] mats, const double[:, ::1] b,
                double[:, ::1] out, double[::1] jit, bint solve,
                Py_ssize_t* bad) noexcept nogil:
    cdef Py_ssize_t n = mats.shape[0], k = mats.shape[1]
    cdef Py_ssize_t s, i, p
    cdef double acc
    cdef int piv
    cdef double* L = <double*>malloc(k * k * sizeof(double))
    if L == NULL:
        return -2
    for s in range(n):
        for i in range(k * k):
            L[i] = 0.0
        piv = _chol_jittered(mats[s], L, k, &jit[s])
        if piv >= 0:
            bad[0] = s
            free(L)
            return piv
        if solve:
            for i in range(k):
                acc = b[s, i]
                for p in range(i):
                    acc -= L[i * k + p] * out[s, p]
                out[s, i] = acc / L[i * k + i]
        else:
            for i in range(k):
                acc = 0.0
                for p in range(i + 1):
                    acc += L[i * k + p] * b[s, p]
                out[s, i] = acc
    free(L)
    return -1


def _run_batch(mats, b, bint solve):
    m = np.ascontiguousarray(mats, dtype=np.float64)
    bb = np.ascontiguousarray(b, dtype=np.float64)
    n = m.shape[0]
    out = np.empty((n, m.shape[1]))
    jit = np.zeros(n)
    cdef Py_ssize_t bad = -1
    cdef int piv
    cdef const double[:, :, ::1] mv = m
    cdef const double[:, ::1] bv = bb
    cdef double[:, ::1] ov = out
    cdef double[::1] jv = jit
    with nogil:
        piv = _batch(mv, bv, ov, jv, solve, &bad)
    if piv == -2:
        raise MemoryError()
    if piv >= 0:
        raise DecompositionError(
            f"batch entry {bad}: matrix is not positive definite (pivot {piv})",
            pivot=piv, index=bad)
    return out, jit


def batch_chol_matvec(mats, u):
    """Compute ``chol(mats[s]) @ u[s]`` for every s."""
    return _run_batch(mats, u, False)


def batch_chol_solve(mats, b):
    """Compute ``chol(mats[s])^{-1} @ b[s]`` for every s."""
    return _run_batch(mats, b, True)
