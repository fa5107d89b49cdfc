"""Special functions, univariate marginals and SPD matrix routines.

Everything here is vectorized over numpy arrays.  Distribution objects are
immutable; their parameters may be scalars or arrays, in which case all
methods broadcast against the parameter shape (this is how the conditional
output models return one marginal per sample of X).
"""
import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import kernels
from .errors import (
    DecompositionError,
    DegenerateDataError,
    DomainError,
    JitterWarning,
    ParameterError,
    ShapeError,
)

#: probabilities are clamped to [PROB_CLAMP, 1 - PROB_CLAMP] before inversion
PROB_CLAMP = 1e-15

_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _scalarize(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def std_normal_cdf(x):
    """Standard normal CDF.

    Raises
    ------
    DomainError
        If any element of `x` is NaN or infinite.
    """
    xa = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(xa)):
        raise DomainError("std_normal_cdf requires finite input")
    return _scalarize(kernels.ndtr(xa), x)


def std_normal_inv_cdf(p):
    """Standard normal quantile function.

    The caller is responsible for keeping `p` inside the open unit interval
    (see :func:`clamp_probability`); boundary values raise instead of
    silently returning infinities.
    """
    pa = np.asarray(p, dtype=np.float64)
    if not np.all((pa > 0.0) & (pa < 1.0)):
        raise DomainError("std_normal_inv_cdf requires 0 < p < 1")
    return _scalarize(kernels.ndtri(pa), p)


def clamp_probability(p):
    """Clip probabilities into [PROB_CLAMP, 1 - PROB_CLAMP]."""
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


class Family(str, enum.Enum):
    NORMAL = "normal"
    LOGNORMAL = "lognormal"
    UNIFORM = "uniform"
    WEIBULL = "weibull"


PARAM_NAMES = {
    Family.NORMAL: ("mean", "std"),
    Family.LOGNORMAL: ("log_mean", "log_std"),
    Family.UNIFORM: ("lower", "upper"),
    Family.WEIBULL: ("shape", "scale"),
}


def _as_param(v):
    a = np.asarray(v, dtype=np.float64)
    return float(a) if a.ndim == 0 else a


@dataclass(frozen=True, eq=False)
class Marginal:
    """Parametric univariate distribution.

    Use the family constructors (:meth:`normal`, :meth:`lognormal`,
    :meth:`uniform`, :meth:`weibull`) rather than building one directly.
    Parameters are validated here, so the CDF, quantile and density never
    fail on account of them.
    """

    family: Family
    params: tuple

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        names = PARAM_NAMES[fam]
        if len(self.params) != len(names):
            raise ParameterError(
                f"{fam.value} takes {len(names)} parameters {names}, got {len(self.params)}")
        params = tuple(_as_param(v) for v in self.params)
        object.__setattr__(self, "params", params)
        a, b = params
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ParameterError(f"{fam.value} parameters must be finite")
        if fam in (Family.NORMAL, Family.LOGNORMAL):
            if not np.all(b > 0):
                raise ParameterError(f"{fam.value} {names[1]} must be > 0")
        elif fam is Family.UNIFORM:
            if not np.all(a < b):
                raise ParameterError("uniform requires lower < upper")
        elif not (np.all(a > 0) and np.all(b > 0)):
            raise ParameterError("weibull shape and scale must be > 0")

    @classmethod
    def normal(cls, mean, std):
        return cls(Family.NORMAL, (mean, std))

    @classmethod
    def lognormal(cls, log_mean, log_std):
        return cls(Family.LOGNORMAL, (log_mean, log_std))

    @classmethod
    def uniform(cls, lower, upper):
        return cls(Family.UNIFORM, (lower, upper))

    @classmethod
    def weibull(cls, shape, scale):
        return cls(Family.WEIBULL, (shape, scale))

    @classmethod
    def from_dict(cls, d):
        fam = Family(d["family"])
        return cls(fam, tuple(d[k] for k in PARAM_NAMES[fam]))

    def to_dict(self):
        out = {"family": self.family.value}
        for k, v in zip(PARAM_NAMES[self.family], self.params):
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in zip(PARAM_NAMES[self.family], self.params))
        return f"Marginal.{self.family.value}({args})"

    @property
    def support(self):
        """Closure of the support as ``(lower, upper)``."""
        a, b = self.params
        if self.family is Family.NORMAL:
            return (-math.inf, math.inf)
        if self.family is Family.UNIFORM:
            return (a, b)
        return (0.0, math.inf)

    def in_interior(self, x):
        """Boolean mask of points strictly inside the support."""
        x = np.asarray(x, dtype=np.float64)
        lo, hi = self.support
        return (x > lo) & (x < hi)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        a, b = self.params
        fam = self.family
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if fam is Family.NORMAL:
                out = kernels.ndtr((x - a) / b)
            elif fam is Family.LOGNORMAL:
                pos = x > 0
                z = (np.log(np.where(pos, x, 1.0)) - a) / b
                out = np.where(pos, kernels.ndtr(z), 0.0)
            elif fam is Family.UNIFORM:
                out = np.clip((x - a) / (b - a), 0.0, 1.0)
            else:
                t = np.where(x > 0, x, 0.0) / b
                out = -np.expm1(-(t ** a))
        out = np.asarray(out, dtype=np.float64)
        return float(out) if out.ndim == 0 else out

    def ppf(self, p):
        """Quantile function; `p` must lie in the open unit interval."""
        p = np.asarray(p, dtype=np.float64)
        if not np.all((p > 0.0) & (p < 1.0)):
            raise DomainError(f"{self.family.value} quantile requires 0 < p < 1")
        a, b = self.params
        fam = self.family
        if fam is Family.NORMAL:
            out = a + b * kernels.ndtri(p)
        elif fam is Family.LOGNORMAL:
            out = np.exp(a + b * kernels.ndtri(p))
        elif fam is Family.UNIFORM:
            out = a + p * (b - a)
        else:
            out = b * (-np.log1p(-p)) ** (1.0 / a)
        out = np.asarray(out, dtype=np.float64)
        return float(out) if out.ndim == 0 else out

    def sf(self, x):
        """Survival function ``1 - cdf(x)``, accurate in the upper tail."""
        x = np.asarray(x, dtype=np.float64)
        a, b = self.params
        fam = self.family
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if fam is Family.NORMAL:
                out = kernels.ndtr((a - x) / b)
            elif fam is Family.LOGNORMAL:
                pos = x > 0
                z = (a - np.log(np.where(pos, x, 1.0))) / b
                out = np.where(pos, kernels.ndtr(z), 1.0)
            elif fam is Family.UNIFORM:
                out = np.clip((b - x) / (b - a), 0.0, 1.0)
            else:
                t = np.where(x > 0, x, 0.0) / b
                out = np.exp(-(t ** a))
        out = np.asarray(out, dtype=np.float64)
        return float(out) if out.ndim == 0 else out

    def isf(self, q):
        """Inverse survival function, ``ppf(1 - q)`` without the cancellation."""
        q = np.asarray(q, dtype=np.float64)
        if not np.all((q > 0.0) & (q < 1.0)):
            raise DomainError(f"{self.family.value} inverse survival requires 0 < q < 1")
        a, b = self.params
        fam = self.family
        if fam is Family.NORMAL:
            out = a - b * kernels.ndtri(q)
        elif fam is Family.LOGNORMAL:
            out = np.exp(a - b * kernels.ndtri(q))
        elif fam is Family.UNIFORM:
            out = b - q * (b - a)
        else:
            out = b * (-np.log(q)) ** (1.0 / a)
        out = np.asarray(out, dtype=np.float64)
        return float(out) if out.ndim == 0 else out

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        a, b = self.params
        fam = self.family
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if fam is Family.NORMAL:
                z = (x - a) / b
                out = np.exp(-0.5 * z * z) * _INV_SQRT2PI / b
            elif fam is Family.LOGNORMAL:
                pos = x > 0
                xs = np.where(pos, x, 1.0)
                z = (np.log(xs) - a) / b
                out = np.where(pos, np.exp(-0.5 * z * z) * _INV_SQRT2PI / (b * xs), 0.0)
            elif fam is Family.UNIFORM:
                out = np.where((x >= a) & (x <= b), 1.0 / (b - a), 0.0)
            else:
                pos = x > 0
                t = np.where(pos, x, 1.0) / b
                out = np.where(pos, (a / b) * t ** (a - 1.0) * np.exp(-(t ** a)), 0.0)
        out = np.asarray(out, dtype=np.float64)
        return float(out) if out.ndim == 0 else out


def marginal_cdf(dist, x):
    return dist.cdf(x)


def marginal_quantile(dist, p):
    return dist.ppf(p)


def marginal_pdf(dist, x):
    return dist.pdf(x)


def check_symmetric(a, name="matrix", tol=1e-12):
    """Validate a finite, square, symmetric matrix and return it as float array."""
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ShapeError(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ParameterError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > tol * scale:
        raise ParameterError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def check_correlation(a, name="correlation"):
    """Validate a correlation matrix: symmetric, unit diagonal, |entries| <= 1,
    positive definite.  Returns the symmetrized array."""
    a = check_symmetric(a, name)
    if np.max(np.abs(np.diag(a) - 1.0)) > 1e-12:
        raise ParameterError(f"{name} must have unit diagonal")
    if np.any(np.abs(a) > 1.0):
        raise ParameterError(f"{name} has entries outside [-1, 1]")
    np.fill_diagonal(a, 1.0)
    try:
        kernels.cholesky_jittered(a, escalate=False)
    except DecompositionError as exc:
        raise ParameterError(f"{name} is not positive definite (pivot {exc.pivot})") from None
    return a


class LowerTriangular:
    """Lower-triangular matrix with strictly positive diagonal.

    Attributes
    ----------
    matrix : ndarray
    jitter : float
        Diagonal jitter that was added to the factored matrix, if this is a
        Cholesky factor.
    """

    __slots__ = ("matrix", "jitter")

    def __init__(self, matrix, jitter=0.0):
        m = np.array(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"lower-triangular matrix must be square, got {m.shape}")
        if np.any(np.triu(m, 1) != 0.0):
            raise ParameterError("upper triangle must be exactly zero")
        if not np.all(np.diag(m) > 0.0):
            raise ParameterError("diagonal must be strictly positive")
        m.setflags(write=False)
        self.matrix = m
        self.jitter = float(jitter)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def __repr__(self):
        return f"LowerTriangular({self.matrix.tolist()!r}, jitter={self.jitter!r})"

    def matvec(self, u):
        """``L @ u`` for a vector or a batch of row vectors ``(n, dim)``."""
        u = np.asarray(u, dtype=np.float64)
        if u.shape[-1] != self.dim:
            raise ShapeError(f"expected trailing dimension {self.dim}, got {u.shape}")
        return u @ self.matrix.T

    def solve(self, b):
        """``L^{-1} b`` for a vector or a batch of row vectors ``(n, dim)``."""
        b = np.asarray(b, dtype=np.float64)
        if b.shape[-1] != self.dim:
            raise ShapeError(f"expected trailing dimension {self.dim}, got {b.shape}")
        if b.ndim == 1:
            return solve_triangular(self.matrix, b, lower=True, check_finite=False)
        return solve_triangular(self.matrix, b.T, lower=True, check_finite=False).T


def cholesky(a, jitter_policy="escalating"):
    """Cholesky factor of a symmetric positive definite matrix.

    With ``jitter_policy="escalating"`` a failed factorization is retried
    with diagonal jitter ``1e-12 * tr(a)/dim``, doubling up to
    ``1e-6 * tr(a)/dim``.  The jitter used is recorded on the result and
    reported through :class:`JitterWarning`.

    Raises
    ------
    DecompositionError
        If `a` is not positive definite after escalation; ``.pivot`` holds
        the first failing pivot of the unjittered matrix.
    """
    if jitter_policy not in ("none", "escalating"):
        raise ValueError(f"unknown jitter policy {jitter_policy!r}")
    a = check_symmetric(a)
    L, jit = kernels.cholesky_jittered(a, escalate=jitter_policy == "escalating")
    if jit > 0.0:
        warnings.warn(f"added diagonal jitter {jit:.3g} to factor a {a.shape[0]}x{a.shape[0]} "
                      "matrix", JitterWarning, stacklevel=2)
    return LowerTriangular(L, jit)


def tri_solve_lower(l, b):
    """Solve ``l @ x = b`` by forward substitution."""
    if not isinstance(l, LowerTriangular):
        l = LowerTriangular(l)
    b = np.asarray(b, dtype=np.float64)
    if b.ndim not in (1, 2) or b.shape[0] != l.dim:
        raise ShapeError(f"right-hand side shape {b.shape} does not match dimension {l.dim}")
    return solve_triangular(l.matrix, b, lower=True, check_finite=False)


def sample_correlation(samples):
    """Pearson correlation matrix of the columns of an ``(n, d)`` array.

    Raises
    ------
    DegenerateDataError
        If a column has zero sample variance.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ShapeError(f"samples must be a 2-D array, got {x.ndim}-D")
    n, d = x.shape
    if n < 2:
        raise DegenerateDataError("need at least two samples for a correlation")
    centered = x - x.mean(axis=0)
    ss = np.einsum("ij,ij->j", centered, centered)
    for j in range(d):
        if not ss[j] > 0.0:
            raise DegenerateDataError(f"column {j} has zero sample variance", column=j)
    s = np.sqrt(ss)
    r = (centered.T @ centered) / np.outer(s, s)
    r = np.clip(0.5 * (r + r.T), -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return r
