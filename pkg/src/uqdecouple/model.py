"""Decoupling of dependent model uncertainty.

Given the conditional law of the outputs ``Y | X = x`` (per-output
marginals plus a Gaussian copula with correlation ``R(x)``), this module
provides the chain

    y  --PIT-->  z  --Phi^{-1}-->  w  --chol(R(x))^{-1}-->  u_z

and its inverse.  ``u_z`` is a vector of independent standard normals that
no longer depends on the inputs, which is what lets input and model
uncertainty be sampled jointly as one standard normal vector.

Vectors ``z`` and ``w`` are plain float arrays.  All transforms accept a
single point (``x`` of shape ``(n_x,)``, values ``(n_y,)``), many values at
one point (values ``(n, n_y)``), or one value per point (``x`` of shape
``(n, n_x)``, values ``(n, n_y)``).
"""
import abc
import math
import warnings

import numpy as np
from scipy import stats

from . import kernels
from .errors import DecompositionError, DomainError, JitterWarning, ShapeError
from .numerics import (
    Family,
    check_correlation,
    cholesky,
    clamp_probability,
    sample_correlation,
    std_normal_inv_cdf,
)

_FACTOR_CACHE_SIZE = 128


def to_scipy(dist):
    """Frozen ``scipy.stats`` distribution equal in law to a :class:`Marginal`."""
    a, b = dist.params
    if dist.family is Family.NORMAL:
        return stats.norm(loc=a, scale=b)
    if dist.family is Family.LOGNORMAL:
        return stats.lognorm(s=b, scale=np.exp(a))
    if dist.family is Family.UNIFORM:
        return stats.uniform(loc=a, scale=np.asarray(b) - a)
    return stats.weibull_min(c=a, scale=b)


def _batch_root(r):
    # symmetric square root via eigendecomposition; independent of Cholesky
    lam, vec = np.linalg.eigh(r)
    return vec * np.sqrt(np.clip(lam, 0.0, None))[..., None, :]


class ConditionalOutputModel(abc.ABC):
    """Conditional law of ``n_y`` outputs given the inputs.

    Subclasses implement :meth:`conditional_marginal` and either set
    ``constant_correlation`` or override :meth:`copula_correlation`.  Both
    must accept ``x`` with any leading batch shape and broadcast over it.
    """

    n_y = None
    n_x = None
    #: the copula correlation when it does not depend on x, else None
    constant_correlation = None

    @abc.abstractmethod
    def conditional_marginal(self, i, x):
        """Marginal law of output `i` at `x`; parameters have shape ``x.shape[:-1]``."""

    def copula_correlation(self, x):
        """Copula correlation ``R(x)``, shape ``x.shape[:-1] + (n_y, n_y)``."""
        if self.constant_correlation is None:
            raise NotImplementedError
        r = self.constant_correlation
        x = np.asarray(x)
        return np.broadcast_to(r, x.shape[:-1] + r.shape)

    def correlation_factor(self, x):
        """Cholesky factor of ``R(x)`` at a single point, cached per x."""
        if self.constant_correlation is not None:
            f = self.__dict__.get("_const_factor")
            if f is None:
                f = self.__dict__["_const_factor"] = cholesky(self.constant_correlation)
            return f
        x = np.ascontiguousarray(x, dtype=np.float64)
        cache = self.__dict__.setdefault("_factor_cache", {})
        key = x.tobytes()
        f = cache.get(key)
        if f is None:
            f = cholesky(self.copula_correlation(x))
            if len(cache) >= _FACTOR_CACHE_SIZE:
                cache.pop(next(iter(cache)), None)
            cache[key] = f
        return f

    def sample_conditional(self, x, rng, n=None):
        """Sample ``Y | X = x`` directly, without the decoupled chain.

        With a single ``x`` returns ``(n, n_y)`` draws at that point; with a
        batch of points returns one draw per row.  Uses numpy's generator,
        an eigendecomposition of ``R(x)`` and scipy's quantile functions, so
        it shares no code path with :func:`y_from_z` / :func:`z_from_uz`.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            if n is None:
                raise ValueError("n is required for a single x")
            rows = n
        else:
            rows = x.shape[0]
        g = rng.standard_normal((rows, self.n_y))
        r = self.constant_correlation
        if r is None:
            r = self.copula_correlation(x)
        root = _batch_root(np.asarray(r))
        w = g @ root.T if root.ndim == 2 else np.einsum("sij,sj->si", root, g)
        z = stats.norm.cdf(w)
        y = np.empty_like(z)
        for i in range(self.n_y):
            y[:, i] = to_scipy(self.conditional_marginal(i, x)).ppf(z[:, i])
        return y


class GaussianCopulaModel(ConditionalOutputModel):
    """Conditional model assembled from callables.

    Parameters
    ----------
    n_y : int
    marginal : callable
        ``marginal(i, x) -> Marginal`` with parameters broadcast over the
        leading shape of `x`.
    correlation : array_like or callable, optional
        Constant copula correlation, or ``correlation(x)`` returning
        ``x.shape[:-1] + (n_y, n_y)``.  Defaults to identity.
    n_x : int, optional
    """

    def __init__(self, n_y, marginal, correlation=None, n_x=None):
        self.n_y = int(n_y)
        self.n_x = n_x
        self._marginal = marginal
        if correlation is None:
            correlation = np.eye(self.n_y)
        if callable(correlation):
            self._correlation = correlation
        else:
            r = np.asarray(correlation, dtype=np.float64)
            if r.shape != (self.n_y, self.n_y):
                raise ShapeError(f"correlation has shape {r.shape}, expected ({n_y}, {n_y})")
            r = check_correlation(r)
            r.setflags(write=False)
            self.constant_correlation = r

    def conditional_marginal(self, i, x):
        return self._marginal(i, np.asarray(x, dtype=np.float64))

    def copula_correlation(self, x):
        if self.constant_correlation is not None:
            return super().copula_correlation(x)
        return np.asarray(self._correlation(np.asarray(x, dtype=np.float64)), dtype=np.float64)


def _values(a, n_y, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim not in (1, 2) or a.shape[-1] != n_y:
        raise ShapeError(f"{name} must have trailing dimension {n_y}, got {a.shape}")
    return a


def _check_z(z, n_y):
    z = _values(z, n_y, "z")
    if not np.all((z > 0.0) & (z < 1.0)):
        raise DomainError("z components must lie strictly inside (0, 1)")
    return z


def z_from_y(model, x, y):
    """Conditional probability integral transform ``z_i = F_{Y_i|X}(y_i)``.

    The result is clamped to ``[1e-15, 1 - 1e-15]``.

    Raises
    ------
    DomainError
        If some ``y_i`` lies outside the conditional support at `x`.
    """
    y = _values(y, model.n_y, "y")
    z = np.empty(np.broadcast_shapes(y.shape, np.shape(x)[:-1] + (model.n_y,)))
    for i in range(model.n_y):
        m = model.conditional_marginal(i, x)
        if not np.all(m.in_interior(y[..., i])):
            raise DomainError(f"output {i} lies outside its conditional support")
        z[..., i] = m.cdf(y[..., i])
    return clamp_probability(z)


def y_from_z(model, x, z):
    """Inverse of :func:`z_from_y`: componentwise conditional quantiles."""
    z = _check_z(z, model.n_y)
    y = np.empty(np.broadcast_shapes(z.shape, np.shape(x)[:-1] + (model.n_y,)))
    for i in range(model.n_y):
        y[..., i] = model.conditional_marginal(i, x).ppf(z[..., i])
    return y


def w_from_z(z):
    """Normal scores ``w_i = Phi^{-1}(z_i)``."""
    z = np.asarray(z, dtype=np.float64)
    return std_normal_inv_cdf(z)


def _x_batched(x):
    return np.ndim(x) == 2


def _batched_factor_op(model, x, v, solve):
    r = model.copula_correlation(x)
    op = kernels.batch_chol_solve if solve else kernels.batch_chol_matvec
    try:
        out, jit = op(r, np.broadcast_to(v, (r.shape[0], model.n_y)))
    except DecompositionError as exc:
        idx = exc.index
        where = f" at x={np.asarray(x)[idx].tolist()}" if idx is not None else ""
        raise DecompositionError(f"copula correlation factorization failed{where}: {exc}",
                                 pivot=exc.pivot, index=idx) from None
    hit = int(np.count_nonzero(jit))
    if hit:
        warnings.warn(f"jitter added to {hit} copula correlation matrices (max {jit.max():.3g})",
                      JitterWarning, stacklevel=3)
    return out


def _single_factor(model, x):
    try:
        return model.correlation_factor(x)
    except DecompositionError as exc:
        raise DecompositionError(
            f"copula correlation factorization failed at x={np.asarray(x).tolist()}: {exc}",
            pivot=exc.pivot) from None


def uz_from_w(model, x, w):
    """Whiten normal scores: ``u_z = chol(R(x))^{-1} w`` by forward substitution."""
    w = _values(w, model.n_y, "w")
    if model.constant_correlation is not None or not _x_batched(x):
        return _single_factor(model, x).solve(w)
    return _batched_factor_op(model, x, w, solve=True)


def z_from_uz(model, x, u_z):
    """Inverse whitening: ``z = Phi(chol(R(x)) u_z)``, clamped."""
    u = _values(u_z, model.n_y, "u_z")
    if not np.all(np.isfinite(u)):
        raise DomainError("u_z must be finite")
    if model.constant_correlation is not None or not _x_batched(x):
        w = _single_factor(model, x).matvec(u)
    else:
        w = _batched_factor_op(model, x, u, solve=False)
    return clamp_probability(kernels.ndtr(w))


def gaussian_copula_density(r, z):
    """Density of the Gaussian copula with correlation `r` at `z`.

    ``c(z) = |R|^{-1/2} exp(-(w^T (R^{-1} - I) w) / 2)`` with
    ``w = Phi^{-1}(z)``, evaluated through the Cholesky factor of `r`.
    """
    r = check_correlation(r)
    z = _check_z(z, r.shape[0])
    L = cholesky(r)
    w = kernels.ndtri(z)
    a = L.solve(w)
    quad = np.sum(a * a, axis=-1) - np.sum(w * w, axis=-1)
    logdet = 2.0 * np.sum(np.log(np.diag(L.matrix)))
    out = np.exp(-0.5 * logdet - 0.5 * quad)
    return float(out) if np.ndim(out) == 0 else out


def estimate_sigma_w(model, x, n, seed, sampler=None):
    """Sample correlation of the normal scores ``W`` at a fixed `x`.

    Parameters
    ----------
    model : ConditionalOutputModel
    x : array_like, shape (n_x,)
    n : int
        Number of draws, at least 1000.
    seed : int
    sampler : callable, optional
        ``sampler(x, n, rng) -> (n, n_y)`` draws of ``Y | X = x`` from an
        external source.  If omitted, draws come from the model's own
        Gaussian copula via the inverse chain.

    Returns
    -------
    ndarray, shape (n_y, n_y)
    """
    if n < 1000:
        raise ValueError("estimate_sigma_w needs n >= 1000")
    x = np.asarray(x, dtype=np.float64)
    if sampler is None:
        u = kernels.counter_normals(seed, 0, 0, n, model.n_y)
        y = y_from_z(model, x, z_from_uz(model, x, u))
    else:
        y = np.asarray(sampler(x, n, np.random.default_rng(seed)), dtype=np.float64)
    w = kernels.ndtri(z_from_y(model, x, y))
    return sample_correlation(w)


def kendall_tau_matrix(samples):
    """Pairwise Kendall's tau-b of the columns of ``(n, d)`` samples."""
    x = np.asarray(samples, dtype=np.float64)
    d = x.shape[1]
    tau = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            t = stats.kendalltau(x[:, i], x[:, j]).statistic
            tau[i, j] = tau[j, i] = 0.0 if math.isnan(t) else t
    return tau
