"""Joint law of the random inputs and its map to independent standard normals.

The inputs are described by their marginals plus a Gaussian copula whose
correlation matrix is given in standard normal space.  ``t_x`` maps
independent standard normals ``u_x`` to physical inputs,

    x_j = F_j^{-1}(Phi((L u_x)_j)),   L L^T = rho_z,

and ``t_x_inv`` undoes it.  Users who only know physical-space
correlations can convert them with :func:`nataf_match_correlation` or
:meth:`InputModel.from_physical_correlation`.
"""
import math

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.optimize import brentq

from . import kernels
from .errors import DomainError, InfeasibleCorrelationError, ParameterError, ShapeError
from .numerics import Marginal, check_correlation, cholesky, clamp_probability

_GH_ORDER = 32


class InputModel:
    """Marginals of X plus their normal-space correlation.

    Parameters
    ----------
    marginals : sequence of Marginal
        One scalar-parameter marginal per input.
    rho_z : array_like, optional
        Correlation matrix in standard normal space.  Defaults to identity
        (independent inputs).
    """

    def __init__(self, marginals, rho_z=None):
        marginals = tuple(marginals)
        if not marginals:
            raise ShapeError("an input model needs at least one marginal")
        for j, m in enumerate(marginals):
            if not isinstance(m, Marginal):
                raise ParameterError(f"marginal {j} is not a Marginal")
            if any(np.ndim(v) for v in m.params):
                raise ParameterError(f"marginal {j} must have scalar parameters")
        n = len(marginals)
        if rho_z is None:
            rho_z = np.eye(n)
        rho_z = np.asarray(rho_z, dtype=np.float64)
        if rho_z.shape != (n, n):
            raise ShapeError(f"rho_z has shape {rho_z.shape}, expected ({n}, {n})")
        rho_z = check_correlation(rho_z, "rho_z")
        rho_z.setflags(write=False)
        self.marginals = marginals
        self.rho_z = rho_z
        self.factor = cholesky(rho_z, "none")
        self._independent = bool(np.all(rho_z == np.eye(n)))

    @classmethod
    def from_physical_correlation(cls, marginals, corr):
        """Build a model whose *physical-space* correlation matrix is `corr`."""
        marginals = tuple(marginals)
        corr = np.asarray(corr, dtype=np.float64)
        n = len(marginals)
        if corr.shape != (n, n):
            raise ShapeError(f"correlation has shape {corr.shape}, expected ({n}, {n})")
        rho = np.eye(n)
        for i in range(n):
            for j in range(i + 1, n):
                rho[i, j] = rho[j, i] = nataf_match_correlation(
                    marginals[i], marginals[j], corr[i, j])
        return cls(marginals, rho)

    @property
    def n_x(self):
        return len(self.marginals)

    def __repr__(self):
        return f"InputModel({list(self.marginals)!r}, rho_z={self.rho_z.tolist()!r})"

    def _check_last(self, a, name):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim not in (1, 2) or a.shape[-1] != self.n_x:
            raise ShapeError(f"{name} must have trailing dimension {self.n_x}, got {a.shape}")
        return a

    def t_x(self, u_x):
        """Map independent standard normals to physical inputs.

        Accepts a single vector ``(n_x,)`` or a batch ``(n, n_x)``.
        """
        u = self._check_last(u_x, "u_x")
        if not np.all(np.isfinite(u)):
            raise DomainError("u_x must be finite")
        v = u if self._independent else self.factor.matvec(u)
        return _from_scores(self.marginals, v)

    def t_x_inv(self, x):
        """Map physical inputs back to independent standard normals."""
        x = self._check_last(x, "x")
        w = np.empty_like(x)
        for j, m in enumerate(self.marginals):
            xj = x[..., j]
            if not np.all(m.in_interior(xj)):
                raise DomainError(
                    f"input component {j} lies outside the interior of its "
                    f"{m.family.value} support {m.support}")
            # work with the smaller tail so both ends invert accurately
            lo = np.asarray(m.cdf(xj))
            hi = np.asarray(m.sf(xj))
            upper = lo > 0.5
            t = clamp_probability(np.where(upper, hi, lo))
            w[..., j] = np.where(upper, -kernels.ndtri(t), kernels.ndtri(t))
        return w if self._independent else self.factor.solve(w)

    def sample(self, n, rng):
        """Draw `n` inputs directly from the joint law using `rng`.

        This bypasses :meth:`t_x` (it uses numpy's own multivariate normal
        sampler) and serves as an independent reference.
        """
        w = rng.multivariate_normal(np.zeros(self.n_x), self.rho_z, size=n, method="eigh")
        return _from_scores(self.marginals, w)


def _from_scores(marginals, v):
    # x_j = F_j^{-1}(Phi(v_j)), taking the upper tail through the survival
    # function so that large positive scores keep full precision
    upper = v > 0.0
    t = clamp_probability(kernels.ndtr(-np.abs(v)))
    x = np.empty_like(v)
    for j, m in enumerate(marginals):
        tj, uj = t[..., j], upper[..., j]
        x[..., j] = np.where(uj, m.isf(tj), m.ppf(tj))
    return x


def _gh_rule(order=_GH_ORDER):
    nodes, weights = hermegauss(order)
    return nodes, weights / math.sqrt(2.0 * math.pi)


def _transformed(dist, w):
    return dist.ppf(clamp_probability(kernels.ndtr(w)))


def physical_correlation(dist_i, dist_j, rho_z, order=_GH_ORDER):
    """Correlation of ``(F_i^{-1}(Phi(W1)), F_j^{-1}(Phi(W2)))`` for standard
    normals with correlation `rho_z`, by tensor Gauss-Hermite quadrature."""
    t, wt = _gh_rule(order)
    gi = _transformed(dist_i, t)
    gj = _transformed(dist_j, t)
    mi, mj = wt @ gi, wt @ gj
    si = math.sqrt(wt @ (gi - mi) ** 2)
    sj = math.sqrt(wt @ (gj - mj) ** 2)
    s = math.sqrt(max(0.0, 1.0 - rho_z * rho_z))
    w2 = rho_z * t[:, None] + s * t[None, :]
    cross = (wt[:, None] * wt[None, :] * (gi[:, None] - mi) * (_transformed(dist_j, w2) - mj)).sum()
    return cross / (si * sj)


def nataf_match_correlation(dist_i, dist_j, target_rho, order=_GH_ORDER):
    """Normal-space correlation reproducing a physical-space correlation.

    Parameters
    ----------
    dist_i, dist_j : Marginal
    target_rho : float
        Desired correlation of the physical variables, ``|target_rho| < 1``.

    Returns
    -------
    float
        The normal-space correlation, found by root finding on
        :func:`physical_correlation`.

    Raises
    ------
    InfeasibleCorrelationError
        If the marginal pair cannot attain `target_rho` for any normal-space
        correlation in [-1, 1].
    """
    target_rho = float(target_rho)
    if not abs(target_rho) < 1.0:
        raise DomainError("target correlation must satisfy |rho| < 1")
    if target_rho == 0.0:
        return 0.0

    def f(r):
        return physical_correlation(dist_i, dist_j, r, order) - target_rho

    lo, hi = f(-1.0), f(1.0)
    if lo > 0.0 or hi < 0.0:
        raise InfeasibleCorrelationError(
            f"correlation {target_rho} is not attainable for {dist_i!r} and {dist_j!r}; "
            f"attainable range is [{lo + target_rho:.6f}, {hi + target_rho:.6f}]")
    return brentq(f, -1.0, 1.0, xtol=1e-13, rtol=4 * np.finfo(float).eps)
