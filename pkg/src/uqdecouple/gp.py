"""Multi-output Gaussian process predictor (intrinsic coregionalization).

Outputs share one input kernel and are coupled through a coregionalization
matrix ``B``: ``cov(f_i(x), f_j(x')) = B_ij k(x, x')``.  Hyperparameters are
supplied by the user; nothing here fits them.

At a query point the predictive law is ``N(mu(x), Sigma(x))`` and the
Cholesky factor ``C(x)`` of ``Sigma(x)`` maps independent standard normals
to outputs, ``y = mu(x) + C(x) u``.  :func:`as_conditional_output_model`
exposes the same law through the generic marginal-plus-copula interface.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.spatial.distance import cdist

from . import kernels
from .errors import DecompositionError, ParameterError, ShapeError
from .model import ConditionalOutputModel
from .numerics import Marginal, check_symmetric, cholesky

_CHUNK = 2048


@dataclass(frozen=True, eq=False)
class SquaredExponential:
    """Squared-exponential kernel with one lengthscale per input dimension."""

    signal_variance: float
    lengthscales: np.ndarray

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=np.float64))
        if ls.ndim != 1 or not np.all(ls > 0) or not np.all(np.isfinite(ls)):
            raise ParameterError("lengthscales must be positive and finite")
        if not (self.signal_variance > 0 and np.isfinite(self.signal_variance)):
            raise ParameterError("signal_variance must be positive and finite")
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))

    @property
    def n_x(self):
        return self.lengthscales.shape[0]

    def __call__(self, a, b):
        a = np.atleast_2d(a) / self.lengthscales
        b = np.atleast_2d(b) / self.lengthscales
        return self.signal_variance * np.exp(-0.5 * cdist(a, b, "sqeuclidean"))


def _stack_jitter(s, scale):
    # jitter needed per matrix, zero where plain Cholesky succeeds; the
    # posterior can collapse to ~0 at training inputs, so the schedule is
    # scaled by the prior covariance rather than by the matrix itself
    jit = np.zeros(s.shape[0])
    try:
        np.linalg.cholesky(s)
        return jit
    except np.linalg.LinAlgError:
        pass
    for i in range(s.shape[0]):
        _, jit[i] = kernels.cholesky_jittered(s[i], scale=scale)
    return jit


class GpPredictor:
    """Multi-output GP posterior with a cached factor of the training covariance.

    Parameters
    ----------
    train_inputs : array_like, shape (m, n_x)
    train_outputs : array_like, shape (m, n_y)
    kernel : SquaredExponential
    coregionalization : array_like, shape (n_y, n_y)
        Symmetric positive definite output covariance ``B``.
    noise_variance : float
        Shared observation noise added to the training covariance.
    """

    def __init__(self, train_inputs, train_outputs, kernel, coregionalization,
                 noise_variance=0.0):
        X = np.array(train_inputs, dtype=np.float64)
        Y = np.array(train_outputs, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0] or X.shape[0] < 1:
            raise ShapeError(f"training inputs {X.shape} and outputs {Y.shape} do not match")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ParameterError("training data must be finite")
        if kernel.n_x != X.shape[1]:
            raise ShapeError(f"kernel has {kernel.n_x} lengthscales but inputs have "
                             f"{X.shape[1]} columns")
        B = check_symmetric(coregionalization, "coregionalization")
        if B.shape[0] != Y.shape[1]:
            raise ShapeError(f"coregionalization is {B.shape} but there are {Y.shape[1]} outputs")
        try:
            cholesky(B, "none")
        except DecompositionError as exc:
            raise ParameterError(f"coregionalization is not positive definite ({exc})") from None
        noise_variance = float(noise_variance)
        if not noise_variance >= 0.0:
            raise ParameterError("noise_variance must be >= 0")

        m, n_y = Y.shape
        K = np.kron(B, kernel(X, X)) + noise_variance * np.eye(m * n_y)
        try:
            self.factor = cholesky(K)
        except DecompositionError as exc:
            raise DecompositionError(f"training covariance is singular: {exc}",
                                     pivot=exc.pivot) from None
        # output-major stacking matches the kron(B, K) block layout
        alpha = cho_solve((self.factor.matrix, True), Y.T.reshape(-1))
        self._alpha = alpha.reshape(n_y, m).T
        for arr in (X, Y, B):
            arr.setflags(write=False)
        self.train_inputs = X
        self.train_outputs = Y
        self.kernel = kernel
        self.coregionalization = B
        self.noise_variance = noise_variance
        self._prior_scale = kernel.signal_variance * float(np.trace(B)) / n_y

    @property
    def n_x(self):
        return self.train_inputs.shape[1]

    @property
    def n_y(self):
        return self.train_outputs.shape[1]

    def _raw(self, xq):
        # xq: (n, n_x) -> mu (n, n_y), S (n, n_y, n_y) before jitter
        B = self.coregionalization
        m, n_y = self.train_outputs.shape
        k = self.kernel(xq, self.train_inputs)
        mu = (k @ self._alpha) @ B
        n = xq.shape[0]
        kt = np.einsum("ij,st->jtsi", B, k).reshape(n_y * m, n * n_y)
        v = solve_triangular(self.factor.matrix, kt, lower=True, check_finite=False)
        v = v.reshape(n_y * m, n, n_y)
        S = self.kernel.signal_variance * B - np.einsum("asi,asj->sij", v, v)
        return mu, 0.5 * (S + np.swapaxes(S, -1, -2))

    def predict(self, x):
        """Predictive mean and covariance.

        Parameters
        ----------
        x : array_like, shape (n_x,) or (n, n_x)

        Returns
        -------
        mu : ndarray, shape (n_y,) or (n, n_y)
        sigma : ndarray, shape (n_y, n_y) or (n, n_y, n_y)
            Symmetrized, with diagonal jitter added where needed so that
            every matrix is positive definite.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xq = x[None, :] if single else x
        if xq.ndim != 2 or xq.shape[1] != self.n_x:
            raise ShapeError(f"x must have trailing dimension {self.n_x}, got {x.shape}")
        mus, sigmas = [], []
        for lo in range(0, xq.shape[0], _CHUNK):
            mu, S = self._raw(xq[lo:lo + _CHUNK])
            jit = _stack_jitter(S, self._prior_scale)
            S += jit[:, None, None] * np.eye(self.n_y)
            mus.append(mu)
            sigmas.append(S)
        mu, S = np.concatenate(mus), np.concatenate(sigmas)
        return (mu[0], S[0]) if single else (mu, S)


def build_gp(train_inputs, train_outputs, kernel, coregionalization, noise_variance=0.0):
    return GpPredictor(train_inputs, train_outputs, kernel, coregionalization, noise_variance)


def predict(gp, x):
    return gp.predict(x)


def y_from_u_gp(gp, x, u_y):
    """Outputs from independent standard normals: ``mu(x) + C(x) u_y``."""
    u = np.asarray(u_y, dtype=np.float64)
    mu, S = gp.predict(x)
    if S.ndim == 2:
        return mu + cholesky(S).matvec(u)
    out, _ = kernels.batch_chol_matvec(S, np.broadcast_to(u, mu.shape))
    return mu + out


def uy_from_y_gp(gp, x, y):
    """Whitened residuals ``C(x)^{-1} (y - mu(x))``."""
    y = np.asarray(y, dtype=np.float64)
    mu, S = gp.predict(x)
    if S.ndim == 2:
        return cholesky(S).solve(y - mu)
    out, _ = kernels.batch_chol_solve(S, np.broadcast_to(y - mu, mu.shape))
    return out


class GpConditionalModel(ConditionalOutputModel):
    """A GP seen as marginals ``Normal(mu_i, sqrt(Sigma_ii))`` plus the
    Gaussian copula with the correlation matrix of ``Sigma(x)``."""

    def __init__(self, gp):
        self.gp = gp
        self.n_y = gp.n_y
        self.n_x = gp.n_x
        self._last = (None, None)

    def _predict(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64)
        key = (x.shape, x.tobytes())
        last_key, last = self._last
        if last_key == key:
            return last
        mu, S = self.gp.predict(x)
        sd = np.sqrt(np.diagonal(S, axis1=-2, axis2=-1))
        out = (mu, S, sd)
        self._last = (key, out)
        return out

    def conditional_marginal(self, i, x):
        mu, _, sd = self._predict(x)
        return Marginal.normal(mu[..., i], sd[..., i])

    def copula_correlation(self, x):
        _, S, sd = self._predict(x)
        r = S / (sd[..., :, None] * sd[..., None, :])
        idx = np.arange(self.n_y)
        r[..., idx, idx] = 1.0
        return r

    def direct_map(self, x, u):
        """Gaussian shortcut ``mu(x) + C(x) u`` equivalent to the generic chain."""
        return y_from_u_gp(self.gp, x, u)

    def sample_conditional(self, x, rng, n=None):
        x = np.asarray(x, dtype=np.float64)
        mu, S, _ = self._predict(x)
        lam, vec = np.linalg.eigh(S)
        root = vec * np.sqrt(np.clip(lam, 0.0, None))[..., None, :]
        if x.ndim == 1:
            if n is None:
                raise ValueError("n is required for a single x")
            return mu + rng.standard_normal((n, self.n_y)) @ root.T
        g = rng.standard_normal(mu.shape)
        return mu + np.einsum("sij,sj->si", root, g)


def as_conditional_output_model(gp):
    return GpConditionalModel(gp)
