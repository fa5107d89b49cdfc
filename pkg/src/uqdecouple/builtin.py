"""Analytic test models that ship with the package.

These are our own constructions for verification and demos; each comes
with a default input model so it can be run without any data files.

``linear-gaussian``
    ``X ~ N(0, 1)``, ``Y | X ~ N(slope X + intercept, sigma^2)``.  With the
    defaults ``Y ~ N(1, 9.25)`` exactly.
``bivariate-copula``
    Two outputs whose conditional law does not depend on X: fixed
    marginals joined by a Gaussian copula with correlation ``rho``.
``heteroscedastic``
    ``Y1 | X ~ N(slope X, (0.1 + |X|)^2)``,
    ``Y2 | X ~ Lognormal(X / 2, 0.1 + |X| / 2)``, copula correlation
    ``rho_max tanh(X)``, so both spread and dependence move with X.
"""
import numpy as np

from .errors import ConfigError
from .inputs import InputModel
from .model import ConditionalOutputModel
from .numerics import Marginal, check_correlation


class LinearGaussianModel(ConditionalOutputModel):
    n_y = 1
    n_x = 1

    def __init__(self, slope=3.0, intercept=1.0, sigma=0.5):
        self.slope = float(slope)
        self.intercept = float(intercept)
        self.sigma = float(sigma)
        Marginal.normal(0.0, self.sigma)
        self.constant_correlation = np.ones((1, 1))

    def conditional_marginal(self, i, x):
        x = np.asarray(x, dtype=np.float64)
        return Marginal.normal(self.slope * x[..., 0] + self.intercept, self.sigma)

    def sample_conditional(self, x, rng, n=None):
        x = np.asarray(x, dtype=np.float64)
        mean = self.slope * x[..., 0] + self.intercept
        size = (n,) if x.ndim == 1 else mean.shape
        return rng.normal(mean, self.sigma, size=size)[:, None]

    def output_moments(self, input_mean=0.0, input_var=1.0):
        """Exact mean and variance of Y when X ~ N(input_mean, input_var)."""
        return (self.slope * input_mean + self.intercept,
                self.slope ** 2 * input_var + self.sigma ** 2)


class BivariateCopulaModel(ConditionalOutputModel):
    n_y = 2
    n_x = 1

    def __init__(self, rho=0.6, marginals=None):
        if marginals is None:
            marginals = (Marginal.normal(0.0, 1.0), Marginal.normal(0.0, 1.0))
        self.marginals = tuple(marginals)
        if len(self.marginals) != 2:
            raise ValueError("bivariate-copula needs exactly two marginals")
        self.rho = float(rho)
        r = check_correlation([[1.0, self.rho], [self.rho, 1.0]])
        r.setflags(write=False)
        self.constant_correlation = r

    def conditional_marginal(self, i, x):
        return self.marginals[i]


class HeteroscedasticModel(ConditionalOutputModel):
    n_y = 2
    n_x = 1

    def __init__(self, slope=2.0, rho_max=0.8):
        self.slope = float(slope)
        self.rho_max = float(rho_max)
        if not abs(self.rho_max) < 1.0:
            raise ValueError("rho_max must satisfy |rho_max| < 1")

    def conditional_marginal(self, i, x):
        x = np.asarray(x, dtype=np.float64)[..., 0]
        if i == 0:
            return Marginal.normal(self.slope * x, 0.1 + np.abs(x))
        return Marginal.lognormal(0.5 * x, 0.1 + 0.5 * np.abs(x))

    def copula_correlation(self, x):
        x = np.asarray(x, dtype=np.float64)[..., 0]
        r = np.empty(x.shape + (2, 2))
        r[..., 0, 0] = r[..., 1, 1] = 1.0
        r[..., 0, 1] = r[..., 1, 0] = self.rho_max * np.tanh(x)
        return r


def _default_inputs():
    return InputModel([Marginal.normal(0.0, 1.0)])


BUILTINS = {
    "linear-gaussian": (LinearGaussianModel, {"slope", "intercept", "sigma"}),
    "bivariate-copula": (BivariateCopulaModel, {"rho", "marginals"}),
    "heteroscedastic": (HeteroscedasticModel, {"slope", "rho_max"}),
}


def make_builtin(name, params=None):
    """Instantiate a built-in model by name.

    Returns
    -------
    model : ConditionalOutputModel
    default_inputs : InputModel
    """
    params = dict(params or {})
    try:
        cls, allowed = BUILTINS[name]
    except KeyError:
        raise ConfigError(f"unknown built-in model {name!r}; choose from {sorted(BUILTINS)}",
                          "model.name") from None
    extra = set(params) - allowed
    if extra:
        raise ConfigError(f"unknown parameters {sorted(extra)} for {name}", "model.params")
    if "marginals" in params:
        params["marginals"] = [Marginal.from_dict(m) for m in params["marginals"]]
    return cls(**params), _default_inputs()
