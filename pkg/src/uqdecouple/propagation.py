"""Propagation of input and model uncertainty through the composite map.

With ``u = (u_x, u_z)`` a vector of independent standard normals, the
composite map is

    x = t_x(u_x),   z = Phi(chol(R(x)) u_z),   y = F_{Y|X=x}^{-1}(z),

and ``Y = G(U)``.  Every estimator here samples ``U`` and pushes it through
``G``.  Random numbers come from a counter-based stream keyed on
``(seed, stream, sample index)``, so results do not depend on how the index
range is split across workers.
"""
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernels
from .errors import RareEventWarning, ShapeError, StageError, UQError, ZeroVarianceError
from .model import kendall_tau_matrix, y_from_z, z_from_uz

CHUNK = 1 << 15
QUANTILE_LEVELS = (0.01, 0.05, 0.5, 0.95, 0.99)
MIN_HITS = 100

# stream ids for the counter-based generator
STREAM_PROPAGATE = 0
STREAM_SOBOL_A = 1
STREAM_SOBOL_B = 2


class CompositeMap:
    """The map ``Y = G(U)`` from independent standard normals to outputs.

    Parameters
    ----------
    output_model : ConditionalOutputModel
    input_model : InputModel, optional
        Law of the random inputs.  Mutually exclusive with `fixed_x`.
    fixed_x : array_like, optional
        Deterministic input; then ``U = U_Z`` only.
    """

    def __init__(self, output_model, input_model=None, fixed_x=None):
        if (input_model is None) == (fixed_x is None):
            raise ValueError("exactly one of input_model and fixed_x must be given")
        n_x = output_model.n_x
        if fixed_x is not None:
            fixed_x = np.array(fixed_x, dtype=np.float64).reshape(-1)
            fixed_x.setflags(write=False)
            if n_x is not None and fixed_x.shape[0] != n_x:
                raise ShapeError(f"fixed_x has {fixed_x.shape[0]} entries, model expects {n_x}")
        elif n_x is not None and input_model.n_x != n_x:
            raise ShapeError(f"input model has {input_model.n_x} inputs, model expects {n_x}")
        self.output_model = output_model
        self.input_model = input_model
        self.fixed_x = fixed_x

    @property
    def n_y(self):
        return self.output_model.n_y

    @property
    def n_ux(self):
        return 0 if self.input_model is None else self.input_model.n_x

    @property
    def dim(self):
        return self.n_ux + self.n_y

    def labels(self):
        return ([f"u_x{j + 1}" for j in range(self.n_ux)]
                + [f"u_z{i + 1}" for i in range(self.n_y)])

    def __call__(self, u):
        return g_compose(self, u)


def g_compose(cmap, u):
    """Evaluate ``Y = G(U)`` for one vector ``(dim,)`` or a batch ``(n, dim)``.

    Raises
    ------
    StageError
        Naming the stage (``t_x``, ``z_from_uz``, ``y_from_z`` or
        ``direct``) that failed.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim not in (1, 2) or u.shape[-1] != cmap.dim:
        raise ShapeError(f"u must have trailing dimension {cmap.dim}, got {u.shape}")
    k = cmap.n_ux
    u_z = u[..., k:]
    stage = "t_x"
    try:
        if cmap.input_model is None:
            x = cmap.fixed_x
        else:
            x = cmap.input_model.t_x(u[..., :k])
        model = cmap.output_model
        direct = getattr(model, "direct_map", None)
        if direct is not None:
            stage = "direct"
            return direct(x, u_z)
        stage = "z_from_uz"
        z = z_from_uz(model, x, u_z)
        stage = "y_from_z"
        return y_from_z(model, x, z)
    except UQError as exc:
        raise StageError(f"{stage} failed: {exc}", stage) from exc


def _chunks(n):
    return [(lo, min(CHUNK, n - lo)) for lo in range(0, n, CHUNK)]


def _map_chunks(fn, n, workers):
    spans = _chunks(n)
    if workers is None or workers <= 1 or len(spans) == 1:
        parts = [fn(lo, cnt) for lo, cnt in spans]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda s: fn(*s), spans))
    return np.concatenate(parts) if parts else np.empty((0,))


def _locate_failure(cmap, u, lo, exc):
    for i in range(u.shape[0]):
        try:
            g_compose(cmap, u[i])
        except StageError as inner:
            raise StageError(f"sample {lo + i}: {inner}", inner.stage, lo + i) from inner
    raise exc


def _evaluate(cmap, u, lo=0):
    try:
        return g_compose(cmap, u)
    except StageError as exc:
        _locate_failure(cmap, u, lo, exc)


def sample_u(cmap, n, seed, stream=STREAM_PROPAGATE, start=0):
    """The standard normal inputs used for samples ``start .. start+n-1``."""
    return kernels.counter_normals(seed, stream, start, n, cmap.dim)


@dataclass
class PropagationResult:
    """Monte Carlo sample of Y with summary statistics.

    Quantiles use linear interpolation between order statistics
    (Hyndman-Fan type 7, numpy's default).
    """

    samples: np.ndarray
    seed: int
    n: int
    mean: np.ndarray = field(init=False)
    std: np.ndarray = field(init=False)
    quantiles: dict = field(init=False)
    pearson: np.ndarray = field(init=False)
    kendall: np.ndarray = field(init=False)

    def __post_init__(self):
        s = self.samples
        self.mean = s.mean(axis=0)
        self.std = s.std(axis=0, ddof=1)
        q = np.quantile(s, QUANTILE_LEVELS, axis=0, method="linear")
        self.quantiles = {lvl: q[i] for i, lvl in enumerate(QUANTILE_LEVELS)}
        if s.shape[1] > 1:
            self.pearson = np.corrcoef(s, rowvar=False)
        else:
            self.pearson = np.ones((1, 1))
        self.kendall = kendall_tau_matrix(s)

    def summary(self):
        """JSON-friendly summary statistics."""
        return {
            "n": self.n,
            "seed": self.seed,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "variance": (self.std ** 2).tolist(),
            "quantiles": {f"{lvl:g}": v.tolist() for lvl, v in self.quantiles.items()},
            "pearson": self.pearson.tolist(),
            "kendall": self.kendall.tolist(),
        }


def mc_propagate(cmap, n, seed, workers=1):
    """Push `n` standard normal draws through the composite map.

    Deterministic in ``(cmap, n, seed)`` and independent of `workers`.
    """
    if n < 100:
        raise ValueError("mc_propagate needs n >= 100")

    def run(lo, cnt):
        return _evaluate(cmap, sample_u(cmap, cnt, seed, STREAM_PROPAGATE, lo), lo)

    y = _map_chunks(run, n, workers)
    return PropagationResult(np.ascontiguousarray(y), seed, n)


@dataclass
class ProbabilityEstimate:
    """Monte Carlo probability with its binomial standard error."""

    p: float
    se: float
    n: int
    hits: int
    warnings: list = field(default_factory=list)

    def as_dict(self):
        return {"p": self.p, "se": self.se, "n": self.n, "hits": self.hits,
                "warnings": list(self.warnings)}


def _estimate(mask):
    n = mask.shape[0]
    hits = int(np.count_nonzero(mask))
    p = hits / n
    return ProbabilityEstimate(p, math.sqrt(p * (1.0 - p) / n), n, hits)


def joint_cdf_from_samples(samples, y_star):
    """Empirical ``P(Y_i <= y*_i for all i)`` on a given sample set."""
    y_star = np.asarray(y_star, dtype=np.float64)
    return _estimate(np.all(samples <= y_star, axis=1))


def joint_cdf_estimate(cmap, y_star, n, seed, workers=1):
    """Estimate the joint CDF of Y at `y_star`."""
    if n < 1000:
        raise ValueError("joint_cdf_estimate needs n >= 1000")
    y_star = np.asarray(y_star, dtype=np.float64)
    if y_star.shape != (cmap.n_y,):
        raise ShapeError(f"y_star must have {cmap.n_y} entries")
    res = mc_propagate(cmap, n, seed, workers)
    return joint_cdf_from_samples(res.samples, y_star), res


DIRECTIONS = ("all_above", "all_below", "any_above")


def exceedance_mask(samples, thresholds, direction):
    t = np.asarray(thresholds, dtype=np.float64)
    if direction == "all_above":
        return np.all(samples > t, axis=1)
    if direction == "all_below":
        return np.all(samples < t, axis=1)
    if direction == "any_above":
        return np.any(samples > t, axis=1)
    raise ValueError(f"direction must be one of {DIRECTIONS}")


def rare_event_prob(cmap, thresholds, direction, n, seed, workers=1):
    """Plain Monte Carlo estimate of a joint threshold-exceedance probability.

    Emits :class:`RareEventWarning` (and records it on the result) when
    fewer than 100 samples hit the event, since the estimate and its
    standard error are then unreliable.
    """
    if n < 1000:
        raise ValueError("rare_event_prob needs n >= 1000")
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.shape != (cmap.n_y,):
        raise ShapeError(f"thresholds must have {cmap.n_y} entries")
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    res = mc_propagate(cmap, n, seed, workers)
    est = _estimate(exceedance_mask(res.samples, thresholds, direction))
    if est.hits < MIN_HITS:
        msg = (f"only {est.hits} of {n} samples hit the event; plain Monte Carlo is "
               f"unreliable below {MIN_HITS} hits")
        est.warnings.append(msg)
        warnings.warn(msg, RareEventWarning, stacklevel=2)
    return est, res


@dataclass
class SobolResult:
    """First-order and total Sobol indices, one column per output.

    ``first`` and ``total`` have shape ``(dim, n_y)`` with rows ordered as
    ``labels``.  Group indices are keyed ``"input"`` (all of ``u_x``) and
    ``"model"`` (all of ``u_z``).  ``*_se`` hold bootstrap standard errors.
    """

    labels: list
    first: np.ndarray
    total: np.ndarray
    first_se: np.ndarray
    total_se: np.ndarray
    group_first: dict
    group_total: dict
    group_first_se: dict
    group_total_se: dict
    n: int
    seed: int
    base_outputs: np.ndarray = field(repr=False)

    def as_dict(self):
        return {
            "labels": self.labels,
            "first": self.first.tolist(),
            "total": self.total.tolist(),
            "first_se": self.first_se.tolist(),
            "total_se": self.total_se.tolist(),
            "group_first": {k: v.tolist() for k, v in self.group_first.items()},
            "group_total": {k: v.tolist() for k, v in self.group_total.items()},
            "group_first_se": {k: v.tolist() for k, v in self.group_first_se.items()},
            "group_total_se": {k: v.tolist() for k, v in self.group_total_se.items()},
            "n": self.n,
            "seed": self.seed,
        }


def _indices(fA, fB, fAB, var):
    # first order: f_B (f_AB - f_A), exact zero for a factor with no effect;
    # total: Jansen's squared difference
    first = np.mean(fB * (fAB - fA), axis=0) / var
    total = 0.5 * np.mean((fA - fAB) ** 2, axis=0) / var
    return first, total


def _pick_freeze(fA, fB, fABs, n_boot, rng):
    var = np.var(np.concatenate([fA, fB]), axis=0)
    if np.any(var < 1e-12):
        bad = int(np.argmax(var < 1e-12))
        raise ZeroVarianceError(f"output {bad} has variance {var[bad]:.3g}; "
                                "Sobol indices are undefined")
    pairs = [_indices(fA, fB, f, var) for f in fABs]
    first = np.array([p[0] for p in pairs])
    total = np.array([p[1] for p in pairs])
    n = fA.shape[0]
    boots_f = np.empty((n_boot,) + first.shape)
    boots_t = np.empty((n_boot,) + total.shape)
    for b in range(n_boot):
        idx = rng.integers(0, n, n)
        a, bb = fA[idx], fB[idx]
        v = np.var(np.concatenate([a, bb]), axis=0)
        for k, f in enumerate(fABs):
            boots_f[b, k], boots_t[b, k] = _indices(a, bb, f[idx], v)
    return first, total, boots_f.std(axis=0, ddof=1), boots_t.std(axis=0, ddof=1)


def sobol_indices(cmap, n, seed, workers=1, n_boot=100):
    """Sobol indices of each output with respect to the components of U.

    Uses the Saltelli pick-freeze design, the ``f_B (f_AB - f_A)`` estimator
    for first-order indices and Jansen's estimator for total indices:
    ``n (dim + 2)`` map evaluations for the per-component indices and two
    more matrices (``n`` evaluations each) for the input/model groups.
    """
    if n < 10_000:
        raise ValueError("sobol_indices needs n >= 10000 base samples")
    d, k = cmap.dim, cmap.n_ux

    def evaluate(swap):
        def run(lo, cnt):
            a = sample_u(cmap, cnt, seed, STREAM_SOBOL_A, lo)
            if swap is not None:
                b = sample_u(cmap, cnt, seed, STREAM_SOBOL_B, lo)
                a[:, swap] = b[:, swap]
            return _evaluate(cmap, a, lo)
        return _map_chunks(run, n, workers)

    fA = evaluate(None)
    fB = evaluate(np.arange(d))
    fABs = [evaluate(np.array([i])) for i in range(d)]
    rng = np.random.default_rng(seed)
    first, total, first_se, total_se = _pick_freeze(fA, fB, fABs, n_boot, rng)

    groups = {"input": np.arange(k), "model": np.arange(k, d)}
    groups = {g: cols for g, cols in groups.items() if cols.size}
    names = list(groups)
    gf, gt, gfs, gts = _pick_freeze(fA, fB, [evaluate(groups[g]) for g in names], n_boot, rng)
    return SobolResult(
        labels=cmap.labels(),
        first=first, total=total, first_se=first_se, total_se=total_se,
        group_first=dict(zip(names, gf)), group_total=dict(zip(names, gt)),
        group_first_se=dict(zip(names, gfs)), group_total_se=dict(zip(names, gts)),
        n=n, seed=seed, base_outputs=fA,
    )


def oracle_nested_mc(cmap, n, seed):
    """Sample Y by drawing X from its law and then Y | X directly.

    Independent of the decoupled chain: it uses numpy's generator, the
    models' direct conditional samplers and no counter-based stream.
    """
    if n < 1000:
        raise ValueError("oracle_nested_mc needs n >= 1000")
    rng = np.random.default_rng(seed)
    model = cmap.output_model
    if cmap.input_model is None:
        return model.sample_conditional(cmap.fixed_x, rng, n)
    x = cmap.input_model.sample(n, rng)
    return model.sample_conditional(x, rng)


@dataclass
class ValidationResult:
    """Comparison of decoupled-space Monte Carlo against the nested oracle."""

    ks_statistic: np.ndarray
    ks_pvalue: np.ndarray
    ks_pass: np.ndarray
    kendall_mc: np.ndarray
    kendall_oracle: np.ndarray
    kendall_max_diff: float
    kendall_pass: bool
    alpha: float
    tau_tol: float

    @property
    def passed(self):
        return bool(np.all(self.ks_pass)) and self.kendall_pass

    def as_dict(self):
        return {
            "ks_statistic": self.ks_statistic.tolist(),
            "ks_pvalue": self.ks_pvalue.tolist(),
            "ks_pass": self.ks_pass.tolist(),
            "kendall_mc": self.kendall_mc.tolist(),
            "kendall_oracle": self.kendall_oracle.tolist(),
            "kendall_max_diff": self.kendall_max_diff,
            "kendall_pass": self.kendall_pass,
            "alpha": self.alpha,
            "tau_tol": self.tau_tol,
            "passed": self.passed,
        }


def validate(cmap, n, seed, workers=1, alpha=0.01, tau_tol=0.03, oracle_seed=None):
    """Two-sample KS per output and Kendall's tau comparison between
    :func:`mc_propagate` and :func:`oracle_nested_mc`.

    Returns the validation result and the propagation result.
    """
    res = mc_propagate(cmap, n, seed, workers)
    ref = oracle_nested_mc(cmap, n, seed + 1 if oracle_seed is None else oracle_seed)
    ks = [stats.ks_2samp(res.samples[:, i], ref[:, i]) for i in range(cmap.n_y)]
    stat = np.array([k.statistic for k in ks])
    pval = np.array([k.pvalue for k in ks])
    tau_ref = kendall_tau_matrix(ref)
    diff = float(np.max(np.abs(res.kendall - tau_ref)))
    out = ValidationResult(stat, pval, pval >= alpha, res.kendall, tau_ref, diff,
                           diff <= tau_tol, alpha, tau_tol)
    return out, res
