"""Problem-definition files and training data ingestion.

A problem is a single JSON document::

    {
      "inputs":   {"marginals": [{"family": "normal", "mean": 0, "std": 1}],
                   "correlation": [[1.0]], "correlation_space": "normal"},
      "model":    {"kind": "analytic-test", "name": "linear-gaussian", "params": {}},
      "analysis": {"kind": "propagate", "n": 100000, "seed": 42},
      "output":   "results"
    }

Unknown keys are rejected everywhere.  Relative paths are resolved against
the directory holding the config file, and the resolved config (absolute
paths, defaults filled in) is what gets echoed into the run report.
"""
import csv
import difflib
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, IngestionError, ParameterError, UQError
from .numerics import PARAM_NAMES, Family, Marginal, check_correlation

ANALYSES = ("propagate", "jointcdf", "rare", "sobol", "validate")
MIN_N = {"propagate": 100, "jointcdf": 1000, "rare": 1000, "sobol": 10_000, "validate": 1000}
DIRECTIONS = ("all_above", "all_below", "any_above")


@dataclass
class InputsConfig:
    marginals: list = field(default_factory=list)
    correlation: list = None
    correlation_space: str = "normal"
    fixed: list = None


@dataclass
class ModelConfig:
    kind: str
    name: str = None
    params: dict = None
    training_data: str = None
    kernel: dict = None
    coregionalization: list = None
    noise_variance: float = None


@dataclass
class AnalysisConfig:
    kind: str
    n: int
    seed: int
    y_star: list = None
    thresholds: list = None
    direction: str = None
    n_boot: int = None
    alpha: float = None
    tau_tol: float = None


@dataclass
class ProblemConfig:
    inputs: InputsConfig
    model: ModelConfig
    analysis: AnalysisConfig
    output: str

    def to_dict(self):
        """Resolved config as a JSON-ready dict, without unset optional fields."""
        def prune(d):
            return {k: v for k, v in d.items() if v is not None}
        out = {
            "model": prune(asdict(self.model)),
            "analysis": prune(asdict(self.analysis)),
            "output": self.output,
        }
        if self.inputs is not None:
            out["inputs"] = prune(asdict(self.inputs))
        return out


def _keys(d, allowed, required, path):
    if not isinstance(d, dict):
        raise ConfigError("expected an object", path)
    for k in d:
        if k not in allowed:
            close = difflib.get_close_matches(k, allowed, n=1)
            hint = f"; did you mean {close[0]!r}?" if close else ""
            where = f"{path}.{k}" if path else k
            raise ConfigError(f"unknown key {k!r}{hint}", where)
    for k in required:
        if k not in d:
            raise ConfigError("missing required field", f"{path}.{k}" if path else k)


def _number(v, path, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError("expected a finite number", path)
    if positive and not v > 0:
        raise ConfigError("must be > 0", path)
    if nonneg and not v >= 0:
        raise ConfigError("must be >= 0", path)
    return float(v)


def _integer(v, path, minimum=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError("expected an integer", path)
    if minimum is not None and v < minimum:
        raise ConfigError(f"must be >= {minimum}", path)
    return v


def _vector(v, path, length=None):
    if not isinstance(v, list) or not v:
        raise ConfigError("expected a non-empty list of numbers", path)
    out = [_number(x, f"{path}[{i}]") for i, x in enumerate(v)]
    if length is not None and len(out) != length:
        raise ConfigError(f"expected {length} entries, got {len(out)}", path)
    return out


def _matrix(v, path, size=None):
    if not isinstance(v, list) or not v:
        raise ConfigError("expected a square matrix (list of rows)", path)
    rows = [_vector(r, f"{path}[{i}]") for i, r in enumerate(v)]
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ConfigError("matrix must be square", path)
    if size is not None and n != size:
        raise ConfigError(f"expected a {size}x{size} matrix, got {n}x{n}", path)
    return rows


def _marginal(d, path):
    _keys(d, ["family", "mean", "std", "log_mean", "log_std", "lower", "upper",
              "shape", "scale"], ["family"], path)
    try:
        fam = Family(d["family"])
    except ValueError:
        raise ConfigError(f"unknown family {d['family']!r}; choose from "
                          f"{[f.value for f in Family]}", f"{path}.family") from None
    names = PARAM_NAMES[fam]
    _keys(d, ["family", *names], ["family", *names], path)
    entry = {"family": fam.value}
    for k in names:
        entry[k] = _number(d[k], f"{path}.{k}")
    try:
        Marginal.from_dict(entry)
    except ParameterError as exc:
        raise ConfigError(str(exc), path) from None
    return entry


def _inputs(d, path="inputs"):
    _keys(d, ["marginals", "correlation", "correlation_space", "fixed"], [], path)
    if ("fixed" in d) == ("marginals" in d):
        raise ConfigError("give exactly one of 'marginals' or 'fixed'", path)
    if "fixed" in d:
        for k in ("correlation", "correlation_space"):
            if k in d:
                raise ConfigError("not allowed together with 'fixed'", f"{path}.{k}")
        return InputsConfig(marginals=None, correlation_space=None,
                            fixed=_vector(d["fixed"], f"{path}.fixed"))
    ms = d["marginals"]
    if not isinstance(ms, list) or not ms:
        raise ConfigError("expected a non-empty list", f"{path}.marginals")
    marginals = [_marginal(m, f"{path}.marginals[{i}]") for i, m in enumerate(ms)]
    space = d.get("correlation_space", "normal")
    if space not in ("normal", "physical"):
        raise ConfigError("must be 'normal' or 'physical'", f"{path}.correlation_space")
    corr = None
    if "correlation" in d:
        corr = _matrix(d["correlation"], f"{path}.correlation", len(marginals))
        try:
            if space == "normal":
                check_correlation(corr)
            else:
                a = np.asarray(corr)
                if np.any(np.abs(a - np.eye(len(a))) >= 1.0) or np.any(a != a.T):
                    raise ParameterError("physical correlations must be symmetric with "
                                         "|off-diagonal| < 1 and unit diagonal")
        except ParameterError as exc:
            raise ConfigError(str(exc), f"{path}.correlation") from None
    return InputsConfig(marginals=marginals, correlation=corr, correlation_space=space)


def _model(d, base, path="model"):
    if not isinstance(d, dict) or "kind" not in d:
        _keys(d, ["kind"], ["kind"], path)
    kind = d["kind"]
    if kind == "analytic-test":
        _keys(d, ["kind", "name", "params"], ["kind", "name"], path)
        if not isinstance(d["name"], str):
            raise ConfigError("expected a string", f"{path}.name")
        params = d.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("expected an object", f"{path}.params")
        from .builtin import make_builtin
        try:
            make_builtin(d["name"], params)
        except ConfigError:
            raise
        except (UQError, ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"invalid parameters: {exc}", f"{path}.params") from None
        return ModelConfig(kind=kind, name=d["name"], params=params)
    if kind == "gp":
        _keys(d, ["kind", "training_data", "kernel", "coregionalization", "noise_variance"],
              ["kind", "training_data", "kernel", "coregionalization"], path)
        td = d["training_data"]
        if not isinstance(td, str) or not td:
            raise ConfigError("expected a file path", f"{path}.training_data")
        td = os.path.abspath(os.path.join(base, td))
        kern = d["kernel"]
        _keys(kern, ["family", "signal_variance", "lengthscales"],
              ["signal_variance", "lengthscales"], f"{path}.kernel")
        family = kern.get("family", "squared_exponential")
        if family != "squared_exponential":
            raise ConfigError("only 'squared_exponential' is supported", f"{path}.kernel.family")
        lengthscales = _vector(kern["lengthscales"], f"{path}.kernel.lengthscales")
        for i, v in enumerate(lengthscales):
            _number(v, f"{path}.kernel.lengthscales[{i}]", positive=True)
        kernel = {
            "family": family,
            "signal_variance": _number(kern["signal_variance"], f"{path}.kernel.signal_variance",
                                       positive=True),
            "lengthscales": lengthscales,
        }
        B = _matrix(d["coregionalization"], f"{path}.coregionalization")
        a = np.asarray(B)
        if np.any(a != a.T) or np.any(np.linalg.eigvalsh(a) <= 0):
            raise ConfigError("must be symmetric positive definite", f"{path}.coregionalization")
        noise = _number(d.get("noise_variance", 0.0), f"{path}.noise_variance", nonneg=True)
        return ModelConfig(kind=kind, training_data=td, kernel=kernel, coregionalization=B,
                           noise_variance=noise)
    raise ConfigError(f"unknown model kind {kind!r}; choose 'analytic-test' or 'gp'",
                      f"{path}.kind")


def _analysis(d, path="analysis"):
    _keys(d, ["kind", "n", "seed", "y_star", "thresholds", "direction", "n_boot", "alpha",
              "tau_tol"], ["kind", "n", "seed"], path)
    kind = d["kind"]
    if kind not in ANALYSES:
        raise ConfigError(f"unknown analysis {kind!r}; choose from {list(ANALYSES)}",
                          f"{path}.kind")
    n = _integer(d["n"], f"{path}.n", MIN_N[kind])
    seed = _integer(d["seed"], f"{path}.seed", 0)
    out = AnalysisConfig(kind=kind, n=n, seed=seed)
    allowed = {"propagate": set(), "jointcdf": {"y_star"}, "rare": {"thresholds", "direction"},
               "sobol": {"n_boot"}, "validate": {"alpha", "tau_tol"}}[kind]
    for k in ("y_star", "thresholds", "direction", "n_boot", "alpha", "tau_tol"):
        if k in d and k not in allowed:
            raise ConfigError(f"not used by the {kind} analysis", f"{path}.{k}")
    if kind == "jointcdf":
        if "y_star" not in d:
            raise ConfigError("missing required field", f"{path}.y_star")
        out.y_star = _vector(d["y_star"], f"{path}.y_star")
    elif kind == "rare":
        for k in ("thresholds", "direction"):
            if k not in d:
                raise ConfigError("missing required field", f"{path}.{k}")
        out.thresholds = _vector(d["thresholds"], f"{path}.thresholds")
        if d["direction"] not in DIRECTIONS:
            raise ConfigError(f"must be one of {list(DIRECTIONS)}", f"{path}.direction")
        out.direction = d["direction"]
    elif kind == "sobol":
        out.n_boot = _integer(d.get("n_boot", 100), f"{path}.n_boot", 2)
    elif kind == "validate":
        out.alpha = _number(d.get("alpha", 0.01), f"{path}.alpha", positive=True)
        out.tau_tol = _number(d.get("tau_tol", 0.03), f"{path}.tau_tol", positive=True)
    return out


def config_from_dict(raw, base_dir="."):
    """Validate a raw config mapping; relative paths resolve against `base_dir`."""
    _keys(raw, ["inputs", "model", "analysis", "output"], ["model", "analysis"], "")
    model = _model(raw["model"], base_dir)
    if "inputs" in raw:
        inputs = _inputs(raw["inputs"])
    elif model.kind == "gp":
        raise ConfigError("missing required field (a GP model has no default inputs)", "inputs")
    else:
        inputs = None
    analysis = _analysis(raw["analysis"])
    out = raw.get("output", "uq-out")
    if not isinstance(out, str) or not out:
        raise ConfigError("expected a directory path", "output")
    return ProblemConfig(inputs=inputs, model=model, analysis=analysis,
                         output=os.path.abspath(os.path.join(base_dir, out)))


def parse_config(path, overrides=None):
    """Read and validate a problem definition.

    Parameters
    ----------
    path : str
    overrides : dict, optional
        Values merged into the ``analysis`` section before validation
        (``kind``, ``n``, ``seed``) plus ``output``.  A ``kind`` that
        contradicts the file is an error.

    Raises
    ------
    OSError
        If the file cannot be read.
    ConfigError
        On any schema violation, naming the offending field path.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    overrides = dict(overrides or {})
    out = overrides.pop("output", None)
    if overrides:
        section = raw.setdefault("analysis", {})
        if not isinstance(section, dict):
            raise ConfigError("expected an object", "analysis")
        kind = overrides.pop("kind", None)
        if kind is not None:
            if section.get("kind", kind) != kind:
                raise ConfigError(f"config requests {section['kind']!r} but the subcommand "
                                  f"is {kind!r}", "analysis.kind")
            section["kind"] = kind
        for k, v in overrides.items():
            if v is not None:
                section[k] = v
    base = os.path.dirname(os.path.abspath(path))
    cfg = config_from_dict(raw, base)
    if out is not None:
        cfg.output = os.path.abspath(out)
    return cfg


def load_training_data(path):
    """Read GP training data from CSV with header ``x1..xk, y1..ym``.

    Row numbers in error messages count file lines, so the header is row 1
    and the first data row is row 2.

    Returns
    -------
    inputs : ndarray, shape (rows, k)
    outputs : ndarray, shape (rows, m)
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise IngestionError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    xs = sorted((h for h in header if h.startswith("x")), key=lambda h: h)
    ys = sorted((h for h in header if h.startswith("y")), key=lambda h: h)

    def indexed(names, prefix):
        idx = []
        for h in names:
            tail = h[len(prefix):]
            if not tail.isdigit():
                raise IngestionError(f"{path}: unexpected column {h!r}")
            idx.append(int(tail))
        if sorted(idx) != list(range(1, len(idx) + 1)):
            raise IngestionError(f"{path}: {prefix} columns must be {prefix}1..{prefix}{len(idx)}")
        return sorted(idx)

    unknown = [h for h in header if not (h.startswith("x") or h.startswith("y"))]
    if unknown:
        raise IngestionError(f"{path}: unexpected column {unknown[0]!r}")
    if len(set(header)) != len(header):
        raise IngestionError(f"{path}: duplicate column names")
    if not xs:
        raise IngestionError(f"{path}: header has no input columns x1..")
    if not ys:
        raise IngestionError(f"{path}: header has no output columns y1..")
    kx, ky = indexed(xs, "x"), indexed(ys, "y")
    col = {h: j for j, h in enumerate(header)}
    if len(rows) < 2:
        raise IngestionError(f"{path}: no data rows")
    X = np.empty((len(rows) - 1, len(kx)))
    Y = np.empty((len(rows) - 1, len(ky)))
    for r, row in enumerate(rows[1:]):
        line = r + 2
        if len(row) != len(header):
            raise IngestionError(f"{path}: row {line} has {len(row)} cells, expected {len(header)}")
        for name, target, k in [(f"x{i}", X, i - 1) for i in kx] + [(f"y{i}", Y, i - 1) for i in ky]:
            cell = row[col[name]].strip()
            try:
                v = float(cell)
            except ValueError:
                raise IngestionError(f"{path}: row {line}, column {name}: "
                                     f"{cell!r} is not a number") from None
            if not math.isfinite(v):
                raise IngestionError(f"{path}: row {line}, column {name}: non-finite value")
            target[r, k] = v
    return X, Y
