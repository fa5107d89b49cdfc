"""Command-line front end: ``uq <analysis> --config problem.json``.

Each subcommand runs one analysis and writes ``samples.csv`` and
``report.json`` into the output directory.

Exit codes: 0 success, 2 invalid config or data, 3 numerical failure,
4 I/O error.
"""
import argparse
import json
import os
import sys
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__, kernels
from .builtin import make_builtin
from .config import ANALYSES, ConfigError, load_training_data, parse_config
from .errors import InfeasibleCorrelationError, IngestionError, ParameterError, UQError
from .gp import GpPredictor, SquaredExponential, as_conditional_output_model
from .inputs import InputModel
from .numerics import Marginal
from .propagation import (
    CompositeMap,
    joint_cdf_estimate,
    mc_propagate,
    rare_event_prob,
    sobol_indices,
    validate,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


@dataclass
class RunReport:
    config: dict
    analysis: str
    results: dict
    warnings: list
    duration_s: float
    artifacts: dict
    seed: int
    n: int
    version: str = __version__
    backend: str = field(default_factory=lambda: kernels.BACKEND)

    def to_dict(self):
        return {
            "version": self.version,
            "backend": self.backend,
            "analysis": self.analysis,
            "seed": self.seed,
            "n": self.n,
            "config": self.config,
            "results": self.results,
            "warnings": self.warnings,
            "duration_s": self.duration_s,
            "artifacts": self.artifacts,
        }


class _Stage:
    """Tags exceptions escaping a block with the name of the stage."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not hasattr(exc, "uq_stage"):
            exc.uq_stage = getattr(exc, "stage", None) or self.name
        return False


def build_input_model(cfg):
    """InputModel from the ``inputs`` section, or None for a fixed x."""
    if cfg.inputs is None or cfg.inputs.marginals is None:
        return None
    marginals = [Marginal.from_dict(m) for m in cfg.inputs.marginals]
    corr = cfg.inputs.correlation
    if corr is None:
        return InputModel(marginals)
    if cfg.inputs.correlation_space == "physical":
        try:
            return InputModel.from_physical_correlation(marginals, corr)
        except (InfeasibleCorrelationError, ParameterError) as exc:
            raise ConfigError(str(exc), "inputs.correlation") from None
    return InputModel(marginals, corr)


def build_composite_map(cfg):
    """Assemble the composite map described by a validated config."""
    m = cfg.model
    if m.kind == "analytic-test":
        model, default_inputs = make_builtin(m.name, m.params)
    else:
        X, Y = load_training_data(m.training_data)
        kern = SquaredExponential(m.kernel["signal_variance"], m.kernel["lengthscales"])
        if kern.n_x != X.shape[1]:
            raise ConfigError(f"{kern.n_x} lengthscales but the training data has "
                              f"{X.shape[1]} input columns", "model.kernel.lengthscales")
        if len(m.coregionalization) != Y.shape[1]:
            raise ConfigError(f"matrix is {len(m.coregionalization)}x"
                              f"{len(m.coregionalization)} but the training data has "
                              f"{Y.shape[1]} output columns", "model.coregionalization")
        gp = GpPredictor(X, Y, kern, m.coregionalization, m.noise_variance)
        model, default_inputs = as_conditional_output_model(gp), None

    if cfg.inputs is not None and cfg.inputs.fixed is not None:
        fixed = np.asarray(cfg.inputs.fixed)
        if fixed.shape[0] != model.n_x:
            raise ConfigError(f"model has {model.n_x} inputs, got {fixed.shape[0]}",
                              "inputs.fixed")
        return CompositeMap(model, fixed_x=fixed)
    inputs = build_input_model(cfg) or default_inputs
    if inputs.n_x != model.n_x:
        raise ConfigError(f"model has {model.n_x} inputs, got {inputs.n_x} marginals",
                          "inputs.marginals")
    return CompositeMap(model, inputs)


def write_samples(path, samples):
    """CSV with header ``Y1..Yn`` and shortest round-trip float text."""
    samples = np.asarray(samples, dtype=np.float64)
    cols = [list(map(repr, samples[:, j].tolist())) for j in range(samples.shape[1])]
    header = ",".join(f"Y{j + 1}" for j in range(samples.shape[1]))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(header + "\n")
        if len(cols) == 1:
            fh.write("\n".join(cols[0]))
        else:
            fh.write("\n".join(",".join(row) for row in zip(*cols)))
        fh.write("\n")


def _check_length(values, n_y, path):
    if len(values) != n_y:
        raise ConfigError(f"expected {n_y} entries (one per output), got {len(values)}", path)


def _run_analysis(cmap, a, workers):
    if a.kind == "propagate":
        res = mc_propagate(cmap, a.n, a.seed, workers)
        return {"summary": res.summary()}, res.samples
    if a.kind == "jointcdf":
        _check_length(a.y_star, cmap.n_y, "analysis.y_star")
        est, res = joint_cdf_estimate(cmap, a.y_star, a.n, a.seed, workers)
        return {"y_star": a.y_star, "probability": est.as_dict(),
                "summary": res.summary()}, res.samples
    if a.kind == "rare":
        _check_length(a.thresholds, cmap.n_y, "analysis.thresholds")
        est, res = rare_event_prob(cmap, a.thresholds, a.direction, a.n, a.seed, workers)
        return {"thresholds": a.thresholds, "direction": a.direction,
                "probability": est.as_dict(), "summary": res.summary()}, res.samples
    if a.kind == "sobol":
        sob = sobol_indices(cmap, a.n, a.seed, workers, a.n_boot)
        return {"sobol": sob.as_dict()}, sob.base_outputs
    val, res = validate(cmap, a.n, a.seed, workers, a.alpha, a.tau_tol)
    return {"validation": val.as_dict(), "summary": res.summary()}, res.samples


def run(config, workers=None):
    """Execute the analysis in `config` and write its artifacts.

    Parameters
    ----------
    config : ProblemConfig
    workers : int, optional
        Worker threads for sampling; defaults to the CPU count.  Results do
        not depend on it.

    Returns
    -------
    RunReport
    """
    workers = workers or os.cpu_count() or 1
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        with _Stage("model construction"):
            cmap = build_composite_map(config)
        with _Stage(f"{config.analysis.kind} analysis"):
            results, samples = _run_analysis(cmap, config.analysis, workers)
    messages = []
    for w in caught:
        text = f"{w.category.__name__}: {w.message}"
        if text not in messages:
            messages.append(text)

    with _Stage("writing output"):
        os.makedirs(config.output, exist_ok=True)
        samples_path = os.path.join(config.output, "samples.csv")
        report_path = os.path.join(config.output, "report.json")
        write_samples(samples_path, samples)
        report = RunReport(
            config=config.to_dict(),
            analysis=config.analysis.kind,
            results=results,
            warnings=messages,
            duration_s=time.perf_counter() - t0,
            artifacts={"samples": samples_path, "report": report_path},
            seed=config.analysis.seed,
            n=config.analysis.n,
        )
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")
    return report


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    parser = argparse.ArgumentParser(
        prog="uq",
        description="Propagate input and model uncertainty through a surrogate.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="analysis", required=True)
    helps = {
        "propagate": "Monte Carlo sample of the outputs with summary statistics",
        "jointcdf": "joint CDF of the outputs at analysis.y_star",
        "rare": "threshold exceedance probability",
        "sobol": "Sobol indices over input and model uncertainty",
        "validate": "compare against direct nested sampling",
    }
    for name in ANALYSES:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, help="problem definition (JSON)")
        p.add_argument("--n", type=_positive_int, help="override analysis.n")
        p.add_argument("--seed", type=int, help="override analysis.seed")
        p.add_argument("--workers", type=_positive_int, help="worker threads (default: CPU count)")
        p.add_argument("--out", help="output directory (overrides 'output')")
    return parser


def _headline(report):
    r = report.results
    if "probability" in r:
        p = r["probability"]
        return f"p = {p['p']:.6g} (se {p['se']:.3g}, n {p['n']}, hits {p['hits']})"
    if "validation" in r:
        v = r["validation"]
        ks = ", ".join(f"{s:.4f}" for s in v["ks_statistic"])
        return (f"{'PASS' if v['passed'] else 'FAIL'}: KS statistics [{ks}], "
                f"max |tau diff| {v['kendall_max_diff']:.4f}")
    if "sobol" in r:
        s = r["sobol"]
        parts = [f"{g} {vals}" for g, vals in
                 ((g, ", ".join(f"{x:.4f}" for x in v)) for g, v in s["group_first"].items())]
        return "first-order group indices: " + "; ".join(parts)
    s = r["summary"]
    return ("mean " + ", ".join(f"{x:.6g}" for x in s["mean"]) + "; variance "
            + ", ".join(f"{x:.6g}" for x in s["variance"]))


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, {"kind": args.analysis, "n": args.n,
                                         "seed": args.seed, "output": args.out})
        report = run(cfg, args.workers)
    except (ConfigError, IngestionError) as exc:
        print(f"uq: invalid problem definition: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"uq: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UQError, ValueError, ArithmeticError) as exc:
        stage = getattr(exc, "uq_stage", "run")
        print(f"uq: {stage} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for w in report.warnings:
        print(f"uq: warning: {w}", file=sys.stderr)
    print(f"{report.analysis}: {_headline(report)}")
    print(f"wrote {report.artifacts['samples']} and {report.artifacts['report']}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
