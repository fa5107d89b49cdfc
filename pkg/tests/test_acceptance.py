"""Acceptance suite: ten end-to-end checks, each at its stated tolerance and
runtime budget.  Every check prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` or
``python tests/test_acceptance.py``.
"""
import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from conftest import phi_oracle
from uqdecouple import kernels
from uqdecouple.builtin import BUILTINS, BivariateCopulaModel, make_builtin
from uqdecouple.errors import RareEventWarning
from uqdecouple.gp import (
    SquaredExponential,
    as_conditional_output_model,
    build_gp,
    predict,
    uy_from_y_gp,
    y_from_u_gp,
)
from uqdecouple.inputs import InputModel
from uqdecouple.model import uz_from_w, w_from_z, y_from_z, z_from_uz, z_from_y
from uqdecouple.numerics import Marginal
from uqdecouple.propagation import (
    CompositeMap,
    joint_cdf_estimate,
    mc_propagate,
    rare_event_prob,
    sobol_indices,
    validate,
)

X_FIXED = (-2.0, -0.5, 0.0, 0.8, 2.5)
LINEAR_MEAN, LINEAR_VAR = 1.0, 9.25  # 3 X + 1 + 0.5 e with X, e ~ N(0, 1)


class Check:
    """Collects sub-results of one criterion and prints a single line."""

    def __init__(self, number, title, budget_s):
        self.number, self.title, self.budget = number, title, budget_s
        self.failures, self.notes = [], []
        self.t0 = time.perf_counter()

    def expect(self, ok, what):
        if not ok:
            self.failures.append(what)

    def note(self, text):
        self.notes.append(text)

    def finish(self, capsys):
        elapsed = time.perf_counter() - self.t0
        if self.budget is not None:
            self.expect(elapsed < self.budget, f"runtime {elapsed:.1f}s over {self.budget}s")
        status = "PASS" if not self.failures else "FAIL"
        budget = f" < {self.budget}s" if self.budget is not None else ""
        detail = "; ".join(self.failures or self.notes)
        with capsys.disabled():
            print(f"\n[{status}] {self.number:2d} {self.title} "
                  f"({elapsed:.1f}s{budget}, {kernels.BACKEND}): {detail}")
        assert not self.failures, detail


def builtin_maps():
    return {name: CompositeMap(*make_builtin(name)) for name in sorted(BUILTINS)}


def small_gp(seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, (15, 2))
    Y = np.column_stack([np.sin(X.sum(1)), np.cos(X[:, 0]) + X[:, 1]])
    B = np.array([[1.0, 0.6], [0.6, 2.0]])
    return build_gp(X, Y, SquaredExponential(1.3, [0.9, 1.1]), B, noise)


def test_01_pit_uniformity(capsys):
    c = Check(1, "PIT uniformity", 10)
    worst = 1.0
    for name in sorted(BUILTINS):
        model, _ = make_builtin(name)
        for k, x in enumerate(X_FIXED):
            xv = np.array([x])
            y = model.sample_conditional(xv, np.random.default_rng(100 + k), 100_000)
            z = z_from_y(model, xv, y)
            for i in range(model.n_y):
                p = stats.kstest(z[:, i], "uniform").pvalue
                worst = min(worst, p)
                c.expect(p > 0.01, f"{name} x={x} Z{i + 1} KS p={p:.4f}")
    c.note(f"3 models x 5 x values, min KS p={worst:.3f} > 0.01")
    c.finish(capsys)


def test_02_whitening(capsys):
    c = Check(2, "whitening", 10)
    worst = 0.0
    for rho in (0.0, 0.3, 0.6, 0.9):
        model = BivariateCopulaModel(rho, [Marginal.lognormal(0.0, 0.5), Marginal.weibull(1.5, 2.0)])
        x = np.array([0.0])
        y = model.sample_conditional(x, np.random.default_rng(int(rho * 10)), 100_000)
        u = uz_from_w(model, x, w_from_z(z_from_y(model, x, y)))
        err = float(np.max(np.abs(np.cov(u, rowvar=False) - np.eye(2))))
        worst = max(worst, err)
        c.expect(err < 0.02, f"rho={rho} max |cov - I| = {err:.4f}")
    c.note(f"max |cov(U_Z) - I| = {worst:.4f} < 0.02 over rho in 0, .3, .6, .9")
    c.finish(capsys)


def test_03_pushforward_equivalence(capsys):
    c = Check(3, "pushforward equivalence", 60)
    notes = []
    for name, cmap in builtin_maps().items():
        val, _ = validate(cmap, 100_000, seed=31, alpha=0.01, tau_tol=0.03)
        for i, p in enumerate(val.ks_pvalue):
            c.expect(p > 0.01, f"{name} Y{i + 1} KS p={p:.4f}")
        c.expect(val.kendall_max_diff <= 0.03, f"{name} tau diff {val.kendall_max_diff:.4f}")
        notes.append(f"{name} min p={val.ks_pvalue.min():.3f} dtau={val.kendall_max_diff:.4f}")
    c.note(", ".join(notes))
    c.finish(capsys)


def test_04_linear_gaussian_moments(capsys):
    c = Check(4, "linear-Gaussian moments", 30)
    res = mc_propagate(CompositeMap(*make_builtin("linear-gaussian")), 1_000_000, seed=7)
    mean, var = float(res.mean[0]), float(res.std[0] ** 2)
    c.expect(abs(mean - LINEAR_MEAN) < 0.01, f"mean {mean:.5f}")
    c.expect(abs(var - LINEAR_VAR) < 0.05, f"variance {var:.5f}")
    c.note(f"mean {mean:.5f} (1 +- 0.01), variance {var:.5f} (9.25 +- 0.05)")
    c.finish(capsys)


def test_05_orthant_probability(capsys):
    c = Check(5, "bivariate orthant", 30)
    model = BivariateCopulaModel(0.6)
    cmap = CompositeMap(model, fixed_x=[0.0])
    median = y_from_z(model, np.array([0.0]), np.array([0.5, 0.5]))
    exact = 0.25 + math.asin(0.6) / (2 * math.pi)
    c.expect(abs(exact - 0.35242) < 1e-5, f"closed form {exact}")
    est, _ = joint_cdf_estimate(cmap, median, 1_000_000, seed=5)
    c.expect(abs(est.p - exact) <= 3 * est.se, f"p={est.p:.5f} vs {exact:.5f}, se={est.se:.2e}")
    c.note(f"p={est.p:.5f} vs {exact:.5f}, |diff|/se={abs(est.p - exact) / est.se:.2f} <= 3")
    c.finish(capsys)


def test_06_gp_path_equivalence(capsys):
    c = Check(6, "GP path equivalence", 5)
    gp = small_gp(noise=1e-4)
    model = as_conditional_output_model(gp)
    rng = np.random.default_rng(6)
    x = rng.uniform(-3, 3, (1000, 2))
    u = rng.standard_normal((1000, 2))
    diff = float(np.max(np.abs(y_from_z(model, x, z_from_uz(model, x, u)) - y_from_u_gp(gp, x, u))))
    c.expect(diff <= 1e-8, f"generic vs direct {diff:.2e}")

    exact = small_gp(noise=0.0)
    mu, _ = predict(exact, exact.train_inputs)
    interp = float(np.max(np.abs(mu - exact.train_outputs)))
    c.expect(interp <= 1e-6, f"interpolation {interp:.2e}")

    far = exact.train_inputs.max(0) + 10 * exact.kernel.lengthscales + 5
    mu, S = predict(exact, far)
    prior = exact.kernel.signal_variance * exact.coregionalization
    rev = max(float(np.max(np.abs(mu))), float(np.max(np.abs(S - prior))))
    c.expect(rev <= 1e-6, f"prior reversion {rev:.2e}")
    c.note(f"paths {diff:.1e}, interpolation {interp:.1e}, reversion {rev:.1e}")
    c.finish(capsys)


def test_07_sobol_indices(capsys):
    c = Check(7, "Sobol indices", 60)
    s_x, s_z = 9.0 / 9.25, 0.25 / 9.25
    c.expect(abs(s_x - 0.97297) < 1e-5 and abs(s_z - 0.02703) < 1e-5, "analytic values")
    res = sobol_indices(CompositeMap(*make_builtin("linear-gaussian")), 100_000, seed=7)
    got = {"S_UX": res.first[0, 0], "S_UZ": res.first[1, 0],
           "group input": res.group_first["input"][0], "group model": res.group_first["model"][0]}
    want = {"S_UX": s_x, "S_UZ": s_z, "group input": s_x, "group model": s_z}
    for k in got:
        c.expect(abs(got[k] - want[k]) < 0.02, f"{k} {got[k]:.5f} vs {want[k]:.5f}")
    c.note(", ".join(f"{k} {v:.5f}" for k, v in got.items()))
    c.finish(capsys)


def test_08_tail_probability(capsys):
    c = Check(8, "tail probability", 30)
    cmap = CompositeMap(*make_builtin("linear-gaussian"))
    sd = math.sqrt(LINEAR_VAR)
    exact = float(phi_oracle(-2.0))
    c.expect(abs(exact - 0.02275) < 1e-5, f"reference {exact}")
    est, _ = rare_event_prob(cmap, [LINEAR_MEAN + 2 * sd], "all_above", 1_000_000, seed=8)
    c.expect(abs(est.p - exact) <= 3 * est.se, f"p={est.p:.5f} vs {exact:.5f}, se={est.se:.1e}")
    with pytest.warns(RareEventWarning) as caught:
        far, _ = rare_event_prob(cmap, [LINEAR_MEAN + 5 * sd], "all_above", 100_000, seed=8)
    c.expect(len(caught) >= 1 and far.warnings, "no warning at mu + 5 sigma")
    c.note(f"p={est.p:.5f} vs {exact:.5f} within {abs(est.p - exact) / est.se:.2f} SE; "
           f"{far.hits} hits at mu+5sigma warned")
    c.finish(capsys)


CLI_CASES = [
    ("propagate", {}),
    ("jointcdf", {"y_star": [0.0, 1.0]}),
    ("rare", {"thresholds": [1.0, 1.5], "direction": "any_above"}),
    ("sobol", {"n_boot": 20}),
    ("validate", {}),
]


def test_09_cli_determinism(capsys, tmp_path):
    c = Check(9, "CLI determinism", None)
    for kind, extra in CLI_CASES:
        n = 20_000 if kind == "sobol" else 50_000
        cfg = {"model": {"kind": "analytic-test", "name": "heteroscedastic"},
               "analysis": {"kind": kind, "n": n, "seed": 2024, **extra}}
        path = tmp_path / f"{kind}.json"
        path.write_text(json.dumps(cfg))
        blobs = []
        for i, workers in enumerate(("1", "4", "1")):
            out = tmp_path / f"{kind}-{i}"
            proc = subprocess.run(
                [sys.executable, "-m", "uqdecouple.cli", kind, "--config", str(path),
                 "--workers", workers, "--out", str(out)],
                capture_output=True, text=True)
            c.expect(proc.returncode == 0, f"{kind} exit {proc.returncode}: {proc.stderr.strip()}")
            blobs.append((out / "samples.csv").read_bytes() if proc.returncode == 0 else b"")
        c.expect(blobs[0] == blobs[1] == blobs[2] != b"", f"{kind} samples differ")
    c.note("5 subcommands x 3 runs (workers 1, 4, 1), samples.csv byte-identical")
    c.finish(capsys)


def test_10_round_trips(capsys):
    c = Check(10, "round trips", 5)
    rng = np.random.default_rng(10)
    errs = {}

    inputs = InputModel([Marginal.lognormal(0.2, 0.5), Marginal.weibull(1.5, 2.0),
                         Marginal.uniform(-1.0, 3.0)],
                        [[1.0, 0.4, -0.2], [0.4, 1.0, 0.3], [-0.2, 0.3, 1.0]])
    u = rng.standard_normal((1000, 3))
    errs["t_x_inv(t_x(u))"] = np.max(np.abs(inputs.t_x_inv(inputs.t_x(u)) - u))

    model, _ = make_builtin("heteroscedastic")
    x = rng.standard_normal((1000, 1))
    y = model.sample_conditional(x, rng)
    errs["y_from_z(z_from_y(y))"] = np.max(np.abs(y_from_z(model, x, z_from_y(model, x, y)) - y))
    u = rng.standard_normal((1000, 2))
    errs["uz_from_w(w_from_z(z_from_uz(u)))"] = np.max(
        np.abs(uz_from_w(model, x, w_from_z(z_from_uz(model, x, u))) - u))

    gp = small_gp(noise=1e-4)
    xg = rng.uniform(-3, 3, (1000, 2))
    errs["uy_from_y_gp(y_from_u_gp(u))"] = np.max(
        np.abs(uy_from_y_gp(gp, xg, y_from_u_gp(gp, xg, u)) - u))

    for k, e in errs.items():
        c.expect(e < 1e-8, f"{k} {e:.2e}")
    c.note(", ".join(f"{k} {e:.1e}" for k, e in errs.items()))
    c.finish(capsys)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
