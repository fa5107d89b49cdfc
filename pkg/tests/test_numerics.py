import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import phi_inv_oracle, phi_oracle, random_spd
from uqdecouple.errors import (
    DecompositionError,
    DegenerateDataError,
    DomainError,
    JitterWarning,
    ParameterError,
    ShapeError,
)
from uqdecouple.numerics import (
    Family,
    LowerTriangular,
    Marginal,
    check_correlation,
    cholesky,
    clamp_probability,
    marginal_cdf,
    marginal_pdf,
    marginal_quantile,
    sample_correlation,
    std_normal_cdf,
    std_normal_inv_cdf,
    tri_solve_lower,
)

Z975 = float(phi_inv_oracle(0.975))


class TestStdNormal:
    def test_oracle_value(self):
        # the oracle itself, against an independent mpmath route
        assert abs(Z975 - 1.959963984540054) < 1e-14
        assert abs(phi_oracle(1.5) - mpmath.ncdf(1.5)) < 1e-35

    def test_cdf_examples(self):
        assert std_normal_cdf(0.0) == 0.5
        assert abs(std_normal_cdf(1.959964) - float(phi_oracle(1.959964))) < 1e-15
        assert abs(std_normal_cdf(1.959964) - 0.975) < 1e-6

    def test_cdf_at_exact_quantile(self):
        assert abs(std_normal_cdf(Z975) - 0.975) < 1e-9

    @given(st.floats(-8.0, 8.0))
    @settings(max_examples=60, deadline=None)
    def test_cdf_accuracy(self, x):
        assert abs(std_normal_cdf(x) - float(phi_oracle(x))) <= 1e-12

    @given(st.floats(-30.0, 30.0))
    def test_cdf_symmetry(self, x):
        assert std_normal_cdf(-x) == pytest.approx(1.0 - std_normal_cdf(x), abs=1e-15)

    def test_cdf_monotone(self):
        x = np.linspace(-12, 12, 20001)
        assert np.all(np.diff(std_normal_cdf(x)) >= 0.0)

    def test_cdf_rejects_nonfinite(self):
        for bad in (np.nan, np.inf, -np.inf):
            with pytest.raises(DomainError):
                std_normal_cdf(bad)

    def test_inv_examples(self):
        assert std_normal_inv_cdf(0.5) == 0.0
        assert abs(std_normal_inv_cdf(0.975) - 1.959964) < 1e-6
        assert abs(std_normal_inv_cdf(0.975) - Z975) < 1e-14

    @given(st.floats(0.5, 1 - 1e-15))
    def test_inv_antisymmetry(self, q):
        p = 1.0 - q  # exact for q >= 0.5
        assert std_normal_inv_cdf(p) + std_normal_inv_cdf(q) == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("p", [1e-15, 1e-10, 0.02425, 0.1, 0.5, 0.8, 0.97575, 1 - 1e-10])
    def test_inv_against_bisection(self, p):
        ref = float(phi_inv_oracle(p))
        assert std_normal_inv_cdf(p) == pytest.approx(ref, rel=1e-13, abs=1e-14)

    @given(st.floats(1e-15, 1 - 1e-15))
    @settings(max_examples=200)
    def test_inv_against_mpmath(self, p):
        ref = float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1))
        assert std_normal_inv_cdf(p) == pytest.approx(ref, rel=1e-13, abs=1e-14)

    @given(st.floats(1e-15, 1 - 1e-15))
    def test_roundtrip_probability(self, p):
        assert abs(std_normal_cdf(std_normal_inv_cdf(p)) - p) <= 1e-9

    @given(st.floats(-7.9, 5.0))
    def test_roundtrip_quantile(self, x):
        # above ~5 the double nearest Phi(x) no longer pins x to 1e-9
        assert abs(std_normal_inv_cdf(std_normal_cdf(x)) - x) <= 1e-9

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, np.nan])
    def test_inv_domain(self, p):
        with pytest.raises(DomainError):
            std_normal_inv_cdf(p)

    def test_vectorized(self):
        p = np.array([0.1, 0.5, 0.9])
        out = std_normal_inv_cdf(p)
        assert out.shape == (3,)
        assert out[1] == 0.0

    def test_clamp(self):
        out = clamp_probability(np.array([0.0, 0.5, 1.0]))
        assert out[0] == 1e-15 and out[2] == 1 - 1e-15
        assert np.isfinite(std_normal_inv_cdf(out)).all()


class TestMarginal:
    def test_cdf_examples(self):
        assert marginal_cdf(Marginal.uniform(0, 1), 0.3) == pytest.approx(0.3, abs=1e-15)
        assert marginal_cdf(Marginal.normal(2, 1), 2.0) == 0.5
        assert marginal_cdf(Marginal.weibull(1, 2), 2.0) == pytest.approx(
            1 - math.exp(-1), abs=1e-15)

    def test_quantile_examples(self):
        assert marginal_quantile(Marginal.lognormal(0, 1), 0.5) == 1.0
        assert marginal_quantile(Marginal.uniform(-1, 1), 0.25) == -0.5
        assert marginal_quantile(Marginal.normal(2, 3), 0.975) == pytest.approx(
            2 + 3 * Z975, abs=1e-12)
        assert abs(marginal_quantile(Marginal.normal(2, 3), 0.975) - 7.879892) < 3e-6

    def test_pdf_examples(self):
        assert marginal_pdf(Marginal.uniform(0, 2), 1.0) == 0.5
        assert marginal_pdf(Marginal.normal(0, 1), 0.0) == pytest.approx(
            1 / math.sqrt(2 * math.pi), rel=1e-15)
        tail = marginal_pdf(Marginal.normal(0, 1), 10.0)
        assert tail > 0
        assert tail == pytest.approx(float(mpmath.npdf(10)), rel=1e-13)
        assert tail == pytest.approx(7.69e-23, rel=1e-3)

    @pytest.mark.parametrize("dist,x", [
        (Marginal.lognormal(0.3, 0.7), 1.7),
        (Marginal.weibull(2.5, 1.3), 0.9),
        (Marginal.uniform(-2, 3), 0.4),
        (Marginal.normal(-1, 2), 0.5),
    ])
    def test_cdf_against_scipy(self, dist, x):
        from scipy import stats
        ref = {
            Family.NORMAL: lambda: stats.norm(-1, 2).cdf(x),
            Family.LOGNORMAL: lambda: stats.lognorm(0.7, scale=math.exp(0.3)).cdf(x),
            Family.UNIFORM: lambda: stats.uniform(-2, 5).cdf(x),
            Family.WEIBULL: lambda: stats.weibull_min(2.5, scale=1.3).cdf(x),
        }[dist.family]()
        assert dist.cdf(x) == pytest.approx(ref, rel=1e-13)

    @pytest.mark.parametrize("dist", [
        Marginal.normal(1.0, 2.0),
        Marginal.lognormal(-0.5, 0.8),
        Marginal.uniform(-3.0, 4.0),
        Marginal.weibull(1.7, 2.2),
        Marginal.weibull(0.6, 0.5),
    ])
    def test_pdf_is_cdf_derivative(self, dist):
        x = dist.ppf(np.linspace(0.05, 0.95, 19))
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        fd = (dist.cdf(x + h) - dist.cdf(x - h)) / (2 * h)
        assert np.allclose(dist.pdf(x), fd, rtol=1e-6)

    @pytest.mark.parametrize("family,params", [
        ("normal", (0.0, 0.0)),
        ("normal", (0.0, -1.0)),
        ("lognormal", (0.0, 0.0)),
        ("uniform", (1.0, 1.0)),
        ("uniform", (2.0, 1.0)),
        ("weibull", (0.0, 1.0)),
        ("weibull", (1.0, -1.0)),
        ("normal", (np.nan, 1.0)),
        ("normal", (0.0,)),
    ])
    def test_invalid_parameters(self, family, params):
        with pytest.raises(ParameterError):
            Marginal(family, params)

    @pytest.mark.parametrize("dist", [
        Marginal.normal(1.0, 2.0), Marginal.lognormal(0.3, 0.7),
        Marginal.uniform(-1.0, 4.0), Marginal.weibull(1.3, 2.0)])
    def test_survival(self, dist):
        from uqdecouple.model import to_scipy
        ref = to_scipy(dist)
        q = np.geomspace(1e-15, 0.5, 50)
        assert np.allclose(dist.isf(q), ref.isf(q), rtol=1e-12)
        x = ref.isf(q)
        assert np.allclose(dist.sf(x), q, rtol=1e-10)

    def test_quantile_domain(self):
        with pytest.raises(DomainError):
            Marginal.normal(0, 1).ppf(1.0)

    def test_dict_roundtrip(self):
        m = Marginal.weibull(2.0, 3.0)
        again = Marginal.from_dict(m.to_dict())
        assert again.family is Family.WEIBULL and again.params == (2.0, 3.0)

    def test_strictly_increasing(self):
        for dist in (Marginal.normal(0, 1), Marginal.lognormal(0, 1), Marginal.weibull(3, 1)):
            x = dist.ppf(np.linspace(1e-6, 1 - 1e-6, 5001))
            assert np.all(np.diff(x) > 0)
            assert np.all(np.diff(dist.cdf(x)) > 0)
            assert np.all(dist.pdf(x) > 0)


families = st.sampled_from([
    Marginal.normal(0.5, 2.0),
    Marginal.normal(-100.0, 0.01),
    Marginal.lognormal(0.0, 1.0),
    Marginal.lognormal(2.0, 0.3),
    Marginal.uniform(-1.0, 1.0),
    Marginal.uniform(10.0, 11.0),
    Marginal.weibull(1.0, 2.0),
    Marginal.weibull(0.5, 1.0),
    Marginal.weibull(5.0, 3.0),
])


@given(families, st.floats(1e-6, 1 - 1e-6))
@settings(max_examples=300)
def test_quantile_cdf_roundtrip(dist, p):
    x = dist.ppf(p)
    lo, hi = dist.support
    scale = max(abs(lo) if math.isfinite(lo) else 0.0, abs(hi) if math.isfinite(hi) else 0.0)
    assert dist.ppf(dist.cdf(x)) == pytest.approx(x, rel=1e-8, abs=1e-14 * (1 + scale))


class TestCholesky:
    def test_identity(self):
        L = cholesky(np.eye(3))
        assert np.array_equal(L.matrix, np.eye(3))
        assert L.jitter == 0.0

    def test_hand_example(self):
        a = np.array([[4.0, 2.0], [2.0, 3.0]])
        L = cholesky(a)
        assert np.allclose(L.matrix, [[2, 0], [1, math.sqrt(2)]], atol=1e-15)
        assert np.allclose(L.matrix @ L.matrix.T, a, atol=1e-14)

    def test_indefinite_no_jitter(self):
        with pytest.raises(DecompositionError) as info:
            cholesky([[1, 2], [2, 1]], jitter_policy="none")
        assert info.value.pivot == 1

    def test_indefinite_escalating_fails(self):
        with pytest.raises(DecompositionError):
            cholesky([[1, 2], [2, 1]])

    def test_singular_gets_jitter(self):
        a = np.ones((3, 3))
        with pytest.warns(JitterWarning):
            L = cholesky(a)
        assert 0 < L.jitter <= 1e-6
        assert np.allclose(L.matrix @ L.matrix.T, a + L.jitter * np.eye(3), atol=1e-12)

    def test_nonsymmetric(self):
        with pytest.raises(ParameterError):
            cholesky([[1.0, 0.5], [0.4, 1.0]])

    @given(st.integers(1, 50), st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_reconstruction(self, d, seed):
        a = random_spd(np.random.default_rng(seed), d, cond=1e6)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", JitterWarning)
            L = cholesky(a)
        fa = np.linalg.norm(a)
        rel = np.linalg.norm(L.matrix @ L.matrix.T - a) / fa
        assert rel <= 1e-10 + L.jitter * math.sqrt(d) / fa
        assert np.all(np.triu(L.matrix, 1) == 0)
        assert np.all(np.diag(L.matrix) > 0)


class TestLowerTriangular:
    def test_identity_solve(self):
        assert np.array_equal(tri_solve_lower(np.eye(2), [3.0, -1.0]), [3.0, -1.0])

    def test_hand_solve(self):
        L = LowerTriangular([[2, 0], [1, math.sqrt(2)]])
        assert np.allclose(tri_solve_lower(L, [2, 1 + math.sqrt(2)]), [1, 1], atol=1e-15)

    def test_zero_diagonal_rejected(self):
        with pytest.raises(ParameterError):
            LowerTriangular([[1, 0], [1, 0]])

    def test_upper_rejected(self):
        with pytest.raises(ParameterError):
            LowerTriangular([[1, 1e-300], [0, 1]])

    def test_batch_matvec_solve(self):
        rng = np.random.default_rng(0)
        L = LowerTriangular(np.tril(rng.uniform(0.5, 1.5, (4, 4))))
        u = rng.standard_normal((7, 4))
        assert np.allclose(L.matvec(u), u @ L.matrix.T)
        assert np.allclose(L.solve(L.matvec(u)), u, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            tri_solve_lower(np.eye(2), [1.0, 2.0, 3.0])


class TestCorrelation:
    def test_perfect(self):
        x = np.arange(10.0)
        r = sample_correlation(np.column_stack([x, 2 * x]))
        assert r[0, 1] == pytest.approx(1.0, abs=1e-15)

    def test_independent(self):
        x = np.random.default_rng(1).standard_normal((100_000, 2))
        assert abs(sample_correlation(x)[0, 1]) < 0.02

    def test_single_column(self):
        assert np.array_equal(sample_correlation(np.arange(5.0)[:, None]), [[1.0]])

    def test_degenerate(self):
        x = np.column_stack([np.arange(5.0), np.ones(5)])
        with pytest.raises(DegenerateDataError) as info:
            sample_correlation(x)
        assert info.value.column == 1

    @pytest.mark.parametrize("rho", [-0.9, -0.3, 0.0, 0.5, 0.95])
    def test_convergence_bound(self, rho):
        n = 50_000
        rng = np.random.default_rng(11)
        g = rng.standard_normal((n, 2))
        x = np.column_stack([g[:, 0], rho * g[:, 0] + math.sqrt(1 - rho ** 2) * g[:, 1]])
        assert abs(sample_correlation(x)[0, 1] - rho) <= 3 * (1 - rho ** 2) / math.sqrt(n)

    @pytest.mark.parametrize("bad", [
        [[1.0, 1.2], [1.2, 1.0]],
        [[2.0, 0.0], [0.0, 1.0]],
        [[1.0, 0.9, 0.9], [0.9, 1.0, -0.9], [0.9, -0.9, 1.0]],
    ])
    def test_check_correlation(self, bad):
        with pytest.raises(ParameterError):
            check_correlation(bad)
