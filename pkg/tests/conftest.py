import mpmath
import numpy as np
import pytest

from uqdecouple import kernels

mpmath.mp.dps = 40


def erf_series(x):
    """erf by its Maclaurin series in 40-digit arithmetic (|x| <= 6)."""
    x = mpmath.mpf(x)
    term, total, n = x, x, 0
    while True:
        n += 1
        term *= -x * x / n
        add = term / (2 * n + 1)
        total += add
        if abs(add) < mpmath.mpf(10) ** -45:
            break
    return 2 * total / mpmath.sqrt(mpmath.pi)


def phi_oracle(x):
    """High-precision standard normal CDF from the erf series."""
    return mpmath.mpf(1) / 2 * (1 + erf_series(mpmath.mpf(x) / mpmath.sqrt(2)))


def phi_inv_oracle(p, lo=-9.0, hi=9.0, iters=200):
    """Bisection on the series CDF."""
    p = mpmath.mpf(p)
    lo, hi = mpmath.mpf(lo), mpmath.mpf(hi)
    for _ in range(iters):
        mid = (lo + hi) / 2
        if phi_oracle(mid) < p:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


@pytest.fixture(params=["python", "cython"])
def backend(request):
    if request.param == "cython" and not kernels.HAVE_CYTHON:
        pytest.skip("compiled extension not built")
    return kernels.get_backend(request.param)


def random_spd(rng, d, cond=1e3):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = np.geomspace(1.0, cond, d)
    a = (q * lam) @ q.T
    return 0.5 * (a + a.T)


def random_correlation(rng, d):
    a = random_spd(rng, d, cond=50.0)
    s = np.sqrt(np.diag(a))
    r = a / np.outer(s, s)
    np.fill_diagonal(r, 1.0)
    return r
