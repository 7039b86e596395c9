import math

import numpy as np
import pytest
from scipy import integrate, stats

from sfgof import estimation as est
from sfgof import mgf_test, models
from sfgof.errors import ConfigurationError, EstimationError
from sfgof.models import NormalGammaParams, RegressionModel, Sample, StableGammaParams


def normal_exponential_pdf(z, s, c):
    """Density of N(0, s^2) - Exp(scale c)."""
    z = np.asarray(z, dtype=float)
    return np.exp(stats.norm.logcdf(-z / s - s / c) + z / c + s * s / (2 * c * c)) / c


def normal_gamma_pdf(z, s2, p, c):
    """Convolution of the gamma and normal densities by quadrature."""
    s = math.sqrt(s2)
    g = stats.gamma(p, scale=c)
    f = lambda u: g.pdf(u) * stats.norm.pdf(z + u, scale=s)
    lo = max(0.0, -z - 12 * s)
    return integrate.quad(f, lo, -z + 12 * s, points=[max(lo, -z)] if -z > lo else None, epsabs=0, epsrel=1e-11)[0] + (
        integrate.quad(f, 0.0, lo, epsabs=1e-300, epsrel=1e-11)[0] if lo > 0 else 0.0
    )


def test_ols_examples():
    rng = np.random.default_rng(0)
    y = rng.normal(3, 1, 40)
    b, e = est.ols(Sample.location(y))
    assert b[0] == pytest.approx(y.mean(), rel=1e-14)
    X = np.column_stack([np.ones(30), rng.normal(size=30)])
    b, e = est.ols(Sample(X, X @ [1.0, -2.0]))
    np.testing.assert_allclose(e, 0.0, atol=1e-12)
    X = rng.normal(size=(100, 3))
    Y = rng.normal(size=100)
    b, e = est.ols(Sample(X, Y))
    assert np.linalg.norm(X.T @ e) <= 1e-9 * np.linalg.norm(Y)


def test_cols_consistency():
    # sampling sd at n = 1e6 is about 1% for sigma_v2 and c and 3.3% for p (fourth moment)
    eps = models.sample_errors(NormalGammaParams(1.0, 1.0, 1.0), 10**6, 17)
    fit = est.cols_fit(Sample.location(2.0 + eps))
    assert (fit.sigma_v2, fit.c) == pytest.approx((1.0, 1.0), rel=0.05)
    assert fit.p == pytest.approx(1.0, rel=0.15)
    assert fit.beta[0] == pytest.approx(2.0, abs=0.05)
    assert not fit.sigma_clamped


@pytest.mark.parametrize("seed", range(5))
def test_cols_moment_identities(seed):
    rng = np.random.default_rng(seed)
    n = 300
    X = np.column_stack([np.ones(n), rng.normal(size=n), rng.uniform(size=n)])
    eps = models.sample_errors(NormalGammaParams(0.5, 2.0, 0.8), n, rng)
    fit = est.cols_fit(Sample(X, X @ [1.0, 0.5, -0.3] + eps))
    res = mgf_test.StandardizedResiduals.from_raw(fit.residuals, fit.params)
    # a boundary solution matches the first three moments only
    k = 3 if fit.sigma_clamped else 4
    np.testing.assert_allclose(mgf_test.moment_equations(res)[:k], 0.0, atol=1e-8)


def test_cols_boundary_solution():
    # platykurtic negatively skewed residuals: k4 < 0 has no interior solution
    rng = np.random.default_rng(3)
    y = -rng.beta(1.0, 2.0, 500)
    eps = y - y.mean()
    m2, m3, m4 = (np.mean(eps**k) for k in (2, 3, 4))
    assert m3 < 0 and m4 - 3 * m2**2 < 0
    fit = est.cols_fit(Sample.location(y))
    assert fit.sigma_clamped
    assert fit.sigma_v2 == est.SIGMA_FLOOR
    # second and third moments still hold exactly
    assert fit.sigma_v2 + fit.c**2 * fit.p == pytest.approx(m2, rel=1e-12)
    assert -2 * fit.c**3 * fit.p == pytest.approx(m3, rel=1e-12)
    assert np.mean(fit.residuals) == pytest.approx(-fit.c * fit.p, abs=1e-12)


def test_cols_wrong_skew():
    y = np.random.default_rng(1).gamma(2.0, 1.0, 200)
    with pytest.raises(EstimationError):
        est.cols_fit(Sample.location(y))


def test_cols_needs_constant():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 2))
    y = X @ [1.0, 1.0] - rng.exponential(size=50)
    with pytest.raises(ConfigurationError):
        est.cols_fit(Sample(X, y))


def test_density_normal_oracle():
    grid = est.cf_inversion_density(lambda t: np.exp(-0.5 * t * t), 2**14, 20.0)
    exact = stats.norm.pdf(grid.points)
    assert np.max(np.abs(grid.values - exact)) <= 1e-8
    assert grid.mass == pytest.approx(1.0, abs=1e-3)


def test_density_normal_exponential_oracle():
    ng = NormalGammaParams(1.0, 1.0, 1.0)
    grid = est.cf_inversion_density(ng.cf, 2**14, 40.0, center=-1.0)
    x = np.linspace(-10, 5, 301)
    assert np.max(np.abs(grid(x) - normal_exponential_pdf(x, 1.0, 1.0))) <= 1e-6


@pytest.mark.parametrize("p", [0.3, 2.5])
def test_density_normal_gamma_quadrature_oracle(p):
    ng = NormalGammaParams(0.5, p, 0.8)
    N, span, center, tol = est.default_grid(ng)
    grid = est.cf_inversion_density(ng.cf, N, span, center, tol)
    for z in (-6.0, -2.0, -0.4, 0.0, 1.5):
        assert grid(z) == pytest.approx(normal_gamma_pdf(z, 0.5, p, 0.8), rel=1e-4, abs=1e-9)


def test_density_stable_alpha_two_equals_normal():
    sg = StableGammaParams(math.sqrt(0.5), 2.0, 1.2, 0.7)
    ng = NormalGammaParams(1.0, 1.2, 0.7)
    a = est.cf_inversion_density(sg.cf, 2**14, 40.0, -0.84)
    b = est.cf_inversion_density(ng.cf, 2**14, 40.0, -0.84)
    np.testing.assert_allclose(a.values, b.values, atol=1e-13)


def test_density_grid_checks():
    with pytest.raises(ConfigurationError):
        est.cf_inversion_density(lambda t: np.exp(-0.5 * t * t), 1000, 20.0)
    with pytest.raises(ConfigurationError):
        # heavy exponential tail cut off by a narrow grid
        est.cf_inversion_density(NormalGammaParams(1.0, 1.0, 1.0).cf, 2**12, 6.0)
    grid = est.cf_inversion_density(lambda t: np.exp(-0.5 * t * t), 2**10, 20.0)
    assert math.isnan(grid(25.0))


def test_log_likelihood_single_observation():
    m = RegressionModel([0.0], NormalGammaParams(1.0, 1.0, 1.0))
    ll = est.log_likelihood(m, Sample.location([0.0, 0.0]))
    assert ll == pytest.approx(2 * math.log(normal_exponential_pdf(0.0, 1.0, 1.0)), abs=1e-6)


def test_log_likelihood_stable_alpha_two():
    y = models.sample_errors(NormalGammaParams(1.0, 1.5, 0.6), 50, 4)
    s = Sample.location(y)
    ng = est.log_likelihood(RegressionModel([0.0], NormalGammaParams(1.0, 1.5, 0.6)), s)
    sg = est.log_likelihood(RegressionModel([0.0], StableGammaParams(math.sqrt(0.5), 2.0, 1.5, 0.6)), s)
    assert abs(ng - sg) <= 1e-6 * s.n


def test_log_likelihood_outlier_sentinel():
    m = RegressionModel([0.0], NormalGammaParams(1.0, 1.0, 1.0))
    s = Sample.location([0.0, 0.5, 60.0])
    assert est.log_likelihood(m, s, est.GridSpec(N=2**12, span=30.0)) == -math.inf
    # the default grid grows to cover the residual instead
    assert math.isfinite(est.log_likelihood(m, s))


def test_log_likelihood_matches_quadrature_density():
    ng = NormalGammaParams(0.4, 0.7, 1.1)
    y = models.sample_errors(ng, 20, 9)
    ll = est.log_likelihood(RegressionModel([0.0], ng), Sample.location(y))
    ref = sum(math.log(normal_gamma_pdf(z, 0.4, 0.7, 1.1)) for z in y)
    assert ll == pytest.approx(ref, abs=1e-4)


def test_mle_normal_gamma_recovers_truth():
    # with sigma_v = c the split between p and c is weakly identified at n = 2000
    # (sd of p_hat about 0.6), so check the likelihood and the well-determined moments
    y = 1.0 + models.sample_errors(NormalGammaParams(1.0, 1.0, 1.0), 2000, 21)
    s = Sample.location(y)
    fit = est.mle_fit("normal_gamma", s)
    e = fit.params.errors
    assert fit.converged
    truth = RegressionModel([1.0], NormalGammaParams(1.0, 1.0, 1.0))
    assert fit.log_likelihood >= est.log_likelihood(truth, s)
    assert fit.params.beta[0] - e.c * e.p == pytest.approx(0.0, abs=0.1)
    assert e.sigma_v2 + e.c**2 * e.p == pytest.approx(2.0, rel=0.1)
    init = est.initial_model("normal_gamma", s)
    assert fit.log_likelihood >= est.log_likelihood(init, s)


def test_mle_stable_recovers_alpha():
    y = models.sample_errors(StableGammaParams(1.0, 1.8, 1.0, 1.0), 2000, 5)
    fit = est.mle_fit("stable_gamma", Sample.location(y))
    assert abs(fit.params.errors.alpha - 1.8) < 0.1


def test_mle_fixed_alpha_and_validation():
    y = models.sample_errors(StableGammaParams(0.5, 1.9, 1.0, 1.0), 200, 8)
    s = Sample.location(y)
    fit = est.mle_fit("stable_gamma", s, fixed_alpha=1.9)
    assert fit.params.errors.alpha == 1.9
    with pytest.raises(ConfigurationError):
        est.mle_fit("normal_gamma", s, fixed_alpha=1.9)
    with pytest.raises(ConfigurationError):
        est.mle_fit("student", s)
    with pytest.raises(ConfigurationError):
        est.mle_fit("stable_gamma", s, init=est.initial_model("normal_gamma", s))


def test_parameter_transforms_round_trip():
    for p in (1e-3, 0.2, 1.0, 30.0):
        assert est._p_from(est._p_to(p)) == pytest.approx(p, rel=1e-9)
    for a in (1.1, 1.5, 1.99):
        assert est._alpha_from(est._alpha_to(a)) == pytest.approx(a, rel=1e-12)
