"""Parameter estimation for normal/gamma and stable/gamma frontiers.

Two routes are provided:

* corrected least squares (COLS): OLS slopes plus a method-of-moments fit
  of (sigma_v2, p, c) to the second to fourth residual moments, with the
  intercept shifted by c p;
* maximum likelihood, where the composed-error density is obtained by FFT
  inversion of the characteristic function on an even grid.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy import special as sc

from .errors import ConfigurationError, EstimationError
from .models import NormalGammaParams, RegressionModel, Sample, StableGammaParams

__all__ = [
    "ColsEstimate",
    "DensityGrid",
    "MleEstimate",
    "GridSpec",
    "ols",
    "cols_fit",
    "cf_inversion_density",
    "default_grid",
    "density_grid",
    "log_likelihood",
    "initial_model",
    "mle_fit",
    "SIGMA_FLOOR",
]

log = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-8
_DEFAULT_N = 2**14
_MAX_N = 2**20


def ols(sample):
    """Least-squares coefficients and residuals."""
    X, Y = sample.X, sample.Y
    beta, _, rank, _ = np.linalg.lstsq(X, Y, rcond=None)
    if rank < X.shape[1]:
        raise ConfigurationError("design matrix is rank deficient")
    return beta, Y - X @ beta


@dataclass(frozen=True)
class ColsEstimate:
    beta: np.ndarray
    sigma_v2: float
    p: float
    c: float
    converged: bool
    residuals: np.ndarray
    sigma_clamped: bool = False

    @property
    def params(self):
        return NormalGammaParams(self.sigma_v2, self.p, self.c)

    @property
    def model(self):
        return RegressionModel(self.beta, self.params)

    @property
    def standardized(self):
        """Standardized residuals r_j = eps_hat_j / c_hat."""
        return self.residuals / self.c


def _intercept_direction(X):
    """(X'X)^{-1} X' 1, requiring the constant to lie in the column space of X."""
    ones = np.ones(X.shape[0])
    d, *_ = np.linalg.lstsq(X, ones, rcond=None)
    if np.max(np.abs(X @ d - ones)) > 1e-8:
        raise ConfigurationError("COLS needs a constant term in the column space of X")
    return d


def cols_fit(sample):
    """Corrected least squares for the normal/gamma frontier.

    The four moment conditions are solved exactly.  With centred OLS
    residuals e, m_k = mean(e^k), k3 = m3 and k4 = m4 - 3 m2^2 the system
    reads k3 = -2 c^3 p, k4 = 6 p c^4, m2 = sigma_v2 + c^2 p, giving
    c = -k4 / (3 k3) directly.

    When that solution is inadmissible (k4 <= 0, or sigma_v2 below
    SIGMA_FLOOR) the boundary estimate sigma_v2 = SIGMA_FLOOR is returned
    with c and p still matching the second and third moments; only the
    fourth-moment condition is then violated.  ``sigma_clamped`` flags it.
    """
    if sample.n < sample.k + 4:
        raise ConfigurationError("COLS needs n >= k + 4")
    b, e = ols(sample)
    m2, m3, m4 = (float(np.mean(e**k)) for k in (2, 3, 4))
    if not m3 < 0:
        raise EstimationError(
            f"residual third moment is {m3:.3g} >= 0 (wrong skew); COLS has no solution"
        )
    if not m2 > SIGMA_FLOOR:
        raise EstimationError("residual variance is numerically zero")
    k4 = m4 - 3.0 * m2 * m2
    clamped = True
    if k4 > 0:
        c = -k4 / (3.0 * m3)
        p = -m3 / (2.0 * c**3)
        s2 = m2 - c * c * p
        clamped = not s2 >= SIGMA_FLOOR
    if clamped:
        log.info("COLS solution inadmissible (k4 = %.3g); using the sigma_v2 boundary", k4)
        s2 = SIGMA_FLOOR
        c = -m3 / (2.0 * (m2 - s2))
        p = (m2 - s2) / (c * c)
    beta = b + c * p * _intercept_direction(sample.X)
    resid = sample.Y - sample.X @ beta
    return ColsEstimate(beta, s2, p, c, True, resid, clamped)


@dataclass(frozen=True)
class DensityGrid:
    points: np.ndarray
    values: np.ndarray
    spacing: float

    def __call__(self, x):
        """Linear interpolation; NaN outside the grid."""
        return np.interp(x, self.points, self.values, left=np.nan, right=np.nan)

    @property
    def mass(self):
        return float(np.trapezoid(self.values, self.points))


@dataclass(frozen=True)
class GridSpec:
    """FFT grid: N points spanning center +- span; None fields are filled by defaults."""

    N: int = None
    span: float = None
    center: float = None


def cf_inversion_density(cf, N=_DEFAULT_N, span=20.0, center=0.0, tail_tol=1e-10, log_cf=None):
    """Density on an even grid by FFT inversion of a characteristic function.

    Grid points are x_k = center + (k - N/2) h with h = 2 span / N and
    frequencies t_j = j dt with dt = pi / span, so that h dt = 2 pi / N and

        f(x_k) = dt / (2 pi) sum_j (-1)^j phi(t_j) exp(-i t_j center) exp(-2 pi i j k / N).

    The density is real, so only t >= 0 is evaluated and the sum is done
    by an inverse real FFT of the conjugated half spectrum.  ``log_cf``, if
    given, replaces ``cf`` and saves one complex exponential.
    """
    if N < 8 or N & (N - 1):
        raise ConfigurationError(f"N must be a power of two, got {N}")
    if not span > 0:
        raise ConfigurationError("span must be positive")
    h = 2.0 * span / N
    dt = math.pi / span
    j = np.arange(N // 2 + 1)
    t = j * dt
    shift = 1j * (np.pi * j - t * center)
    if log_cf is not None:
        psi = np.exp(log_cf(t) + shift)
    else:
        psi = cf(t) * np.exp(shift)
    psi[-1] = 0.0
    values = (dt * N / (2.0 * math.pi)) * np.fft.irfft(np.conj(psi), n=N)
    np.clip(values, 0.0, None, out=values)
    points = center + (np.arange(N) - N // 2) * h
    edge = max(values[0], values[-1])
    if edge > tail_tol:
        raise ConfigurationError(
            f"density at the grid boundary is {edge:.3g} > {tail_tol:g}; widen the span"
        )
    return DensityGrid(points, values, h)


def _stable_tail_span(alpha, kappa, tol):
    """|x| beyond which the symmetric stable density is below tol (asymptotic tail)."""
    if alpha >= 2.0:
        return 12.0 * math.sqrt(2.0) * kappa
    const = math.gamma(1.0 + alpha) * math.sin(math.pi * alpha / 2.0) / math.pi
    x = (const * kappa**alpha / tol) ** (1.0 / (1.0 + alpha))
    return max(x, 12.0 * math.sqrt(2.0) * kappa)


# tail level the stable grid is sized for; periodisation error is of this order
_STABLE_TAIL = 1e-8


def default_grid(errors):
    """Grid defaults for a composed-error law: (N, span, center, tail_tol)."""
    p, c = errors.p, errors.c
    center = -c * p
    gamma_reach = c * (p + 36.0 + 8.0 * math.sqrt(p))
    if isinstance(errors, NormalGammaParams):
        sv = math.sqrt(errors.sigma_v2)
        span = max(12.0 * errors.std, 12.0 * sv + c * p, gamma_reach)
        scale = sv
        tail_tol = 1e-10
    else:
        kappa = errors.kappa
        span = max(_stable_tail_span(errors.alpha, kappa, _STABLE_TAIL) + c * p, gamma_reach)
        scale = kappa
        tail_tol = 10.0 * _STABLE_TAIL
    n_needed = 8.0 * 2.0 * span / max(scale, 1e-12)
    N = _DEFAULT_N
    while N < n_needed and N < _MAX_N:
        N *= 2
    return N, span, center, tail_tol


def density_grid(errors, grid=None, cover=None):
    """FFT density grid for ``errors``; ``cover`` widens the span to include those points."""
    N, span, center, tail_tol = default_grid(errors)
    if grid is not None:
        N = grid.N or N
        center = center if grid.center is None else grid.center
        if grid.span is not None:
            span = grid.span
            cover = None
    if cover is not None and len(cover):
        reach = 1.05 * float(np.max(np.abs(np.asarray(cover) - center)))
        if reach > span:
            N = min(_MAX_N, N * 2 ** max(0, math.ceil(math.log2(reach / span))))
            span = reach
    return cf_inversion_density(errors.cf, N, span, center, tail_tol, log_cf=getattr(errors, "log_cf", None))


def log_likelihood(model, sample, grid=None):
    """Sum of log CF-inversion densities at the residuals Y - X beta.

    Returns -inf when a residual lies outside the grid or where the
    (clipped) density is zero.  Without an explicit ``grid`` the span is
    widened to cover every residual.
    """
    eps = model.residuals(sample)
    dens = density_grid(model.errors, grid, cover=eps if grid is None else None)
    f = dens(eps)
    if np.any(~np.isfinite(f)) or np.any(f <= 0):
        return -math.inf
    return float(np.sum(np.log(f)))


@dataclass(frozen=True)
class MleEstimate:
    params: RegressionModel
    log_likelihood: float
    converged: bool
    iterations: int

    def standardized(self, sample):
        return self.params.residuals(sample) / self.params.errors.c


# box for the gamma shape; beyond it the likelihood is flat along p c = const
P_BOUNDS = (1e-4, 100.0)
_LOGP = (math.log(P_BOUNDS[0]), math.log(P_BOUNDS[1]))


def _p_from(theta):
    return math.exp(_LOGP[0] + (_LOGP[1] - _LOGP[0]) * sc.expit(theta))


def _p_to(p):
    u = (math.log(p) - _LOGP[0]) / (_LOGP[1] - _LOGP[0])
    return sc.logit(min(max(u, 1e-9), 1.0 - 1e-9))


def _alpha_from(theta):
    return 1.0 + sc.expit(theta)


def _alpha_to(alpha):
    a = min(max(alpha - 1.0, 1e-6), 1.0 - 1e-9)
    return sc.logit(a)


def _pack(model, fixed_alpha):
    e = model.errors
    if isinstance(e, NormalGammaParams):
        dist = [math.log(e.sigma_v2), _p_to(e.p), math.log(e.c)]
    else:
        dist = [math.log(e.kappa)]
        if fixed_alpha is None:
            dist.append(_alpha_to(e.alpha))
        dist += [_p_to(e.p), math.log(e.c)]
    return np.concatenate([model.beta, dist])


def _unpack(theta, k, family, fixed_alpha):
    beta = theta[:k]
    d = theta[k:]
    if family == "normal_gamma":
        errors = NormalGammaParams(math.exp(d[0]), _p_from(d[1]), math.exp(d[2]))
    elif fixed_alpha is None:
        errors = StableGammaParams(math.exp(d[0]), _alpha_from(d[1]), _p_from(d[2]), math.exp(d[3]))
    else:
        errors = StableGammaParams(math.exp(d[0]), fixed_alpha, _p_from(d[1]), math.exp(d[2]))
    return RegressionModel(beta, errors)


def initial_model(family, sample, alpha=1.9):
    """Starting values from COLS, falling back to generic moments on failure."""
    try:
        est = cols_fit(sample)
        beta, s2, p, c = est.beta, max(est.sigma_v2, 1e-4 * est.c**2), est.p, est.c
        p = min(max(p, 0.05), 20.0)
    except EstimationError:
        beta, e = ols(sample)
        sd = float(np.std(e))
        s2, p, c = (0.5 * sd) ** 2, 1.0, 0.5 * sd
        beta = beta + c * p * _intercept_direction(sample.X)
    if family == "normal_gamma":
        return RegressionModel(beta, NormalGammaParams(s2, p, c))
    if family == "stable_gamma":
        return RegressionModel(beta, StableGammaParams(math.sqrt(s2 / 2.0), alpha, p, c))
    raise ConfigurationError(f"unknown family {family!r}")


def mle_fit(
    family, sample, init=None, max_iter=2000, fatol_rel=1e-8, xatol=1e-7, fixed_alpha=None, grid=None,
    restarts=2,
):
    """Maximum likelihood via Nelder-Mead on transformed parameters.

    Scales are optimised on the log scale, log p through a logistic map
    onto log(P_BOUNDS) and alpha through a logistic map onto (1, 2).  ``fixed_alpha`` holds the tail index fixed
    (stable/gamma only).  A run that hits the iteration cap is restarted
    from its best point with a fresh simplex, at most ``restarts`` times.
    """
    if family not in ("normal_gamma", "stable_gamma"):
        raise ConfigurationError(f"unknown family {family!r}")
    if init is None:
        init = initial_model(family, sample)
    if fixed_alpha is not None:
        if family != "stable_gamma" or not 1.0 < fixed_alpha <= 2.0:
            raise ConfigurationError("fixed_alpha needs the stable family and 1 < alpha <= 2")
    if family == "stable_gamma" and not isinstance(init.errors, StableGammaParams):
        raise ConfigurationError("stable_gamma fit needs a StableGammaParams initial value")
    if family == "normal_gamma" and not isinstance(init.errors, NormalGammaParams):
        raise ConfigurationError("normal_gamma fit needs a NormalGammaParams initial value")
    k = sample.k
    theta0 = _pack(init, fixed_alpha)

    def objective(theta):
        try:
            model = _unpack(theta, k, family, fixed_alpha)
            ll = log_likelihood(model, sample, grid)
        except (ConfigurationError, OverflowError, ValueError):
            return 1e300
        return -ll if math.isfinite(ll) else 1e300

    f0 = objective(theta0)
    if f0 >= 1e300:
        raise EstimationError("log-likelihood is not finite at the initial value")
    nit = 0
    for _ in range(restarts + 1):
        res = optimize.minimize(
            objective,
            theta0,
            method="Nelder-Mead",
            options={
                "maxiter": max_iter,
                "maxfev": 4 * max_iter,
                "xatol": xatol,
                "fatol": fatol_rel * max(abs(f0), 1.0),
                "adaptive": theta0.size > 4,
            },
        )
        nit += int(res.nit)
        if res.success:
            break
        theta0 = res.x
    model = _unpack(res.x, k, family, fixed_alpha)
    if not res.success:
        log.info("mle_fit stopped without convergence: %s", res.message)
    return MleEstimate(model, -float(res.fun), bool(res.success), nit)
