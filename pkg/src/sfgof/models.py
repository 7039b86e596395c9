"""Composed-error families for stochastic frontier models.

The composed error is eps = v - u with u ~ Gamma(shape p, scale c) and v
either N(0, sigma_v2) (normal/gamma) or symmetric alpha-stable with
characteristic function exp(-kappa^alpha |t|^alpha) (stable/gamma).
"""

from dataclasses import dataclass, field
from math import comb, isfinite

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "NormalGammaParams",
    "StableGammaParams",
    "StudentTGammaParams",
    "MixtureErrors",
    "RegressionModel",
    "Sample",
    "make_rng",
    "mgf_composed",
    "mgf_standardized",
    "cf_composed",
    "moments_ng",
    "standardized_moments",
    "sample_errors",
    "symmetric_stable_rvs",
]


def _positive(name, value):
    if not (isfinite(value) and value > 0):
        raise ConfigurationError(f"{name} must be positive and finite, got {value!r}")


def make_rng(seed):
    """Return a numpy Generator; an existing Generator is passed through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def _gamma_rvs(p, c, n, rng):
    # numpy's gamma sampler (Marsaglia-Tsang with the boost for shape < 1) is exact for all p > 0
    return rng.gamma(p, c, size=n)


@dataclass(frozen=True)
class NormalGammaParams:
    sigma_v2: float
    p: float
    c: float

    family = "normal_gamma"

    def __post_init__(self):
        _positive("sigma_v2", self.sigma_v2)
        _positive("p", self.p)
        _positive("c", self.c)

    @property
    def lam(self):
        """Standardised noise scale sigma_v2 / c^2."""
        return self.sigma_v2 / self.c**2

    @property
    def mean(self):
        return -self.c * self.p

    @property
    def std(self):
        return float(np.sqrt(self.sigma_v2 + self.c**2 * self.p))

    def log_cf(self, t):
        t = np.asarray(t, dtype=float)
        ct = self.c * t
        re = -0.5 * self.sigma_v2 * t * t - 0.5 * self.p * np.log1p(ct * ct)
        return re - 1j * self.p * np.arctan(ct)

    def cf(self, t):
        return np.exp(self.log_cf(t))

    def noise_cf(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-0.5 * self.sigma_v2 * t * t) + 0j

    def noise_pdf(self, x):
        s2 = self.sigma_v2
        return np.exp(-0.5 * np.asarray(x) ** 2 / s2) / np.sqrt(2 * np.pi * s2)

    def noise_rvs(self, n, rng):
        return rng.normal(0.0, np.sqrt(self.sigma_v2), size=n)

    def rvs(self, n, rng):
        v = self.noise_rvs(n, rng)
        u = _gamma_rvs(self.p, self.c, n, rng)
        return v - u


@dataclass(frozen=True)
class StableGammaParams:
    kappa: float
    alpha: float
    p: float
    c: float

    family = "stable_gamma"

    def __post_init__(self):
        _positive("kappa", self.kappa)
        _positive("p", self.p)
        _positive("c", self.c)
        if not 1.0 < self.alpha <= 2.0:
            raise ConfigurationError(f"alpha must lie in (1, 2], got {self.alpha!r}")

    @property
    def lam(self):
        """Standardised noise scale (kappa / c)^alpha."""
        return (self.kappa / self.c) ** self.alpha

    @property
    def mean(self):
        return -self.c * self.p

    @property
    def std(self):
        """A spread proxy; the variance is infinite for alpha < 2."""
        return float(np.sqrt(2.0 * self.kappa**2 + self.c**2 * self.p))

    def log_cf(self, t):
        t = np.asarray(t, dtype=float)
        ct = self.c * t
        re = -((self.kappa * np.abs(t)) ** self.alpha) - 0.5 * self.p * np.log1p(ct * ct)
        return re - 1j * self.p * np.arctan(ct)

    def cf(self, t):
        return np.exp(self.log_cf(t))

    def noise_cf(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-((self.kappa * np.abs(t)) ** self.alpha)) + 0j

    def noise_rvs(self, n, rng):
        return symmetric_stable_rvs(self.alpha, self.kappa, n, rng)

    def rvs(self, n, rng):
        v = self.noise_rvs(n, rng)
        u = _gamma_rvs(self.p, self.c, n, rng)
        return v - u


@dataclass(frozen=True)
class StudentTGammaParams:
    """Student-t noise with ``df`` degrees of freedom and unit scale, gamma inefficiency.

    Only used as a data-generating alternative in simulations.
    """

    df: float
    p: float
    c: float

    family = "t_gamma"

    def __post_init__(self):
        _positive("df", self.df)
        _positive("p", self.p)
        _positive("c", self.c)

    def rvs(self, n, rng):
        return rng.standard_t(self.df, size=n) - _gamma_rvs(self.p, self.c, n, rng)


@dataclass(frozen=True)
class MixtureErrors:
    """Finite mixture of composed-error laws, e.g. 0.7 NG(1,1,1) + 0.3 NG(1,p,1)."""

    weights: tuple
    components: tuple

    family = "mixture"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.components) or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise ConfigurationError("mixture weights must be non-negative and sum to one")

    def rvs(self, n, rng):
        labels = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        out = np.empty(n)
        for i, comp in enumerate(self.components):
            idx = np.flatnonzero(labels == i)
            out[idx] = comp.rvs(idx.size, rng)
        return out


@dataclass(frozen=True)
class Sample:
    """One cross-section: design matrix X (n x k) and response Y (n)."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.asarray(self.Y, dtype=float).ravel()
        if X.shape[0] != Y.shape[0]:
            X = X.T if X.shape[1] == Y.shape[0] else X
        if X.shape[0] != Y.shape[0]:
            raise ConfigurationError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        n, k = X.shape
        if n < k + 1:
            raise ConfigurationError(f"need n >= k + 1 observations, got n={n}, k={k}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ConfigurationError("sample contains non-finite values")
        if np.linalg.matrix_rank(X) < k:
            raise ConfigurationError("design matrix is rank deficient")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def k(self):
        return self.X.shape[1]

    @classmethod
    def location(cls, y):
        """Intercept-only sample Y_j = beta + eps_j."""
        y = np.asarray(y, dtype=float)
        return cls(np.ones((y.size, 1)), y)


@dataclass(frozen=True)
class RegressionModel:
    beta: np.ndarray
    errors: object
    sign_convention: str = field(default="production")

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if self.sign_convention not in ("production", "cost"):
            raise ConfigurationError("sign_convention must be 'production' or 'cost'")

    def residuals(self, sample):
        if sample.k != self.beta.size:
            raise ConfigurationError(
                f"beta has length {self.beta.size} but X has {sample.k} columns"
            )
        return sample.Y - sample.X @ self.beta


def mgf_composed(params, t):
    """MGF of eps = v - u under the normal/gamma law: exp(sigma_v2 t^2 / 2) / (1 + c t)^p."""
    t = np.asarray(t, dtype=float)
    base = 1.0 + params.c * t
    if np.any(base <= 0):
        raise ConfigurationError("MGF of the composed error requires 1 + c t > 0")
    return np.exp(0.5 * params.sigma_v2 * t * t - params.p * np.log(base))


def mgf_standardized(lam, p, t):
    """MGF of eps / c: exp(lam t^2 / 2) / (1 + t)^p."""
    t = np.asarray(t, dtype=float)
    if np.any(1.0 + t <= 0):
        raise ConfigurationError("standardized MGF requires t > -1")
    return np.exp(0.5 * lam * t * t - p * np.log1p(t))


def cf_composed(params, t):
    """Characteristic function of the composed error (normal/gamma or stable/gamma)."""
    return params.cf(t)


def moments_ng(params):
    """Raw moments mu_1..mu_4 of eps and the fifth moment of eps / c.

    Returns ``(mu1, mu2, mu3, mu4, mu5_std)``.  The fifth entry is in
    standardized units (it depends on lambda and p only).
    """
    s2, p, c = params.sigma_v2, params.p, params.c
    lam = params.lam
    mu1 = -c * p
    mu2 = s2 + c**2 * p * (p + 1)
    mu3 = -(c**3) * p * (p + 1) * (p + 2) - 3 * c * p * s2
    mu4 = 3 * s2**2 + c**4 * p * (p + 1) * (p + 2) * (p + 3) + 6 * s2 * c**2 * p * (p + 1)
    mu5 = (
        -15 * lam**2 * p
        - 10 * lam * p * (p + 1) * (p + 2)
        - p * (p + 1) * (p + 2) * (p + 3) * (p + 4)
    )
    return mu1, mu2, mu3, mu4, mu5


def standardized_moments(params, kmax=5):
    """E[(eps / c)^k], k = 1..kmax, by binomial expansion of E[(v/c - u/c)^k]."""
    lam, p = params.lam, params.p
    # v / c ~ N(0, lam): odd moments vanish, E[Z^{2m}] = lam^m (2m - 1)!!
    def normal_moment(j):
        if j % 2:
            return 0.0
        m = j // 2
        return lam**m * float(np.prod(np.arange(1, 2 * m, 2))) if m else 1.0

    def gamma_moment(j):
        return float(np.prod(p + np.arange(j))) if j else 1.0

    out = []
    for k in range(1, kmax + 1):
        total = 0.0
        for j in range(k + 1):
            total += comb(k, j) * normal_moment(j) * (-1) ** (k - j) * gamma_moment(k - j)
        out.append(total)
    return np.array(out)


def symmetric_stable_rvs(alpha, kappa, n, rng):
    """Symmetric alpha-stable draws with CF exp(-kappa^alpha |t|^alpha).

    Chambers-Mallows-Stuck transform; alpha = 2 is drawn as N(0, 2 kappa^2).
    """
    if alpha == 2.0:
        return rng.normal(0.0, np.sqrt(2.0) * kappa, size=n)
    phi = rng.uniform(-np.pi / 2, np.pi / 2, size=n)
    w = rng.standard_exponential(size=n)
    x = (
        np.sin(alpha * phi)
        / np.cos(phi) ** (1.0 / alpha)
        * (np.cos((1.0 - alpha) * phi) / w) ** ((1.0 - alpha) / alpha)
    )
    return kappa * x


def sample_errors(params, n, rng):
    """Draw n i.i.d. composed errors v - u from ``params`` using generator ``rng``."""
    if n < 0:
        raise ConfigurationError("n must be non-negative")
    rng = make_rng(rng)
    if n == 0:
        return np.empty(0)
    return params.rvs(n, rng)
