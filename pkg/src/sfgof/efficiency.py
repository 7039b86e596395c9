"""Firm-level technical efficiency from a fitted composed-error model.

Both scores are posterior expectations given eps = z,

    E[h(u) | z] = int h(u) f_u(u) f_v(z + u) du / int f_u(u) f_v(z + u) du,

with h(u) = exp(-u) (Battese-Coelli) or h(u) = u (JLMS, reported as
exp(-E[u | z])).  The gamma density is exact.  The noise density is the
exact normal density for normal/gamma models and an FFT inversion of the
stable CF otherwise.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, interpolate
from scipy import special as sc

from .errors import ConfigurationError, NumericalError
from .estimation import _stable_tail_span, cf_inversion_density
from .models import NormalGammaParams, StableGammaParams

__all__ = [
    "EfficiencyScores",
    "NoiseDensity",
    "noise_density",
    "posterior_moments",
    "efficiency_bc",
    "efficiency_jlms",
    "efficiency_scores",
]

_EPSREL = 1e-8


@dataclass(frozen=True)
class EfficiencyScores:
    bc: np.ndarray
    jlms: np.ndarray
    firm_ids: tuple = None


class NoiseDensity:
    """log f_v for the noise component; normal exactly, stable via an FFT grid.

    The stable grid is interpolated by a cubic spline rather than linearly:
    adaptive quadrature stalls on the kinks of a piecewise-linear integrand.
    """

    def __init__(self, errors, N=2**15):
        self.errors = errors
        if isinstance(errors, NormalGammaParams):
            self.grid = None
            self.sigma = math.sqrt(errors.sigma_v2)
            self.half_width = math.inf
        elif isinstance(errors, StableGammaParams):
            span = _stable_tail_span(errors.alpha, errors.kappa, 1e-10)
            N = max(N, 2 ** math.ceil(math.log2(16.0 * 2.0 * span / errors.kappa)))
            self.grid = cf_inversion_density(errors.noise_cf, N, span, 0.0, tail_tol=1e-8)
            self._spline = interpolate.CubicSpline(self.grid.points, self.grid.values)
            self.sigma = math.sqrt(2.0) * errors.kappa
            self.half_width = span
        else:
            raise ConfigurationError(f"no noise density for {type(errors).__name__}")

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.grid is None:
            s = self.sigma
            return -0.5 * (x / s) ** 2 - math.log(s * math.sqrt(2.0 * math.pi))
        inside = np.abs(x) <= self.half_width
        f = np.where(inside, self._spline(np.where(inside, x, 0.0)), 0.0)
        # the FFT grid has an absolute noise floor near 1e-17; treat anything below as zero mass
        return np.log(np.maximum(f, 1e-300))


def noise_density(errors):
    return NoiseDensity(errors)


def _upper_limit(p, c, mode, width):
    return max(float(sc.gammaincinv(p, 0.99999)) * c + 10.0 * c, mode + 12.0 * width)


def posterior_moments(errors, z, noise=None):
    """(log f_eps(z), E[u | z], E[exp(-u) | z]) by adaptive quadrature over u.

    The integrand is rescaled by exp(-shift) before integrating so that it
    cannot underflow far in the tails; the shift is added back in the
    returned log density f_eps(z) = int f_u(u) f_v(z + u) du.
    """
    noise = noise or NoiseDensity(errors)
    p, c = errors.p, errors.c
    z = float(z)
    if abs(z) > noise.half_width:
        raise ConfigurationError(f"z = {z:g} lies outside the noise density grid")
    s = noise.sigma
    if noise.grid is None:
        # -u/c - (z + u)^2 / (2 s^2) = -(u - mu)^2 / (2 s^2) + const
        mu = -z - s * s / c
        # normalise at the kernel maximum over u >= 0, which is u = 0 when mu < 0
        u0 = max(mu, 0.0)
        peak = -0.5 * ((u0 - mu) / s) ** 2
        shift = 0.5 * ((mu / s) ** 2 - (z / s) ** 2) - math.log(s * math.sqrt(2 * math.pi)) + peak

        def log_kernel(u):
            return -0.5 * ((u - mu) / s) ** 2 - peak
    else:
        mu = max(-z, 0.0)

        def raw(u):
            return -u / c + noise.log_pdf(z + u)

        probe = np.linspace(0.0, _upper_limit(p, c, mu, s), 4097)
        shift = float(np.max(raw(probe)))
        if not math.isfinite(shift):
            raise NumericalError(f"posterior of u is empty at z = {z:g}")

        def log_kernel(u):
            return raw(u) - shift

    U = _upper_limit(p, c, max(mu, 0.0), s)
    # for mu far below 0 the posterior is squeezed against u = 0 on the scale s^2 / |mu|
    width = s if mu >= -s else s * s / -mu
    marks = (mu - 6.0 * s, mu, mu + 6.0 * s, width, 6.0 * width, 30.0 * width)
    pts = sorted({min(max(v, 0.0), U) for v in marks} - {0.0, U})
    edges = [0.0] + pts + [U]

    # the kernel peaks at ~1 after the shift, so a tiny absolute tolerance is meaningful
    epsabs = 1e-14 * max(s, 1.0)

    def integral(h):
        total = err_total = 0.0
        for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
            if b <= a:
                continue
            if i == 0:
                # u^(p-1) is handled by the algebraic weight, finite even for p < 1
                val, err = integrate.quad(
                    lambda u: math.exp(log_kernel(u)) * h(u), a, b,
                    weight="alg", wvar=(p - 1.0, 0.0), epsabs=epsabs, epsrel=_EPSREL, limit=400,
                )
            else:
                val, err = integrate.quad(
                    lambda u: u ** (p - 1.0) * math.exp(log_kernel(u)) * h(u), a, b,
                    epsabs=epsabs, epsrel=_EPSREL, limit=400,
                )
            total += val
            err_total += err
        if err_total > 1e-6 * abs(total) + 10 * epsabs:
            raise NumericalError(f"efficiency quadrature did not converge at z = {z:g}")
        return total

    with warnings.catch_warnings():
        # convergence is judged from the returned error estimates instead
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        n0 = integral(lambda u: 1.0)
        if not n0 > 0:
            raise NumericalError(f"posterior normaliser vanished at z = {z:g}")
        m1 = integral(lambda u: u) / n0
        me = integral(lambda u: math.exp(-u)) / n0
    log_norm = math.log(n0) + shift - sc.gammaln(p) - p * math.log(c)
    return log_norm, m1, me


def efficiency_bc(model, z, noise=None):
    """Battese-Coelli score E[exp(-u) | eps = z]."""
    _, _, me = posterior_moments(model.errors, z, noise)
    return min(me, 1.0)


def efficiency_jlms(model, z, noise=None):
    """JLMS score exp(-E[u | eps = z])."""
    _, m1, _ = posterior_moments(model.errors, z, noise)
    return min(math.exp(-m1), 1.0)


def efficiency_scores(model, sample=None, residuals=None, firm_ids=None):
    """Both scores for every observation of ``sample`` (or given residuals)."""
    if residuals is None:
        if sample is None:
            raise ConfigurationError("pass a sample or residuals")
        residuals = model.residuals(sample)
    noise = NoiseDensity(model.errors)
    bc, jl = [], []
    for z in np.asarray(residuals, dtype=float):
        _, m1, me = posterior_moments(model.errors, z, noise)
        bc.append(min(me, 1.0))
        jl.append(min(math.exp(-m1), 1.0))
    ids = tuple(firm_ids) if firm_ids is not None else None
    return EfficiencyScores(np.array(bc), np.array(jl), ids)
