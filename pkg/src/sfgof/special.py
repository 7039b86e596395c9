"""Special functions behind the closed-form test statistics.

Everything here is vectorised over the argument array; the shape
parameters (``a``, ``b``, ``nu``, ``gamma``, ``k``) are scalars because the
statistics evaluate one integral family at all pairwise residual
combinations at once.
"""

import math

import numpy as np
from scipy import special as sc

from .errors import ConfigurationError, NumericalOverflow

__all__ = [
    "std_normal_cdf",
    "log_std_normal_cdf",
    "ln_gamma",
    "kummer_1f1",
    "kummer_1f1_scaled",
    "exp_weight_integral",
    "exp_weight_integrals",
    "integral_I",
    "integral_J",
]

_EPS = 1e-17
# Above this argument the power series is replaced by the large-argument expansion.
_SERIES_MAX = 150.0
_LOG_MAX = 709.0
# Below z = 2 the forward moment recurrence loses at most ~1 digit.
_MILLER_Z = 2.0
# (lower z, start index): the backward recurrence converges faster for larger z;
# each start reaches full double precision across its band (checked against mpmath)
_MILLER_BANDS = ((2.0, 150), (3.0, 84), (5.0, 50), (10.0, 35))


def std_normal_cdf(x):
    """Standard normal distribution function."""
    return sc.ndtr(x)


def log_std_normal_cdf(x):
    """log of the standard normal CDF, accurate deep into the left tail."""
    return sc.log_ndtr(x)


def ln_gamma(x):
    """Natural log of the gamma function for positive arguments."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ConfigurationError("ln_gamma is only defined here for x > 0")
    out = sc.gammaln(x)
    return out[()] if out.ndim == 0 else out


def _is_nonpositive_int(a):
    return a <= 0 and float(a).is_integer()


def _series_scaled(a, b, x):
    """exp(-x) * 1F1(a; b; x) by direct summation, 0 <= x <= _SERIES_MAX."""
    term = np.ones_like(x)
    total = np.ones_like(x)
    k = 0
    kmin = float(np.max(x, initial=0.0)) + abs(a) + 2.0
    while True:
        term = term * ((a + k) / (b + k)) * x / (k + 1)
        total = total + term
        k += 1
        if k > kmin and np.all(np.abs(term) <= _EPS * np.abs(total)):
            break
        if k > 10_000:
            break
    return total * np.exp(-x)


def _polynomial_scaled(a, b, x):
    """exp(-x) * 1F1(-m; b; x): the series terminates after m + 1 terms."""
    m = int(round(-a))
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(m):
        term = term * ((a + k) / (b + k)) * x / (k + 1)
        total = total + term
    return total * np.exp(-x)


def _asymptotic_scaled(a, b, x):
    """Large-x expansion of exp(-x) * 1F1(a; b; x) (the e^x z^(a-b) branch)."""
    lead = np.exp(sc.gammaln(b) - sc.gammaln(a)) * np.sign(sc.gamma(a)) * x ** (a - b)
    term = np.ones_like(x)
    total = np.ones_like(x)
    active = np.ones(x.shape, dtype=bool)
    prev = np.abs(term)
    for s in range(1, 200):
        new = term * (s - a) * (b - a + s - 1) / (s * x)
        grow = np.abs(new) > prev
        active &= ~grow
        total = np.where(active, total + new, total)
        term = new
        prev = np.abs(new)
        active &= np.abs(new) > _EPS * np.abs(total)
        if not active.any():
            break
    return lead * total


def kummer_1f1_scaled(a, b, x):
    """exp(-x) * 1F1(a; b; x) for x >= 0, without intermediate overflow."""
    if _is_nonpositive_int(b):
        raise ConfigurationError("1F1 undefined for non-positive integer b")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ConfigurationError("kummer_1f1 requires a non-negative argument")
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if a == 0:
        out = np.exp(-x)
    elif a == b:
        out = np.ones_like(x)
    elif _is_nonpositive_int(a):
        out = _polynomial_scaled(a, b, x)
    else:
        out = np.empty_like(x)
        small = x <= _SERIES_MAX
        if small.any():
            out[small] = _series_scaled(a, b, x[small])
        if (~small).any():
            out[~small] = _asymptotic_scaled(a, b, x[~small])
    return out[0] if scalar else out


def kummer_1f1(a, b, x):
    """Kummer's confluent hypergeometric function 1F1(a; b; x) for x >= 0.

    Raises NumericalOverflow when the value is not representable; callers
    that only need exp(-x) * 1F1 should use :func:`kummer_1f1_scaled`.
    """
    x = np.asarray(x, dtype=float)
    if a == 0:
        return np.ones_like(x)[()] if x.ndim == 0 else np.ones_like(x)
    if a == b:
        if np.any(x > _LOG_MAX):
            raise NumericalOverflow("1F1(a; a; x) = e^x overflows")
        return np.exp(x)
    scaled = kummer_1f1_scaled(a, b, x)
    with np.errstate(over="ignore"):
        out = scaled * np.exp(x)
    if np.any(~np.isfinite(out)):
        raise NumericalOverflow("1F1 exceeds the floating-point range; use the scaled form")
    return out


def _check_gamma(gamma):
    if not gamma > 0:
        raise ConfigurationError(f"gamma must be positive, got {gamma!r}")


def exp_weight_integrals(x, gamma, kmax=4):
    """int_0^inf t^k exp(t x - gamma t^2) dt for every k = 0..kmax.

    Returns an array with leading axis of length ``kmax + 1``.  Works in
    the rescaled variable s = t sqrt(2 gamma), where the integrals obey
    G_k = -z G_{k-1} + (k-1) G_{k-2} with z = -x / sqrt(2 gamma).  That
    recurrence is run forwards for z <= 2 and by Miller's backward scheme
    otherwise, where the wanted solution is the recessive one.
    """
    _check_gamma(gamma)
    x = np.asarray(x, dtype=float)
    shape = x.shape
    z = -np.ravel(x) / math.sqrt(2.0 * gamma)
    # only the e^{z^2/2} growth of erfcx at negative z can overflow
    if np.any((z < 0) & (z * z / 2.0 > _LOG_MAX)):
        raise NumericalOverflow(
            "exp(x^2 / 4 gamma) overflows; increase gamma or bound the residuals"
        )
    g = np.zeros((kmax + 1, z.size))
    g0 = math.sqrt(math.pi / 2.0) * sc.erfcx(z / math.sqrt(2.0))

    fwd = z <= _MILLER_Z
    if fwd.any():
        zf = z[fwd]
        g[0, fwd] = g0[fwd]
        if kmax >= 1:
            g[1, fwd] = 1.0 - zf * g0[fwd]
        for k in range(2, kmax + 1):
            g[k, fwd] = -zf * g[k - 1, fwd] + (k - 1) * g[k - 2, fwd]

    bands = [lo for lo, _ in _MILLER_BANDS[1:]] + [math.inf]
    for (lo, start), hi in zip(_MILLER_BANDS, bands):
        sel = (z > lo) & (z <= hi)
        if sel.any():
            g[:, sel] = _miller(z[sel], g0[sel], kmax, start)

    scale = (2.0 * gamma) ** (-(np.arange(kmax + 1) + 1) / 2.0)
    out = g * scale[:, None]
    return out.reshape((kmax + 1,) + shape)


def _miller(zb, g0, kmax, start):
    """Recessive solution of G_k = -z G_{k-1} + (k-1) G_{k-2}, normalised to G_0 = g0."""
    upper = np.zeros_like(zb)
    cur = np.ones_like(zb)
    gb = np.zeros((kmax + 1, zb.size))
    for k in range(start, 1, -1):
        # G_{k-2} = (G_k + z G_{k-1}) / (k - 1), with (cur, upper) = (G_{k-1}, G_k)
        nxt = (upper + zb * cur) / (k - 1)
        upper, cur = cur / nxt, np.ones_like(nxt)
        gb /= nxt
        if k - 2 <= kmax:
            gb[k - 2] = 1.0
    return gb * (g0 / gb[0])


def exp_weight_integral(k, x, gamma):
    """int_0^inf t^k exp(t x) exp(-gamma t^2) dt for k in 0..4."""
    if k not in (0, 1, 2, 3, 4):
        raise ConfigurationError("k must be one of 0, 1, 2, 3, 4")
    out = exp_weight_integrals(x, gamma, kmax=k)[k]
    return out[()] if out.ndim == 0 else out


def integral_I(nu, gamma, z):
    """int_0^inf t^nu cos(t z) exp(-gamma t^2) dt, nu > -1.

    Closed form Gamma((nu+1)/2) / (2 gamma^((nu+1)/2)) * exp(-w) 1F1(-nu/2; 1/2; w)
    with w = z^2 / (4 gamma).
    """
    _check_gamma(gamma)
    if not nu > -1:
        raise ConfigurationError(f"integral_I needs nu > -1 (integrability at 0), got {nu}")
    z = np.asarray(z, dtype=float)
    w = z * z / (4.0 * gamma)
    h = (nu + 1.0) / 2.0
    pref = math.exp(math.lgamma(h) - h * math.log(gamma)) / 2.0
    return pref * kummer_1f1_scaled(-nu / 2.0, 0.5, w)


def integral_J(nu, gamma, z):
    """int_0^inf t^nu sin(t z) exp(-gamma t^2) dt, nu > -2.

    Closed form z Gamma(1 + nu/2) / (2 gamma^(1 + nu/2)) * exp(-w) 1F1((1-nu)/2; 3/2; w)
    with w = z^2 / (4 gamma).
    """
    _check_gamma(gamma)
    if not nu > -2:
        raise ConfigurationError(f"integral_J needs nu > -2 (integrability at 0), got {nu}")
    z = np.asarray(z, dtype=float)
    w = z * z / (4.0 * gamma)
    h = 1.0 + nu / 2.0
    pref = math.exp(math.lgamma(h) - h * math.log(gamma)) / 2.0
    return pref * z * kummer_1f1_scaled((1.0 - nu) / 2.0, 1.5, w)
