"""Bootstrap p-values, the warp-speed Monte Carlo harness and Lloyd's size correction.

Every replicate draws from its own generator, seeded from (seed, replicate,
attempt) through numpy's SeedSequence, so results do not depend on the
order or the number of worker processes.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sc

from . import cf_test, mgf_test
from .errors import ConfigurationError, EstimationError, NumericalError
from .estimation import cols_fit, initial_model, mle_fit
from .models import NormalGammaParams, RegressionModel, Sample, StableGammaParams, sample_errors

__all__ = [
    "BootstrapConfig",
    "WarpSpeedConfig",
    "ExperimentReport",
    "NullFit",
    "replicate_rng",
    "fit_and_test",
    "bootstrap_pvalue",
    "warp_speed",
    "critical_index",
    "lloyd_correction",
]

log = logging.getLogger(__name__)

FAMILIES = ("normal_gamma", "stable_gamma")
ESTIMATORS = ("cols", "mle")


def replicate_rng(seed, *key):
    """Generator for one replicate, independent of every other (seed, key) pair."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def _default_estimator(family):
    return "cols" if family == "normal_gamma" else "mle"


def _check_family(family, estimator, fixed_alpha=None):
    if family not in FAMILIES:
        raise ConfigurationError(f"family must be one of {FAMILIES}, got {family!r}")
    if estimator not in ESTIMATORS:
        raise ConfigurationError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    if family == "stable_gamma" and estimator != "mle":
        raise ConfigurationError("the stable/gamma null is only estimated by maximum likelihood")
    if fixed_alpha is not None and (family != "stable_gamma" or not 1.0 < fixed_alpha <= 2.0):
        raise ConfigurationError("fixed_alpha needs the stable family and 1 < alpha <= 2")


@dataclass(frozen=True)
class NullFit:
    """Null-model fit of one sample and the resulting test statistic."""

    statistic: float
    model: RegressionModel
    estimate: object


def fit_and_test(sample, family, estimator, gamma, init=None, fixed_alpha=None):
    """Estimate the null model on ``sample`` and compute the matching statistic.

    The normal/gamma null uses the MGF statistic, the stable/gamma null the
    CF statistic, both on residuals standardized by c_hat.
    """
    if family == "normal_gamma":
        if estimator == "cols":
            est = cols_fit(sample)
            model = est.model
        else:
            est = mle_fit("normal_gamma", sample, init=init)
            model = est.params
        res = mgf_test.StandardizedResiduals.from_raw(model.residuals(sample), model.errors)
        stat = mgf_test.statistic_closed(res, gamma).statistic
    else:
        if init is None:
            init = initial_model("stable_gamma", sample, alpha=fixed_alpha or 1.9)
        elif fixed_alpha is not None:
            e = init.errors
            init = RegressionModel(init.beta, StableGammaParams(e.kappa, fixed_alpha, e.p, e.c))
        est = mle_fit("stable_gamma", sample, init=init, fixed_alpha=fixed_alpha)
        model = est.params
        res = cf_test.CfStandardizedResiduals.from_raw(model.residuals(sample), model.errors)
        stat = cf_test.statistic_closed(res, gamma)
    if not math.isfinite(stat):
        raise NumericalError("test statistic is not finite")
    return NullFit(float(stat), model, est)


# failures that trigger a redraw inside resampling loops
_REPLICATE_FAILURES = (EstimationError, NumericalError)


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 100
    gamma: float = 1.0
    seed: int = 0
    estimator: str = None
    family: str = "normal_gamma"
    fixed_alpha: float = None

    def __post_init__(self):
        if self.estimator is None:
            object.__setattr__(self, "estimator", _default_estimator(self.family))
        _check_family(self.family, self.estimator, self.fixed_alpha)
        if int(self.B) != self.B or self.B < 99:
            raise ConfigurationError("B must be an integer >= 99")
        if not self.gamma > 0:
            raise ConfigurationError("gamma must be positive")


def _bootstrap_sample(sample, model, rng):
    eps = sample_errors(model.errors, sample.n, rng)
    return Sample(sample.X, sample.X @ model.beta + eps)


def bootstrap_pvalue(sample, config):
    """Parametric-bootstrap p-value (1 + #{T_b >= T_0}) / (B + 1).

    Returns ``(p_value, statistic, estimate)``.  Replicates whose
    estimation fails are redrawn; more than 10 B attempts in total is an
    error.
    """
    fam, est, gamma = config.family, config.estimator, config.gamma
    base = fit_and_test(sample, fam, est, gamma, fixed_alpha=config.fixed_alpha)
    t0 = base.statistic
    stats = []
    attempts = 0
    for b in range(config.B):
        k = 0
        while True:
            attempts += 1
            if attempts > 10 * config.B:
                raise EstimationError(f"bootstrap gave up after {attempts - 1} attempts")
            rng = replicate_rng(config.seed, b, k)
            try:
                boot = _bootstrap_sample(sample, base.model, rng)
                stats.append(
                    fit_and_test(boot, fam, est, gamma, init=base.model, fixed_alpha=config.fixed_alpha).statistic
                )
                break
            except _REPLICATE_FAILURES as exc:
                log.debug("bootstrap replicate %d attempt %d failed: %s", b, k, exc)
                k += 1
    stats = np.asarray(stats)
    p = (1.0 + np.count_nonzero(stats >= t0)) / (config.B + 1.0)
    return float(p), t0, base.estimate


@dataclass(frozen=True)
class WarpSpeedConfig:
    M: int
    n: int
    generator: object
    null_family: str = "normal_gamma"
    gamma: float = 4.0
    level: float = 0.05
    seed: int = 0
    estimator: str = None
    fixed_alpha: float = None
    beta: float = 0.0

    def __post_init__(self):
        if self.estimator is None:
            object.__setattr__(self, "estimator", _default_estimator(self.null_family))
        _check_family(self.null_family, self.estimator, self.fixed_alpha)
        if int(self.M) != self.M or self.M < 1 or int(self.n) != self.n or self.n < 5:
            raise ConfigurationError("M must be a positive integer and n an integer >= 5")
        if not 0.0 < self.level < 1.0:
            raise ConfigurationError("level must lie in (0, 1)")
        if self.M * self.level < 10:
            raise ConfigurationError("need M * level >= 10 for a meaningful order statistic")
        if not self.gamma > 0:
            raise ConfigurationError("gamma must be positive")


@dataclass(frozen=True)
class ExperimentReport:
    rejection_rate: float
    config: WarpSpeedConfig
    statistic_values: np.ndarray
    bootstrap_values: np.ndarray
    critical_point: float
    failures: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def mc_se(self):
        """Binomial Monte Carlo standard error of the rejection rate."""
        r = self.rejection_rate
        return math.sqrt(r * (1.0 - r) / self.config.M)


def critical_index(M, level):
    """1-based order-statistic index M - ceil(level M) of the critical point."""
    return M - math.ceil(level * M - 1e-9)


# attempts per replicate before the whole experiment is abandoned
_MAX_ATTEMPTS = 100


def _warp_replicate(config, m):
    """Steps S1-S6 for replicate m: returns (T_m, bootstrap T_m, failures)."""
    fam, est, gamma, n = config.null_family, config.estimator, config.gamma, config.n
    X = np.ones((n, 1))
    failures = 0
    for attempt in range(_MAX_ATTEMPTS):
        rng = replicate_rng(config.seed, m, attempt)
        eps = sample_errors(config.generator, n, rng)
        try:
            fit = fit_and_test(Sample(X, config.beta + eps), fam, est, gamma, fixed_alpha=config.fixed_alpha)
        except _REPLICATE_FAILURES:
            failures += 1
            continue
        # keep the Monte Carlo sample when only the bootstrap fit fails
        for _ in range(_MAX_ATTEMPTS):
            boot = _bootstrap_sample(Sample(X, config.beta + eps), fit.model, rng)
            try:
                tb = fit_and_test(boot, fam, est, gamma, init=fit.model, fixed_alpha=config.fixed_alpha)
                return fit.statistic, tb.statistic, failures
            except _REPLICATE_FAILURES:
                failures += 1
    raise EstimationError(f"replicate {m} failed {_MAX_ATTEMPTS} times")


def _warp_chunk(args):
    config, ms = args
    return [_warp_replicate(config, m) for m in ms]


def warp_speed(config, workers=1):
    """Warp-speed bootstrap rejection rate (one bootstrap draw per Monte Carlo sample).

    Data follow the location model Y = beta + eps with eps drawn from
    ``config.generator``.  The critical point is the bootstrap order
    statistic of index M - ceil(level M) and a replicate rejects when
    T_m > C.  Output is identical for any ``workers``.
    """
    M = config.M
    if workers is None or workers <= 1:
        rows = [_warp_replicate(config, m) for m in range(M)]
    else:
        chunks = [list(range(i, M, workers)) for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_warp_chunk, [(config, c) for c in chunks]))
        rows = [None] * M
        for c, part in zip(chunks, parts):
            for m, row in zip(c, part):
                rows[m] = row
    T = np.array([r[0] for r in rows])
    Tb = np.array([r[1] for r in rows])
    failures = int(sum(r[2] for r in rows))
    if failures > 0.2 * M:
        raise EstimationError(f"{failures} estimation failures exceed 20% of M={M}")
    C = float(np.sort(Tb)[critical_index(M, config.level) - 1])
    rate = np.count_nonzero(T > C) / M
    return ExperimentReport(float(rate), config, T, Tb, C, failures)


def lloyd_correction(power, size_hat, level=0.05):
    """Size-corrected power Phi(Phi^-1(power) - Phi^-1(size_hat) + Phi^-1(level))."""
    for name, v in (("power", power), ("size_hat", size_hat), ("level", level)):
        if not 0.0 < v < 1.0:
            raise ConfigurationError(f"{name} must lie strictly inside (0, 1), got {v!r}")
    return float(sc.ndtr(sc.ndtri(power) - sc.ndtri(size_hat) + sc.ndtri(level)))
