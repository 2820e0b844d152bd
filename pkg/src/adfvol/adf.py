"""
Inverse-Gamma assumed density filter for Heston variance.

Each step first propagates the posterior mean and variance of nu through the
discretized Heston dynamics (the leverage term uses the current return), then
projects onto an Inverse-Gamma prior by moment matching, then applies the
conjugate Gaussian-likelihood correction. Q is the squared predicted mean
over the predicted variance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats
from scipy.signal import lfilter

from .heston import HestonParams

logger = logging.getLogger(__name__)

try:
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap

# floor applied to a non-positive predicted mean
NU_FLOOR = 1e-12


class FilterError(ArithmeticError):
    """Raised when the recursion produces a non-finite state."""

    def __init__(self, step: int, msg: str = "non-finite filter state"):
        super().__init__(f"{msg} at step {step}")
        self.step = step


@dataclass(frozen=True)
class IgParams:
    """Inverse-Gamma shape ``alpha`` (> 2) and scale ``beta`` (> 0)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 2):
            raise ValueError(f"alpha must exceed 2, got {self.alpha}")
        if not (self.beta > 0):
            raise ValueError(f"beta must be positive, got {self.beta}")

    def logpdf(self, x):
        return stats.invgamma.logpdf(x, self.alpha, scale=self.beta)


def ig_moments(p: IgParams) -> tuple[float, float]:
    """Mean beta/(alpha-1) and variance beta^2/((alpha-1)^2 (alpha-2))."""
    a, b = p.alpha, p.beta
    return b / (a - 1), b * b / ((a - 1) ** 2 * (a - 2))


def ig_from_moments(mean: float, variance: float) -> IgParams:
    """Inverse-Gamma with the given mean and variance."""
    if not (mean > 0 and variance > 0):
        raise ValueError(f"mean and variance must be positive, got {mean}, {variance}")
    alpha = mean * mean / variance + 2
    return IgParams(alpha, (alpha - 1) * mean)


def correct(prior: IgParams, y: float, mu: float, h: float = 1.0) -> IgParams:
    """Conjugate update of an Inverse-Gamma prior by one Gaussian return."""
    e = y - mu * h
    return IgParams(prior.alpha + 0.5, prior.beta + e * e / (2 * h))


@dataclass(frozen=True)
class FilterState:
    mean: float
    variance: float
    q: float
    alpha: float
    beta: float


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float
    q: float
    clamped: bool = False

    def ig(self) -> IgParams:
        return IgParams(self.q + 2, (self.q + 1) * self.mean)


def predict_heston(prev: FilterState, params: HestonParams, y: float,
                   mu: Optional[float] = None) -> Prediction:
    """
    Propagate the posterior of nu through one Heston step.

    ``mu`` defaults to ``params.mu``. A non-positive predicted mean is clamped
    to ``NU_FLOOR`` and flagged.
    """
    k, h = params.kappa, params.h
    mu = params.mu if mu is None else mu
    decay = 1 - k * h
    pm = k * params.theta * h + params.rho * params.xi * (y - mu * h) + decay * prev.mean
    clamped = pm <= NU_FLOOR
    if clamped:
        pm = NU_FLOOR
    pv = decay * decay * prev.variance + params.xi ** 2 * (1 - params.rho ** 2) * h * prev.mean
    return Prediction(pm, pv, pm * pm / pv, bool(clamped))


@njit(cache=True)
def _adf_kernel(y, kappa, theta, xi, rho, mu, h, m0, v0, q_fixed):
    n = y.shape[0]
    mean = np.empty(n)
    var = np.empty(n)
    q = np.empty(n)
    alpha = np.empty(n)
    beta = np.empty(n)
    clamped = np.zeros(n, dtype=np.bool_)
    decay = 1.0 - kappa * h
    noise = xi * xi * (1.0 - rho * rho) * h
    pinned = not np.isnan(q_fixed)
    m = m0
    v = v0
    for t in range(n):
        e = y[t] - mu * h
        pm = kappa * theta * h + rho * xi * e + decay * m
        if pm <= 1e-12:
            pm = 1e-12
            clamped[t] = True
        pv = decay * decay * v + noise * m
        qt = q_fixed if pinned else pm * pm / pv
        a_c = qt + 2.5
        b_c = (qt + 1.0) * pm + e * e / (2.0 * h)
        m = b_c / (a_c - 1.0)
        v = m * m / (a_c - 2.0)
        if not (np.isfinite(m) and np.isfinite(v) and np.isfinite(qt) and v > 0.0):
            return mean, var, q, alpha, beta, clamped, t
        mean[t] = m
        var[t] = v
        q[t] = qt
        alpha[t] = a_c
        beta[t] = b_c
    return mean, var, q, alpha, beta, clamped, -1


@dataclass(frozen=True)
class QDiagnostics:
    mean: float
    skewness: float
    counts: np.ndarray
    edges: np.ndarray


def q_diagnostics(q_series, bins: int = 30) -> QDiagnostics:
    """Sample mean, (biased) sample skewness and a fixed-width histogram of Q."""
    q = np.asarray(q_series, dtype=float)
    if q.size == 0:
        raise ValueError("empty Q series")
    sd = q.std()
    skew = 0.0 if sd == 0 or sd < 1e-14 * abs(q.mean()) else float(stats.skew(q))
    counts, edges = np.histogram(q, bins=bins)
    return QDiagnostics(float(q.mean()), skew, counts, edges)


@dataclass(frozen=True)
class FilterOutput:
    """Per-step posterior statistics; index t reflects returns up to t."""

    mean: np.ndarray
    variance: np.ndarray
    q: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    clamped: np.ndarray
    mu: float
    sigma0: float

    def __len__(self) -> int:
        return self.mean.size

    @property
    def predicted_vol(self) -> np.ndarray:
        """sqrt of the corrected mean: the forecast of vol over [t, t+1)."""
        return np.sqrt(self.mean)

    @property
    def q_series(self) -> np.ndarray:
        return self.q

    def state(self, t: int) -> FilterState:
        return FilterState(float(self.mean[t]), float(self.variance[t]), float(self.q[t]),
                           float(self.alpha[t]), float(self.beta[t]))

    def diagnostics(self, bins: int = 30) -> QDiagnostics:
        return q_diagnostics(self.q, bins)


def default_sigma0(y: np.ndarray, n: int = 20) -> float:
    """Sample standard deviation of the first ``n`` returns."""
    head = y[:n]
    s = float(np.std(head, ddof=1)) if head.size > 1 else 0.0
    if not s > 0:
        s = float(np.std(y, ddof=1))
    return s


def resolve_mu(y: np.ndarray, params: HestonParams, mu: Optional[float]) -> float:
    """Per-day drift: the sample mean of returns divided by h unless given."""
    return float(np.mean(y)) / params.h if mu is None else float(mu)


def run_filter(returns, params: HestonParams, sigma0: Optional[float] = None,
               mu: Optional[float] = None, q_fixed: Optional[float] = None,
               strict: bool = True) -> FilterOutput:
    """
    Run the variable-Q filter over a return series.

    Parameters
    ----------
    returns : array-like or ReturnSeries
        Daily log-returns.
    params : HestonParams
    sigma0 : float, optional
        Initial volatility; the initial mean is ``sigma0**2`` and the initial
        variance ``xi**2 * h``. Defaults to :func:`default_sigma0`.
    mu : float, optional
        Drift per day. Defaults to the sample mean of ``returns``.
    q_fixed : float, optional
        Pin Q to a constant instead of computing it from predicted moments.
    strict : bool
        Raise :class:`FilterError` on a non-finite state. Otherwise the output
        is truncated at the failing step and padded with NaN.
    """
    y = np.ascontiguousarray(np.asarray(returns, dtype=float))
    if y.ndim != 1 or y.size < 2:
        raise ValueError("need a 1-d series of at least 2 returns")
    mu = resolve_mu(y, params, mu)
    sigma0 = default_sigma0(y) if sigma0 is None else float(sigma0)
    if not sigma0 > 0:
        raise ValueError("sigma0 must be positive")
    qf = np.nan if q_fixed is None else float(q_fixed)
    mean, var, q, a, b, clamped, fail = _adf_kernel(
        y, params.kappa, params.theta, params.xi, params.rho, mu, params.h,
        sigma0 * sigma0, params.xi ** 2 * params.h, qf)
    if fail >= 0:
        if strict:
            raise FilterError(int(fail))
        for arr in (mean, var, q, a, b):
            arr[fail:] = np.nan
    if clamped.any():
        logger.debug("predicted mean clamped on %d steps", int(clamped.sum()))
    return FilterOutput(mean, var, q, a, b, clamped, mu, sigma0)


def run_filter_constant_q(returns, params: HestonParams, q_const: float,
                          nu0: float, mu: Optional[float] = None) -> np.ndarray:
    """
    Posterior mean of nu with Q held at ``q_const``.

    This is an exponentially weighted average of past returns and squared
    returns with decay ``K = (Q+1)(1-kappa*h)/(Q+3/2)``; ``nu0`` is the mean
    before the first return.
    """
    if not q_const > 0:
        raise ValueError("q_const must be positive")
    y = np.asarray(returns, dtype=float)
    mu = resolve_mu(y, params, mu)
    k, h = params.kappa, params.h
    a, b = q_const + 1.0, q_const + 1.5
    big_k = a * (1 - k * h) / b
    if big_k >= 1:
        raise ValueError(f"constant-Q decay K={big_k} is not contractive")
    e = y - mu * h
    drive = (a * (k * params.theta * h + params.rho * params.xi * e) + e * e / (2 * h)) / b
    out, _ = lfilter([1.0], [1.0, -big_k], drive, zi=[big_k * float(nu0)])
    return out
