"""
Discrete-time Heston dynamics in daily units.

The scheme is explicit Euler-Maruyama with the leverage term written on the
realized return innovation:

    X[n]  = X[n-1] + mu*h + sqrt(nu[n-1]*h) * Zi[n]
    nu[n] = max(0, nu[n-1] + kappa*(theta - nu[n-1])*h
                   + rho*xi*(Y[n] - mu*h)
                   + xi*sqrt(nu[n-1]*(1 - rho**2)*h) * Zs[n])

with Zi, Zs independent standard normals and Y[n] = X[n] - X[n-1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

TRADING_DAYS = 252


@dataclass(frozen=True)
class HestonParams:
    """
    Heston parameters in daily units.

    Parameters
    ----------
    kappa : float
        Mean-reversion rate per day.
    theta : float
        Long-run daily variance.
    xi : float
        Volatility of variance, daily units.
    rho : float
        Correlation between return and variance shocks.
    mu : float
        Mean log-return per day.
    h : float
        Step size in days.
    """

    kappa: float
    theta: float
    xi: float
    rho: float
    mu: float = 0.0
    h: float = 1.0

    def __post_init__(self):
        for name in ("kappa", "theta", "xi", "rho", "mu", "h"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.kappa <= 0 or self.theta <= 0 or self.xi <= 0 or self.h <= 0:
            raise ValueError(
                f"kappa, theta, xi, h must be positive: {self.kappa}, {self.theta}, {self.xi}, {self.h}"
            )
        if abs(self.rho) > 1:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")
        if 1 - self.kappa * self.h <= 0:
            raise ValueError(f"kappa*h must be below 1, got {self.kappa * self.h}")

    @property
    def feller(self) -> bool:
        return 2 * self.kappa * self.theta > self.xi ** 2

    def replace(self, **changes) -> "HestonParams":
        kw = {k: getattr(self, k) for k in ("kappa", "theta", "xi", "rho", "mu", "h")}
        kw.update(changes)
        return HestonParams(**kw)

    def as_dict(self) -> dict:
        return {"kappa": self.kappa, "theta": self.theta, "xi": self.xi,
                "rho": self.rho, "mu": self.mu, "h": self.h}


# Gatheral-style annualized set used for the simulation studies
GATHERAL_ANNUAL = {"kappa": 2.75, "theta": 0.035, "xi": 0.425, "rho": -0.4644, "mu": 0.05}


def gatheral_daily() -> HestonParams:
    """The Gatheral parameter set converted to daily units (divide by 252)."""
    a = GATHERAL_ANNUAL
    return HestonParams(
        kappa=a["kappa"] / TRADING_DAYS,
        theta=a["theta"] / TRADING_DAYS,
        xi=a["xi"] / TRADING_DAYS,
        rho=a["rho"],
        mu=a["mu"] / TRADING_DAYS,
    )


def annualize(params: HestonParams) -> dict:
    """Scale kappa, theta, xi and mu by 252 trading days; rho is unchanged."""
    scale = TRADING_DAYS / params.h
    return {
        "kappa": params.kappa * scale,
        "theta": params.theta * scale,
        "xi": params.xi * scale,
        "rho": params.rho,
        "mu": params.mu * scale,
    }


@dataclass(frozen=True)
class SimPath:
    """One simulated path; ``returns[i] = log_prices[i+1] - log_prices[i]``."""

    log_prices: np.ndarray
    variances: np.ndarray
    returns: np.ndarray
    seed: Optional[int]
    truncation_count: int

    @property
    def latent_vol(self) -> np.ndarray:
        """sqrt(nu) aligned with ``returns`` (nu after each return)."""
        return np.sqrt(self.variances[1:])


def _euler(params: HestonParams, z_i: np.ndarray, z_s: np.ndarray,
           nu0, x0) -> tuple[np.ndarray, np.ndarray, int]:
    """Run the scheme on normals shaped (n_steps, ...) ; returns X, nu, clip count."""
    k, th, xi, rho, mu, h = (params.kappa, params.theta, params.xi,
                             params.rho, params.mu, params.h)
    n = z_i.shape[0]
    shape = (n + 1,) + z_i.shape[1:]
    x = np.empty(shape)
    nu = np.empty(shape)
    x[0] = x0
    nu[0] = nu0
    sq_h = math.sqrt(h)
    sq_perp = math.sqrt(max(0.0, 1.0 - rho * rho) * h)
    clipped = 0
    for t in range(n):
        v = nu[t]
        sv = np.sqrt(v)
        eps = sv * sq_h * z_i[t]
        x[t + 1] = x[t] + mu * h + eps
        nxt = v + k * (th - v) * h + rho * xi * eps + xi * sv * sq_perp * z_s[t]
        neg = nxt < 0
        clipped += int(np.count_nonzero(neg))
        nu[t + 1] = np.where(neg, 0.0, nxt)
    return x, nu, clipped


def simulate(params: HestonParams, n_steps: int, nu0: Optional[float] = None,
             x0: float = 0.0, seed: Optional[int] = None) -> SimPath:
    """
    Simulate one path of ``n_steps`` steps.

    ``nu0`` defaults to ``params.theta``. Normals are drawn from
    ``numpy.random.default_rng(seed)`` as an (n_steps, 2) block, column 0
    driving returns and column 1 the independent variance shock.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    nu0 = params.theta if nu0 is None else float(nu0)
    if nu0 < 0:
        raise ValueError("nu0 must be non-negative")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_steps, 2))
    x, nu, clipped = _euler(params, z[:, 0], z[:, 1], nu0, x0)
    return SimPath(log_prices=x, variances=nu, returns=np.diff(x),
                   seed=seed, truncation_count=clipped)


def simulate_many(params: HestonParams, n_steps: int, n_paths: int,
                  nu0: Optional[float] = None, x0: float = 0.0,
                  seed: Optional[int] = None) -> tuple[np.ndarray, np.ndarray, int]:
    """Vectorized over paths: returns (log_prices, variances, clip count), each (n_steps+1, n_paths)."""
    nu0 = params.theta if nu0 is None else float(nu0)
    if nu0 < 0:
        raise ValueError("nu0 must be non-negative")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_steps, 2, n_paths))
    return _euler(params, z[:, 0], z[:, 1], nu0, x0)


def sim_dates(n: int, start: str = "2000-01-03") -> np.ndarray:
    """Synthetic business-day calendar for simulated paths."""
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return np.busday_offset(first, np.arange(n), roll="forward")
