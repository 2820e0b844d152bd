"""
Heston parameter estimation through the filter, and the PDV <-> Heston map.

``calibrate`` minimizes the squared distance between the filter's predicted
volatility and an observed target (realized or implied vol, or a simulated
latent path) with a multistart Nelder-Mead search. Parameters live in an
unconstrained space: each coordinate is a logistic image of a box, in log
space for kappa, theta and xi.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit
from scipy.stats import qmc

from .adf import _adf_kernel, default_sigma0, resolve_mu, run_filter
from .heston import HestonParams

logger = logging.getLogger(__name__)

PARAM_NAMES = ("kappa", "theta", "xi", "rho")
# kappa, theta, xi are searched in log space, rho linearly
_LOG_SCALE = (True, True, True, False)


class CalibrationError(RuntimeError):
    pass


def r_squared(predicted, actual) -> float:
    """Coefficient of determination 1 - SSE/SST."""
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape or a.size < 2:
        raise ValueError("need equal-length series of at least 2 points")
    sst = float(np.sum((a - a.mean()) ** 2))
    if sst == 0:
        raise ValueError("actual series is constant")
    return 1.0 - float(np.sum((a - p) ** 2)) / sst


@dataclass(frozen=True)
class CalibrationConfig:
    """
    Search settings.

    Boxes are ``(low, high)`` in natural units. ``None`` entries are filled
    from the data: theta relative to the sample variance ``s2`` of returns,
    xi relative to the sample volatility ``s``, kappa up to ``1/h``.
    ``*_bounds`` are hard limits, ``*_init`` the region sampled for starts.
    The default theta box is ``s2 / theta_span`` to ``s2 * theta_span``: the
    loss is nearly flat in theta, so a wider box lets some samples collapse
    theta onto the lower edge.
    """

    kappa_bounds: Optional[tuple] = None
    theta_bounds: Optional[tuple] = None
    xi_bounds: Optional[tuple] = None
    rho_bounds: tuple = (-0.999, 0.999)
    kappa_init: tuple = (0.002, 0.1)
    theta_init: Optional[tuple] = None
    xi_init: Optional[tuple] = None
    rho_init: tuple = (-0.9, 0.5)
    n_starts: int = 8
    restarts: int = 1
    maxiter: int = 1500
    xatol: float = 1e-7
    fatol: float = 1e-12
    loss_space: Literal["vol", "variance"] = "vol"
    mu: Optional[float] = None
    sigma0: Optional[float] = None
    h: float = 1.0
    theta_span: float = 100.0

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.loss_space not in ("vol", "variance"):
            raise ValueError(f"loss_space must be 'vol' or 'variance', got {self.loss_space!r}")
        if self.h <= 0:
            raise ValueError("h must be positive")
        if not self.theta_span > 4:
            raise ValueError("theta_span must exceed 4 so the theta start box fits")

    def resolve(self, returns: np.ndarray) -> "CalibrationConfig":
        """Fill data-dependent boxes from the return sample."""
        s2 = float(np.var(returns)) / self.h
        s = math.sqrt(s2)
        out = replace(
            self,
            kappa_bounds=self.kappa_bounds or (1e-6 / self.h, 0.999 / self.h),
            theta_bounds=self.theta_bounds or (s2 / self.theta_span, s2 * self.theta_span),
            xi_bounds=self.xi_bounds or (s * 1e-4, s * 10),
            theta_init=self.theta_init or (s2 / 4, s2 * 4),
            xi_init=self.xi_init or (s * 0.02, s * 0.5),
        )
        for name in PARAM_NAMES:
            lo, hi = getattr(out, f"{name}_bounds")
            ilo, ihi = getattr(out, f"{name}_init")
            if not (lo < hi) or not (lo <= ilo < ihi <= hi):
                raise ValueError(f"inconsistent {name} boxes: bounds {(lo, hi)}, init {(ilo, ihi)}")
        if out.kappa_bounds[1] >= 1.0 / self.h or out.kappa_bounds[0] <= 0:
            raise ValueError("kappa bounds must lie inside (0, 1/h)")
        if out.rho_bounds[0] < -1 or out.rho_bounds[1] > 1:
            raise ValueError("rho bounds must lie inside [-1, 1]")
        return out


def _to_unit_space(values):
    u = np.array(values, dtype=float)
    u[..., :3] = np.log(u[..., :3])
    return u


def _from_unit_space(u):
    v = np.array(u, dtype=float)
    v[..., :3] = np.exp(v[..., :3])
    return v


class _Transform:
    """Maps R^4 onto the open parameter box."""

    def __init__(self, cfg: CalibrationConfig):
        lo, hi = [], []
        for name, use_log in zip(PARAM_NAMES, _LOG_SCALE):
            a, b = getattr(cfg, f"{name}_bounds")
            lo.append(math.log(a) if use_log else a)
            hi.append(math.log(b) if use_log else b)
        self.lo, self.hi = np.array(lo), np.array(hi)

    def to_params(self, z: np.ndarray) -> np.ndarray:
        u = self.lo + (self.hi - self.lo) * expit(z)
        return _from_unit_space(u)

    def to_z(self, values: np.ndarray) -> np.ndarray:
        u = _to_unit_space(values)
        frac = np.clip((u - self.lo) / (self.hi - self.lo), 1e-12, 1 - 1e-12)
        return logit(frac)


def _predict(y, vals, mu, h, sigma0):
    k, th, xi, rho = vals
    mean, _, _, _, _, _, fail = _adf_kernel(y, k, th, xi, rho, mu, h,
                                            sigma0 * sigma0, xi * xi * h, np.nan)
    return mean, fail


def _sse(mean, target, loss_space) -> float:
    pred = np.sqrt(mean) if loss_space == "vol" else mean
    r = pred - target
    return float(r @ r)


def _target_in_space(target, loss_space):
    t = np.asarray(target, dtype=float)
    return t if loss_space == "vol" else t * t


def adf_loss(params: HestonParams, returns, target,
             config: CalibrationConfig = CalibrationConfig()) -> float:
    """
    Sum of squared residuals between the filter prediction and ``target``.

    ``target`` is volatility. In "vol" space residuals are sqrt(mean) - target,
    in "variance" space mean - target**2. Non-finite filter states give +inf.
    """
    y = np.ascontiguousarray(np.asarray(returns, dtype=float))
    tgt = np.asarray(target, dtype=float)
    if y.shape != tgt.shape:
        raise ValueError("returns and target must be aligned")
    mu = resolve_mu(y, params, config.mu)
    sigma0 = default_sigma0(y) if config.sigma0 is None else config.sigma0
    mean, fail = _predict(y, (params.kappa, params.theta, params.xi, params.rho),
                          mu, params.h, sigma0)
    if fail >= 0:
        return math.inf
    return _sse(mean, _target_in_space(tgt, config.loss_space), config.loss_space)


@dataclass
class CalibrationResult:
    params: HestonParams
    loss: float
    r2_in: float
    r2_out: Optional[float] = None
    std_errors: Optional[dict] = None
    trace: list = field(default_factory=list)
    start_losses: list = field(default_factory=list)
    final_losses: list = field(default_factory=list)
    n_evals: int = 0

    def as_dict(self) -> dict:
        d = {**{k: getattr(self.params, k) for k in PARAM_NAMES},
             "log_theta": math.log(self.params.theta), "mu": self.params.mu,
             "h": self.params.h, "loss": self.loss, "r2_in": self.r2_in,
             "r2_out": self.r2_out, "n_evals": self.n_evals}
        for k, v in (self.std_errors or {}).items():
            d[f"se_{k}"] = v
        return d


def filter_predictions(params: HestonParams, returns, sigma0: Optional[float] = None,
                       mu: Optional[float] = None) -> np.ndarray:
    """Predicted volatility sqrt(E[nu | returns up to t]) at every step."""
    return run_filter(returns, params, sigma0=sigma0, mu=mu).predicted_vol


def evaluate(params: HestonParams, returns, target, n_in: Optional[int] = None,
             sigma0: Optional[float] = None, mu: Optional[float] = None):
    """
    Run the filter once over the whole series and score it.

    The first ``n_in`` points are in-sample (drift and sigma0 default to
    in-sample statistics); the remainder is scored out-of-sample with the
    filter state carried forward. Returns (predicted_vol, r2_in, r2_out).
    """
    y = np.asarray(returns, dtype=float)
    tgt = np.asarray(target, dtype=float)
    n_in = y.size if n_in is None else int(n_in)
    head = y[:n_in]
    mu = resolve_mu(head, params, mu)
    sigma0 = default_sigma0(head) if sigma0 is None else sigma0
    pred = filter_predictions(params, y, sigma0=sigma0, mu=mu)
    r2_in = r_squared(pred[:n_in], tgt[:n_in])
    r2_out = r_squared(pred[n_in:], tgt[n_in:]) if y.size - n_in >= 2 else None
    return pred, r2_in, r2_out


def calibrate(returns, target, config: CalibrationConfig = CalibrationConfig(),
              seed: Optional[int] = 0, oos_returns=None, oos_target=None
              ) -> CalibrationResult:
    """
    Fit (kappa, theta, xi, rho) by multistart Nelder-Mead on :func:`adf_loss`.

    Starting points are a scrambled Latin hypercube over the ``*_init``
    boxes drawn with ``seed``. Each start is re-launched ``config.restarts``
    times from its own optimum. The drift stays at ``config.mu`` or the
    in-sample mean.
    """
    y = np.ascontiguousarray(np.asarray(returns, dtype=float))
    tgt_vol = np.asarray(target, dtype=float)
    if y.shape != tgt_vol.shape or y.size < 3:
        raise ValueError("returns and target must be aligned with at least 3 points")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(tgt_vol))):
        raise ValueError("returns and target must be finite")
    cfg = config.resolve(y)
    h = cfg.h
    mu = float(np.mean(y)) / h if cfg.mu is None else float(cfg.mu)
    sigma0 = default_sigma0(y) if cfg.sigma0 is None else cfg.sigma0
    tgt = _target_in_space(tgt_vol, cfg.loss_space)
    sst = float(np.sum((tgt - tgt.mean()) ** 2)) or 1.0
    tr = _Transform(cfg)
    n_evals = 0

    def objective(z):
        nonlocal n_evals
        n_evals += 1
        mean, fail = _predict(y, tr.to_params(z), mu, h, sigma0)
        if fail >= 0:
            return math.inf
        return _sse(mean, tgt, cfg.loss_space) / sst

    sampler = qmc.LatinHypercube(d=4, seed=np.random.default_rng(seed))
    unit = sampler.random(cfg.n_starts)
    ilo = np.array([getattr(cfg, f"{n}_init")[0] for n in PARAM_NAMES])
    ihi = np.array([getattr(cfg, f"{n}_init")[1] for n in PARAM_NAMES])
    lo_u, hi_u = _to_unit_space(ilo), _to_unit_space(ihi)
    starts = _from_unit_space(lo_u + (hi_u - lo_u) * unit)

    best = None
    start_losses, final_losses = [], []
    for i, x0 in enumerate(starts):
        z = tr.to_z(x0)
        f0 = objective(z)
        start_losses.append(f0 * sst)
        trace = [f0]

        def record(intermediate_result):
            trace.append(float(intermediate_result.fun))

        fz = f0
        for _ in range(1 + cfg.restarts):
            res = minimize(objective, z, method="Nelder-Mead", callback=record,
                           options={"maxiter": cfg.maxiter, "xatol": cfg.xatol,
                                    "fatol": cfg.fatol, "adaptive": True})
            if res.fun <= fz:
                z, fz = res.x, float(res.fun)
        final_losses.append(fz * sst)
        logger.debug("start %d: loss %.6g -> %.6g", i, f0, fz)
        # ties keep the earlier start
        if np.isfinite(fz) and (best is None or fz < best[1]):
            best = (z, fz, trace)

    if best is None:
        raise CalibrationError("every start produced an infinite loss")
    z, fz, trace = best
    k, th, xi, rho = (float(v) for v in tr.to_params(z))
    params = HestonParams(k, th, xi, rho, mu=mu, h=h)
    mean, _ = _predict(y, (k, th, xi, rho), mu, h, sigma0)
    r2_in = r_squared(np.sqrt(mean), tgt_vol)

    r2_out = None
    if oos_returns is not None:
        y_all = np.concatenate([y, np.asarray(oos_returns, dtype=float)])
        t_all = np.concatenate([tgt_vol, np.asarray(oos_target, dtype=float)])
        _, _, r2_out = evaluate(params, y_all, t_all, n_in=y.size, sigma0=sigma0, mu=mu)

    return CalibrationResult(params=params, loss=fz * sst, r2_in=r2_in, r2_out=r2_out,
                             trace=[t * sst for t in trace], start_losses=start_losses,
                             final_losses=final_losses, n_evals=n_evals)


@dataclass(frozen=True)
class ImpliedHeston:
    kappa: float
    theta: float
    xi: float
    rho: float
    q: float
    b: float


@dataclass(frozen=True)
class AdfCoefficients:
    """Constant-Q filter written as PDV coefficients (zero drift, infinite history)."""

    beta0: float
    lambda_beta1: float
    lambda_beta2: float
    decay: float
    s2: float


def pdv_implied_heston(beta0: float, lambda_beta1: float, lambda_beta2: float,
                       decay: float, s2: float, h: float = 1.0) -> ImpliedHeston:
    """
    Invert fitted PDV coefficients into Heston parameters.

    ``decay`` is exp(-lambda). The map matches the constant-Q filter term by
    term and uses the stationary one-step variance to split rho from xi.
    """
    if not lambda_beta2 > 0:
        raise ValueError("lambda*beta2 must be positive")
    if not 0 < decay < 1:
        raise ValueError("decay exp(-lambda) must lie in (0, 1)")
    if not s2 > 0:
        raise ValueError("s2 must be positive")
    b = 1.0 / (2 * h * lambda_beta2)
    q = b - 1.5
    if not q > 0:
        raise ValueError(f"implied Q={q} is not positive")
    kappa = (1 - decay * b / (q + 1)) / h
    if not kappa > 0:
        raise ValueError(f"implied kappa={kappa} is not positive (decay too large for B={b})")
    theta = beta0 * (1 - decay) * b / ((q + 1) * kappa * h)
    lev = b * lambda_beta1 / (q + 1)
    if not theta > 0:
        raise ValueError(f"implied theta={theta} is not positive")
    xi = math.sqrt(kappa * (2 - kappa * h) / theta * s2 + lev * lev)
    rho = lev / xi
    if abs(rho) > 1:
        raise ValueError(f"implied rho={rho} outside [-1, 1] (xi={xi})")
    return ImpliedHeston(kappa, theta, xi, rho, q, b)


def heston_implied_adf_coeffs(params: HestonParams, q_bar: float) -> AdfCoefficients:
    """PDV-equivalent coefficients of the constant-Q filter at ``q_bar``."""
    if not q_bar > 0:
        raise ValueError("q_bar must be positive")
    k, th, xi, rho, h = params.kappa, params.theta, params.xi, params.rho, params.h
    b = q_bar + 1.5
    decay = (q_bar + 1) * (1 - k * h) / b
    if decay >= 1:
        raise ValueError(f"K={decay} is not contractive")
    return AdfCoefficients(
        beta0=(q_bar + 1) * k * th * h / ((1 - decay) * b),
        lambda_beta1=(q_bar + 1) * rho * xi / b,
        lambda_beta2=1.0 / (2 * h * b),
        decay=decay,
        s2=xi * xi * (1 - rho * rho) * th / (k * (2 - k * h)),
    )


def mean_q(params: HestonParams, returns, sigma0: Optional[float] = None,
           mu: Optional[float] = None) -> float:
    """In-sample average of Q under the variable-Q filter."""
    return float(np.mean(run_filter(returns, params, sigma0=sigma0, mu=mu).q))
