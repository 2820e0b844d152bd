"""
Exponential-kernel path-dependent volatility regressions.

Features are kernel sums over past returns with weights lambda*exp(-lambda*tau):

    r1[t]       = sum_{i<=t} lambda e^{-lambda (t-i)} Y[i]
    sigma_sq[t] = sum_{i<=t} lambda e^{-lambda (t-i)} Y[i]^2

The baseline regresses variance on (1, r1, sigma_sq); the two-factor variant
regresses volatility on (1, r1, sqrt(sigma_sq)).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import lsq_linear
from scipy.signal import lfilter

logger = logging.getLogger(__name__)


def default_lambda_grid(n: int = 50, lo: float = 0.005, hi: float = 0.5) -> np.ndarray:
    return np.geomspace(lo, hi, n)


@dataclass(frozen=True)
class PdvFeatures:
    lam: float
    r1: np.ndarray
    sigma_sq: np.ndarray

    def __len__(self) -> int:
        return self.r1.size

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.sigma_sq)


def exp_kernel_features(returns, lam: float) -> PdvFeatures:
    """Kernel-weighted sums via the recursion f[t] = e^{-lambda} f[t-1] + lambda g(Y[t])."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    y = np.asarray(returns, dtype=float)
    a = [1.0, -np.exp(-lam)]
    r1 = lfilter([lam], a, y)
    s2 = lfilter([lam], a, y * y)
    return PdvFeatures(float(lam), r1, np.maximum(s2, 0.0))


@dataclass(frozen=True)
class PdvCoefficients:
    """Variance regression sigma^2 = beta0 + beta1*r1 + beta2*sigma_sq."""

    beta0: float
    beta1: float
    beta2: float
    lam: float
    s2: float
    sse: float = float("nan")

    @property
    def decay(self) -> float:
        return float(np.exp(-self.lam))

    @property
    def lambda_beta1(self) -> float:
        return self.lam * self.beta1

    @property
    def lambda_beta2(self) -> float:
        return self.lam * self.beta2


@dataclass(frozen=True)
class GuyonCoefficients:
    """Volatility regression sigma = c0 + c1*r1 + c2*sqrt(sigma_sq)."""

    c0: float
    c1: float
    c2: float
    lam: float
    s2: float
    sse: float = float("nan")


def _box_lstsq(X: np.ndarray, y: np.ndarray, lb, ub) -> tuple[np.ndarray, float]:
    """Bounded least squares with column scaling; degenerate columns are pinned at 0."""
    n, p = X.shape
    coef = np.zeros(p)
    keep = np.ones(p, dtype=bool)
    for j in range(1, p):
        col = X[:, j]
        if np.ptp(col) <= 1e-14 * max(np.abs(col).max(), 1e-300):
            keep[j] = False
    if not keep.all():
        warnings.warn(f"rank-deficient design: constant feature columns {np.flatnonzero(~keep).tolist()}"
                      " pinned to zero", RuntimeWarning, stacklevel=3)
    Xk = X[:, keep]
    scale = np.linalg.norm(Xk, axis=0)
    scale[scale == 0] = 1.0
    lbk, ubk = np.asarray(lb)[keep] * scale, np.asarray(ub)[keep] * scale
    ystd = np.std(y) or 1.0
    sol = lsq_linear(Xk / scale, y / ystd, bounds=(lbk / ystd, ubk / ystd),
                     method="bvls", tol=1e-14, lsmr_tol=None)
    coef[keep] = sol.x * ystd / scale
    # undoing the scaling can push an active bound a few ulps outside the box
    coef = np.clip(coef, lb, ub)
    resid = y - X @ coef
    return coef, float(resid @ resid)


def _grid_search(returns, target, lambda_grid, design, lb, ub):
    y = np.asarray(returns, dtype=float)
    tgt = np.asarray(target, dtype=float)
    if y.shape != tgt.shape:
        raise ValueError(f"returns and target lengths differ: {y.size} vs {tgt.size}")
    if y.size <= 3:
        raise ValueError("need more than 3 observations")
    grid = np.sort(np.asarray(
        default_lambda_grid() if lambda_grid is None else lambda_grid, dtype=float))
    if grid.size == 0:
        raise ValueError("empty lambda grid")
    best = None
    for lam in grid:
        f = exp_kernel_features(y, lam)
        coef, sse = _box_lstsq(design(f), tgt, lb, ub)
        # strict comparison: ties go to the smaller lambda
        if best is None or sse < best[2]:
            best = (lam, coef, sse)
    lam, coef, sse = best
    return float(lam), coef, sse, sse / (y.size - 3)


def fit_pdv(returns, target_variance, lambda_grid: Optional[Sequence[float]] = None
            ) -> PdvCoefficients:
    """
    Fit the variance baseline with beta0 >= 0, beta1 <= 0, beta2 >= 0.

    For each lambda the bounded least-squares problem is solved exactly; the
    lambda with the smallest SSE wins. ``s2`` is SSE/(n-3).
    """
    def design(f):
        return np.column_stack([np.ones(len(f)), f.r1, f.sigma_sq])

    lam, c, sse, s2 = _grid_search(returns, target_variance, lambda_grid, design,
                                   [0, -np.inf, 0], [np.inf, 0, np.inf])
    return PdvCoefficients(c[0], c[1], c[2], lam, s2, sse)


def fit_guyon_two_factor(returns, target_vol, lambda_grid: Optional[Sequence[float]] = None
                         ) -> GuyonCoefficients:
    """Fit volatility on (1, r1, Sigma) with c0 >= 0, c1 <= 0, 0 <= c2 <= 1."""
    def design(f):
        return np.column_stack([np.ones(len(f)), f.r1, f.sigma])

    lam, c, sse, s2 = _grid_search(returns, target_vol, lambda_grid, design,
                                   [0, -np.inf, 0], [np.inf, 0, 1])
    return GuyonCoefficients(c[0], c[1], c[2], lam, s2, sse)


def predict_pdv(coeffs: Union[PdvCoefficients, GuyonCoefficients],
                features: PdvFeatures) -> tuple[np.ndarray, np.ndarray]:
    """
    Evaluate a fitted regression.

    Returns ``(prediction, floored)``: variance for :class:`PdvCoefficients`,
    volatility for :class:`GuyonCoefficients`. Negative predictions are set
    to 0 and marked in the boolean ``floored`` mask.
    """
    if isinstance(coeffs, GuyonCoefficients):
        raw = coeffs.c0 + coeffs.c1 * features.r1 + coeffs.c2 * features.sigma
    else:
        raw = coeffs.beta0 + coeffs.beta1 * features.r1 + coeffs.beta2 * features.sigma_sq
    floored = raw < 0
    return np.where(floored, 0.0, raw), floored
