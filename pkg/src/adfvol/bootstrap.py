"""
Simulation-based standard errors for calibrated Heston parameters.

Both experiments simulate paths from a fixed parameter vector and re-run
:func:`adfvol.calibration.calibrate` on each. The parametric bootstrap starts
from estimated parameters; the standard bootstrap starts from known true
parameters and so traces out the actual sampling distribution.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .calibration import CalibrationConfig, CalibrationError, calibrate
from .adf import FilterError
from .heston import HestonParams, simulate

logger = logging.getLogger(__name__)

REPORT_PARAMS = ("kappa", "theta", "log_theta", "xi", "rho")

TargetMode = Literal["latent", "realized"]


@dataclass(frozen=True)
class BootstrapSettings:
    """Replicate construction. ``substeps`` only matters for the realized target."""

    target: TargetMode = "latent"
    substeps: int = 78
    nu0: Optional[float] = None

    def __post_init__(self):
        if self.target not in ("latent", "realized"):
            raise ValueError(f"target must be 'latent' or 'realized', got {self.target!r}")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


@dataclass
class BootstrapReport:
    mode: str
    params: HestonParams
    n_steps: int
    estimates: dict
    failures: list = field(default_factory=list)

    def __post_init__(self):
        if self.n_ok < 2:
            raise ValueError(f"need at least 2 successful replicates, got {self.n_ok}")

    @property
    def n_ok(self) -> int:
        return len(self.estimates["kappa"])

    @property
    def n_failed(self) -> int:
        return len(self.failures)

    @property
    def mean(self) -> dict:
        return {k: float(np.mean(self.estimates[k])) for k in REPORT_PARAMS}

    @property
    def se(self) -> dict:
        """Sample standard deviation (ddof=1) over successful replicates."""
        return {k: float(np.std(self.estimates[k], ddof=1)) for k in REPORT_PARAMS}

    def interval(self, level: float = 0.95) -> dict:
        a = 100 * (1 - level) / 2
        return {k: tuple(float(v) for v in np.percentile(self.estimates[k], [a, 100 - a]))
                for k in REPORT_PARAMS}

    def summary_rows(self) -> list[dict]:
        mean, se, ci = self.mean, self.se, self.interval()
        return [{"param": k, "mean": mean[k], "se": se[k], "p2.5": ci[k][0],
                 "p97.5": ci[k][1], "n_ok": self.n_ok, "n_failed": self.n_failed}
                for k in REPORT_PARAMS]

    def replicate_rows(self) -> list[dict]:
        idx = self.estimates["replicate"]
        return [{"replicate": int(idx[i]), **{k: float(self.estimates[k][i]) for k in REPORT_PARAMS}}
                for i in range(self.n_ok)]


def simulate_replicate(params: HestonParams, n_steps: int, seed,
                       settings: BootstrapSettings = BootstrapSettings()):
    """
    One synthetic (returns, target vol) pair.

    ``latent`` uses sqrt(nu) of the simulated path. ``realized`` simulates
    ``substeps`` Euler steps per period and uses the square root of the sum of
    squared intra-period returns.
    """
    if settings.target == "latent":
        path = simulate(params, n_steps, nu0=settings.nu0, seed=seed)
        return path.returns, path.latent_vol
    m = settings.substeps
    fine = simulate(params.replace(h=params.h / m), n_steps * m, nu0=settings.nu0, seed=seed)
    r = fine.returns.reshape(n_steps, m)
    return r.sum(axis=1), np.sqrt((r * r).sum(axis=1) / params.h)


def _one(args):
    i, params, n_steps, config, settings, seq = args
    sim_seq, cal_seq = seq.spawn(2)
    y, tgt = simulate_replicate(params, n_steps, np.random.default_rng(sim_seq), settings)
    try:
        res = calibrate(y, tgt, config, seed=np.random.default_rng(cal_seq))
    except (CalibrationError, FilterError, ValueError, FloatingPointError) as exc:
        return i, None, f"{type(exc).__name__}: {exc}"
    p = res.params
    return i, (p.kappa, p.theta, math.log(p.theta), p.xi, p.rho), None


def _run(mode: str, params: HestonParams, n_steps: int, n_reps: int,
         config: CalibrationConfig, seed, settings: BootstrapSettings,
         n_jobs: int) -> BootstrapReport:
    if n_reps < 2:
        raise ValueError("n_reps must be >= 2")
    if n_reps < 20:
        warnings.warn(f"only {n_reps} replicates: percentile intervals are very wide/unstable",
                      RuntimeWarning, stacklevel=3)
    # replicate i always gets child i of the seed sequence, whatever the scheduling
    seqs = np.random.SeedSequence(seed).spawn(n_reps)
    jobs = [(i, params, n_steps, config, settings, seqs[i]) for i in range(n_reps)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_one, jobs, chunksize=max(1, n_reps // (4 * n_jobs))))
    else:
        results = [_one(j) for j in jobs]

    rows, failures, ok_idx = [], [], []
    for i, est, err in results:
        if est is None:
            failures.append((i, err))
            logger.warning("replicate %d failed: %s", i, err)
        else:
            rows.append(est)
            ok_idx.append(i)
    if len(rows) < 2:
        raise CalibrationError(f"only {len(rows)} of {n_reps} replicates calibrated")
    arr = np.array(rows)
    estimates = {k: arr[:, j] for j, k in enumerate(REPORT_PARAMS)}
    estimates["replicate"] = np.array(ok_idx)
    return BootstrapReport(mode, params, n_steps, estimates, failures)


def parametric_bootstrap(fitted: HestonParams, n_steps: int, n_reps: int = 200,
                         config: CalibrationConfig = CalibrationConfig(), seed=0,
                         settings: BootstrapSettings = BootstrapSettings(),
                         n_jobs: int = 1) -> BootstrapReport:
    """Re-estimate on paths simulated from fitted parameters."""
    return _run("parametric", fitted, n_steps, n_reps, config, seed, settings, n_jobs)


def standard_bootstrap(true_params: HestonParams, n_steps: int, n_reps: int = 200,
                       config: CalibrationConfig = CalibrationConfig(), seed=0,
                       settings: BootstrapSettings = BootstrapSettings(),
                       n_jobs: int = 1) -> BootstrapReport:
    """Re-estimate on paths simulated from known true parameters."""
    return _run("standard", true_params, n_steps, n_reps, config, seed, settings, n_jobs)


def compare_bootstraps(a: BootstrapReport, b: BootstrapReport) -> dict:
    """Per-parameter ratio of standard errors, a over b."""
    sa, sb = a.se, b.se
    if set(sa) != set(sb):
        raise ValueError("reports cover different parameters")
    out = {}
    for k in sa:
        if sb[k] == 0:
            raise ZeroDivisionError(f"zero standard error for {k} in the denominator report")
        out[k] = sa[k] / sb[k]
    return out
