"""
Command-line entry point.

Every command reads a flat ``key = value`` config file (``#`` starts a
comment); command-line flags override it. When ``returns_path`` is empty the
commands work on a simulated Heston path built from the config parameters and
``seed``, with the latent volatility as target.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .adf import FilterError, run_filter
from .bootstrap import BootstrapSettings, parametric_bootstrap, standard_bootstrap
from .calibration import (CalibrationConfig, CalibrationError, calibrate, evaluate,
                          heston_implied_adf_coeffs, mean_q, pdv_implied_heston)
from .heston import HestonParams, annualize, gatheral_daily, sim_dates, simulate
from .pdv import default_lambda_grid, exp_kernel_features, fit_pdv, predict_pdv
from .timeseries import DataError, TargetSeries, join, join_and_split, load_csv, log_returns

logger = logging.getLogger("adfvol")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(Exception):
    """Bad configuration or missing input; maps to exit code 2."""


_G = gatheral_daily()

# key: (default, type, description). Empty string means "not set".
CONFIG_KEYS: dict[str, tuple] = {
    "returns_path": ("", str, "CSV with returns or prices; empty = simulate a path"),
    "returns_column": ("return", str, "value column in returns_path"),
    "returns_kind": ("returns", str, "returns | prices"),
    "target_path": ("", str, "CSV with the volatility target; required with returns_path"),
    "target_column": ("rv", str, "value column in target_path"),
    "target_kind": ("realized_vol", str, "realized_vol | realized_variance | implied_vol | vix"),
    "date_column": ("date", str, "date column name in both CSVs"),
    "units": ("daily", str, "daily | annualized, for volatility-like targets"),
    "split_date": ("", str, "first out-of-sample date (ISO); empty = all in-sample"),
    "params_path": ("", str, "key,value CSV with kappa/theta/xi/rho[/mu/h]; overrides the values below"),
    "kappa": (_G.kappa, float, "mean reversion per day"),
    "theta": (_G.theta, float, "long-run daily variance"),
    "xi": (_G.xi, float, "vol of variance, daily units"),
    "rho": (_G.rho, float, "return/variance correlation"),
    "mu": (_G.mu, float, "drift per day used when simulating"),
    "h": (1.0, float, "step size in days"),
    "sigma0": ("", float, "initial filter vol; empty = std of the first 20 returns"),
    "n_steps": (2500, int, "length of simulated paths"),
    "nu0": ("", float, "initial simulated variance; empty = theta"),
    "seed": (0, int, "master seed for simulation, calibration and bootstrap"),
    "loss_space": ("vol", str, "vol | variance residuals in calibration"),
    "n_starts": (8, int, "calibration multistart count"),
    "maxiter": (1500, int, "Nelder-Mead iterations per run"),
    "theta_span": (100.0, float, "theta box is sample variance times [1/span, span]"),
    "lambda_n": (50, int, "PDV lambda grid size"),
    "lambda_min": (0.005, float, "smallest PDV lambda"),
    "lambda_max": (0.5, float, "largest PDV lambda"),
    "pdv_path": ("", str, "key,value CSV of PDV coefficients for implied-heston"),
    "q_bar": ("", float, "Q for the Heston-to-PDV map; empty = in-sample mean of Q"),
    "bootstrap_mode": ("parametric", str, "parametric | standard"),
    "n_reps": (200, int, "bootstrap replicates"),
    "bootstrap_steps": ("", int, "steps per replicate; empty = in-sample length"),
    "bootstrap_target": ("latent", str, "latent | realized"),
    "substeps": (78, int, "intra-day steps for the realized bootstrap target"),
    "n_jobs": (1, int, "bootstrap worker processes"),
    "hist_bins": (30, int, "bins of the Q histogram"),
    "out_dir": ("out", str, "output directory"),
}

_CHOICES = {
    "returns_kind": ("returns", "prices"),
    "target_kind": ("realized_vol", "realized_variance", "implied_vol", "vix"),
    "units": ("daily", "annualized"),
    "loss_space": ("vol", "variance"),
    "bootstrap_mode": ("parametric", "standard"),
    "bootstrap_target": ("latent", "realized"),
}


def _convert(key: str, raw: str):
    default, typ, _ = CONFIG_KEYS[key]
    raw = raw.strip()
    if raw == "" and default == "":
        return None
    try:
        val = typ(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {typ.__name__}") from None
    if typ is float and not math.isfinite(val):
        raise ConfigError(f"{key}: value must be finite")
    if key in _CHOICES and val not in _CHOICES[key]:
        raise ConfigError(f"{key}: {val!r} not in {_CHOICES[key]}")
    return val


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    """Parse ``key = value`` lines; unknown keys and duplicates are errors."""
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{n}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{origin}:{n}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{origin}:{n}: duplicate key {key!r}")
        out[key] = _convert(key, raw)
    return out


def default_config() -> dict:
    return {k: (None if d == "" else d) for k, (d, _, _) in CONFIG_KEYS.items()}


def format_config(cfg: dict) -> str:
    lines = []
    for key in CONFIG_KEYS:
        v = cfg[key]
        lines.append(f"{key} = {'' if v is None else (repr(v) if isinstance(v, float) else v)}")
    return "\n".join(lines) + "\n"


def build_config(args) -> dict:
    cfg = default_config()
    if args.config:
        p = Path(args.config)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        cfg.update(parse_config_text(p.read_text(encoding="utf-8"), str(p)))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        cfg[key] = _convert(key, raw)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out_dir is not None:
        cfg["out_dir"] = args.out_dir
    if args.units is not None:
        cfg["units"] = args.units
    for key in ("n_steps", "n_starts", "maxiter", "lambda_n", "n_reps", "substeps",
                "n_jobs", "hist_bins"):
        if cfg[key] < 1:
            raise ConfigError(f"{key} must be >= 1")
    return cfg


def _read_kv(path: Path) -> dict:
    out = {}
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            try:
                out[row["key"]] = row["value"]
            except KeyError:
                raise ConfigError(f"{path}: expected a key,value header") from None
    return out


def _write_kv(path: Path, items: dict) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in items.items():
            w.writerow([k, _fmt(v)])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    return str(v)


def _write_table(path: Path, header: list, columns: list) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) for v in row])


def _write_rows(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    header = list(rows[0])
    _write_table(path, header, [[r[k] for r in rows] for k in header])


def params_from_config(cfg: dict) -> HestonParams:
    vals = {k: cfg[k] for k in ("kappa", "theta", "xi", "rho", "mu", "h")}
    if cfg["params_path"]:
        kv = _read_kv(Path(cfg["params_path"]))
        for k in vals:
            if k in kv and kv[k] != "":
                try:
                    vals[k] = float(kv[k])
                except ValueError:
                    raise ConfigError(f"{cfg['params_path']}: bad value for {k}") from None
    try:
        return HestonParams(**vals)
    except ValueError as exc:
        raise ConfigError(f"invalid Heston parameters: {exc}") from None


@dataclass
class Dataset:
    dates: np.ndarray
    returns: np.ndarray
    target: Optional[np.ndarray]
    n_in: int
    source: str


def _input_paths(cfg: dict, command: str) -> list[tuple[str, str]]:
    need = []
    if command in ("filter", "fit-pdv", "calibrate", "eval", "pipeline", "bootstrap"):
        if cfg["returns_path"]:
            need.append(("returns_path", cfg["returns_path"]))
            if command != "filter":
                if not cfg["target_path"]:
                    raise ConfigError("target_path is required when returns_path is set")
                need.append(("target_path", cfg["target_path"]))
    if cfg["params_path"]:
        need.append(("params_path", cfg["params_path"]))
    if command == "implied-heston":
        if not cfg["pdv_path"]:
            raise ConfigError("implied-heston needs pdv_path")
        need.append(("pdv_path", cfg["pdv_path"]))
    return need


def preflight(cfg: dict, command: str) -> Path:
    """Check every input path and the output directory before any work."""
    for key, p in _input_paths(cfg, command):
        if not Path(p).is_file():
            raise ConfigError(f"{key}: file not found: {p}")
    out = Path(cfg["out_dir"])
    if out.exists() and not out.is_dir():
        raise ConfigError(f"out_dir exists and is not a directory: {out}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_dataset(cfg: dict, params: HestonParams) -> Dataset:
    if not cfg["returns_path"]:
        path = simulate(params, cfg["n_steps"], nu0=cfg["nu0"], seed=cfg["seed"])
        dates = sim_dates(cfg["n_steps"])
        n_in = _split_index(dates, cfg["split_date"])
        return Dataset(dates, path.returns, path.latent_vol, n_in, "simulated")

    try:
        ret = load_csv(cfg["returns_path"], cfg["returns_column"], cfg["returns_kind"],
                       date_column=cfg["date_column"])
        if ret.source == "prices":
            ret = log_returns(ret)
        if not cfg["target_path"]:
            n_in = _split_index(ret.timestamps, cfg["split_date"])
            return Dataset(ret.timestamps, ret.values, None, n_in, "file")
        tgt = load_csv(cfg["target_path"], cfg["target_column"], cfg["target_kind"],
                       date_column=cfg["date_column"], units=cfg["units"])
        if not isinstance(tgt, TargetSeries):
            raise ConfigError("target_kind must be a volatility kind")
        if cfg["split_date"]:
            ins, oos = join_and_split(ret, tgt, cfg["split_date"])
            dates = np.concatenate([ins.timestamps, oos.timestamps])
            y = np.concatenate([ins.returns.values, oos.returns.values])
            t = np.concatenate([ins.target.values, oos.target.values])
            return Dataset(dates, y, t, len(ins), "file")
        pair = join(ret, tgt)
    except DataError as exc:
        raise ConfigError(str(exc)) from None
    return Dataset(pair.timestamps, pair.returns.values, pair.target.values,
                   len(pair), "file")


def _split_index(dates: np.ndarray, split_date: Optional[str]) -> int:
    if not split_date:
        return dates.size
    try:
        b = np.datetime64(split_date, "D")
    except ValueError:
        raise ConfigError(f"split_date: cannot parse {split_date!r}") from None
    n = int(np.searchsorted(dates, b))
    if n < 3 or n >= dates.size:
        raise ConfigError(f"split_date {b} leaves fewer than 3 in-sample or no out-of-sample points")
    return n


def _require_target(data: Dataset, command: str) -> np.ndarray:
    if data.target is None:
        raise ConfigError(f"{command} needs a target series (set target_path)")
    return data.target


def _calibration_config(cfg: dict) -> CalibrationConfig:
    try:
        return CalibrationConfig(n_starts=cfg["n_starts"], maxiter=cfg["maxiter"],
                                 loss_space=cfg["loss_space"], sigma0=cfg["sigma0"],
                                 h=cfg["h"], theta_span=cfg["theta_span"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _lambda_grid(cfg: dict) -> np.ndarray:
    lo, hi = cfg["lambda_min"], cfg["lambda_max"]
    if not 0 < lo <= hi:
        raise ConfigError("need 0 < lambda_min <= lambda_max")
    return default_lambda_grid(cfg["lambda_n"], lo, hi)


# commands -----------------------------------------------------------------

def cmd_simulate(cfg: dict, out: Path) -> dict:
    """Simulate one Heston path to simulated.csv."""
    params = params_from_config(cfg)
    path = simulate(params, cfg["n_steps"], nu0=cfg["nu0"], seed=cfg["seed"])
    dates = sim_dates(cfg["n_steps"] + 1)
    _write_table(out / "simulated.csv",
                 ["date", "log_price", "return", "variance", "vol"],
                 [dates.astype(str), path.log_prices, np.r_[np.nan, path.returns],
                  path.variances, np.sqrt(path.variances)])
    print(f"simulated {cfg['n_steps']} steps, {path.truncation_count} truncations")
    return {"truncations": path.truncation_count}


def cmd_filter(cfg: dict, out: Path) -> dict:
    """Run the variable-Q filter; writes filter.csv and a Q histogram."""
    params = params_from_config(cfg)
    data = load_dataset(cfg, params)
    y = data.returns[:data.n_in]
    res = run_filter(y, params, sigma0=cfg["sigma0"])
    _write_table(out / "filter.csv", ["date", "mean", "variance", "q", "predicted_vol"],
                 [data.dates[:data.n_in].astype(str), res.mean, res.variance, res.q,
                  res.predicted_vol])
    diag = res.diagnostics(cfg["hist_bins"])
    centers = 0.5 * (diag.edges[1:] + diag.edges[:-1])
    _write_table(out / "q_histogram.csv", ["x", "y", "series"],
                 [centers, diag.counts, ["q"] * centers.size])
    print(f"Q mean {diag.mean:.4g}, skewness {diag.skewness:.4g}, "
          f"{int(res.clamped.sum())} clamped steps")
    return {"q_mean": diag.mean, "q_skew": diag.skewness}


def cmd_fit_pdv(cfg: dict, out: Path) -> dict:
    """Fit the exponential-kernel PDV model and compare with the Heston-implied values."""
    params = params_from_config(cfg)
    data = load_dataset(cfg, params)
    tgt = _require_target(data, "fit-pdv")
    y, var = data.returns[:data.n_in], tgt[:data.n_in] ** 2
    c = fit_pdv(y, var, _lambda_grid(cfg))
    pred, floored = predict_pdv(c, exp_kernel_features(y, c.lam))
    items = {"beta0": c.beta0, "beta1": c.beta1, "beta2": c.beta2, "lambda": c.lam,
             "decay": c.decay, "lambda_beta1": c.lambda_beta1,
             "lambda_beta2": c.lambda_beta2, "s2": c.s2, "sse": c.sse, "h": cfg["h"]}
    _write_kv(out / "pdv_coefficients.csv", items)
    _write_table(out / "pdv_predictions.csv",
                 ["date", "target_variance", "predicted_variance", "floored"],
                 [data.dates[:data.n_in].astype(str), var, pred, floored])
    # side-by-side with the coefficients the configured Heston parameters imply
    q_bar = cfg["q_bar"] if cfg["q_bar"] is not None else mean_q(params, y, sigma0=cfg["sigma0"])
    eq = heston_implied_adf_coeffs(params, q_bar)
    names = ["beta0", "lambda_beta1", "lambda_beta2", "decay", "s2"]
    _write_table(out / "pdv_vs_heston.csv", ["coefficient", "fitted", "heston_implied"],
                 [names, [items[k] for k in names], [getattr(eq, k) for k in names]])
    print(f"lambda {c.lam:.5g} (decay {c.decay:.5g}), beta0 {c.beta0:.4g}, "
          f"lambda*beta1 {c.lambda_beta1:.4g}, lambda*beta2 {c.lambda_beta2:.4g}, s2 {c.s2:.4g}")
    return items


def cmd_implied_heston(cfg: dict, out: Path) -> dict:
    """Invert PDV coefficients from pdv_path into Heston parameters."""
    kv = _read_kv(Path(cfg["pdv_path"]))
    try:
        args = {k: float(kv[k]) for k in ("beta0", "lambda_beta1", "lambda_beta2", "decay", "s2")}
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{cfg['pdv_path']}: missing or bad coefficient {exc}") from None
    h = float(kv.get("h") or cfg["h"])
    imp = pdv_implied_heston(**args, h=h)
    items = {"B": imp.b, "Q": imp.q, "kappa": imp.kappa, "theta": imp.theta,
             "xi": imp.xi, "rho": imp.rho, "mu": cfg["mu"], "h": h}
    _write_kv(out / "implied_heston.csv", items)
    for k, v in items.items():
        print(f"{k:>6} {v: .6g}")
    return items


def cmd_calibrate(cfg: dict, out: Path) -> dict:
    """Calibrate Heston parameters to the volatility target."""
    params = params_from_config(cfg)
    data = load_dataset(cfg, params)
    tgt = _require_target(data, "calibrate")
    n = data.n_in
    oos = (data.returns[n:], tgt[n:]) if n < data.returns.size else (None, None)
    res = calibrate(data.returns[:n], tgt[:n], _calibration_config(cfg), seed=cfg["seed"],
                    oos_returns=oos[0], oos_target=oos[1])
    items = res.as_dict()
    items.update({f"annual_{k}": v for k, v in annualize(res.params).items()})
    _write_kv(out / "calibration.csv", items)
    _write_table(out / "calibration_trace.csv", ["x", "y", "series"],
                 [np.arange(len(res.trace)), res.trace, ["loss"] * len(res.trace)])
    p = res.params
    r2o = "n/a" if res.r2_out is None else f"{res.r2_out:.4f}"
    print(f"kappa {p.kappa:.5g} theta {p.theta:.5g} xi {p.xi:.5g} rho {p.rho:.4f}; "
          f"R2 in {res.r2_in:.4f} out {r2o}")
    return items


def cmd_eval(cfg: dict, out: Path) -> dict:
    """Score fixed parameters in and out of sample."""
    params = params_from_config(cfg)
    data = load_dataset(cfg, params)
    tgt = _require_target(data, "eval")
    pred, r2_in, r2_out = evaluate(params, data.returns, tgt, n_in=data.n_in,
                                   sigma0=cfg["sigma0"])
    window = np.where(np.arange(pred.size) < data.n_in, "in", "out")
    dates = data.dates.astype(str)
    _write_table(out / "eval_predictions.csv", ["date", "actual", "predicted", "window"],
                 [dates, tgt, pred, window])
    _write_table(out / "eval_plot.csv", ["x", "y", "series"],
                 [np.r_[dates, dates], np.r_[tgt, pred],
                  ["actual"] * dates.size + ["predicted"] * dates.size])
    print(f"R2 in-sample {r2_in:.4f}")
    if r2_out is not None:
        print(f"R2 out-of-sample {r2_out:.4f}")
    return {"r2_in": r2_in, "r2_out": r2_out}


def _bootstrap_steps(cfg: dict) -> int:
    if cfg["bootstrap_steps"]:
        return cfg["bootstrap_steps"]
    if cfg["returns_path"] or cfg["split_date"]:
        params = params_from_config(cfg)
        return load_dataset(cfg, params).n_in
    return cfg["n_steps"]


def cmd_bootstrap(cfg: dict, out: Path, params: Optional[HestonParams] = None) -> dict:
    """Bootstrap standard errors of the calibrated parameters."""
    params = params or params_from_config(cfg)
    settings = BootstrapSettings(target=cfg["bootstrap_target"], substeps=cfg["substeps"])
    run = parametric_bootstrap if cfg["bootstrap_mode"] == "parametric" else standard_bootstrap
    rep = run(params, _bootstrap_steps(cfg), cfg["n_reps"], _calibration_config(cfg),
              seed=cfg["seed"], settings=settings, n_jobs=cfg["n_jobs"])
    _write_rows(out / "bootstrap_replicates.csv", rep.replicate_rows())
    _write_rows(out / "bootstrap_summary.csv", rep.summary_rows())
    if rep.failures:
        _write_table(out / "bootstrap_failures.csv", ["replicate", "error"],
                     [[i for i, _ in rep.failures], [e for _, e in rep.failures]])
    se = rep.se
    print(f"{rep.mode} bootstrap: {rep.n_ok} ok, {rep.n_failed} failed; SE " +
          ", ".join(f"{k} {se[k]:.4g}" for k in ("kappa", "log_theta", "xi", "rho")))
    return se


def cmd_pipeline(cfg: dict, out: Path) -> dict:
    """simulate/load -> filter -> fit-pdv -> calibrate -> bootstrap in one directory."""
    stamp = time.strftime("%Y%m%d-%H%M%S")
    run_dir = out / f"run-{stamp}"
    k = 1
    while run_dir.exists():
        run_dir = out / f"run-{stamp}-{k}"
        k += 1
    run_dir.mkdir(parents=True)
    _write_manifest(run_dir / "manifest.txt", cfg)
    sub = dict(cfg, out_dir=str(run_dir))

    stages: list[tuple[str, Callable]] = []
    if not cfg["returns_path"]:
        stages.append(("simulate", lambda: cmd_simulate(sub, run_dir)))
    stages += [("filter", lambda: cmd_filter(sub, run_dir)),
               ("fit-pdv", lambda: cmd_fit_pdv(sub, run_dir)),
               ("calibrate", lambda: cmd_calibrate(sub, run_dir))]
    results = {}
    for name, fn in stages:
        results[name] = _stage(name, fn)
    cal = results["calibrate"]
    fitted = None
    if cfg["bootstrap_mode"] == "parametric":
        fitted = HestonParams(cal["kappa"], cal["theta"], cal["xi"], cal["rho"],
                              mu=cal["mu"], h=cal["h"])
    results["bootstrap"] = _stage("bootstrap", lambda: cmd_bootstrap(sub, run_dir, fitted))
    print(f"pipeline outputs in {run_dir}")
    return results


def _stage(name: str, fn: Callable):
    logger.info("stage %s", name)
    try:
        return fn()
    except Exception as exc:
        logger.error("pipeline stage %r failed: %s", name, exc)
        raise


def _write_manifest(path: Path, cfg: dict) -> None:
    import scipy
    head = [
        "# adfvol pipeline manifest; usable as --config to rerun",
        f"# adfvol {__version__}, numpy {np.__version__}, scipy {scipy.__version__}, "
        f"python {platform.python_version()}",
        f"# seeds: simulation={cfg['seed']} calibration={cfg['seed']} bootstrap={cfg['seed']}",
    ]
    path.write_text("\n".join(head) + "\n" + format_config(cfg), encoding="utf-8")


COMMANDS = {
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "fit-pdv": cmd_fit_pdv,
    "calibrate": cmd_calibrate,
    "implied-heston": cmd_implied_heston,
    "bootstrap": cmd_bootstrap,
    "eval": cmd_eval,
    "pipeline": cmd_pipeline,
}


def _key_help() -> str:
    rows = [f"  {k:<17} {'' if d == '' else d!s:<22} {doc}" for k, (d, _, doc) in CONFIG_KEYS.items()]
    return "config keys (key = value, default, meaning):\n" + "\n".join(rows)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adfvol", description="Heston ADF filtering, PDV fitting and calibration.",
        epilog=_key_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out-dir", dest="out_dir", help="override out_dir")
    common.add_argument("--units", choices=_CHOICES["units"], help="override units")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=COMMANDS[name].__doc__)
        if name == "bootstrap":
            p.add_argument("--mode", choices=_CHOICES["bootstrap_mode"],
                           help="override bootstrap_mode")
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        if getattr(args, "mode", None):
            cfg["bootstrap_mode"] = args.mode
        out = preflight(cfg, args.command)
        COMMANDS[args.command](cfg, out)
    except (ConfigError, DataError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FilterError, CalibrationError, FloatingPointError, ValueError,
            ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
