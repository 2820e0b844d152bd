"""Independent reference implementations shared by unit and acceptance tests."""
import math

import numpy as np
from scipy import integrate, stats

from adfvol.adf import IgParams, correct

NU_GRID = np.geomspace(1e-8, 1.0, 2000)


def quadrature_posterior_error(alpha, beta, y, mu, h, grid):
    """Relative sup-norm gap between the closed form and a numerical Bayes update."""
    e = y - mu * h

    def log_unnorm(nu):
        return (stats.invgamma.logpdf(nu, alpha, scale=beta)
                + stats.norm.logpdf(e, scale=np.sqrt(nu * h)))

    # normalizer by quadrature in log(nu), shifted by the peak to avoid underflow
    u = np.linspace(math.log(1e-14), math.log(1e3), 4001)
    lu = log_unnorm(np.exp(u)) + u
    top = float(np.max(lu))
    peak = float(u[np.argmax(lu)])
    z, _ = integrate.quad(lambda s: math.exp(log_unnorm(math.exp(s)) + s - top),
                          math.log(1e-14), math.log(1e3), points=[peak], limit=500,
                          epsabs=0, epsrel=1e-11)
    numeric = np.exp(log_unnorm(grid) - top) / z
    post = correct(IgParams(alpha, beta), y, mu, h)
    closed = stats.invgamma.pdf(grid, post.alpha, scale=post.beta)
    return float(np.max(np.abs(numeric - closed)) / np.max(closed))


def kernel_sum_expansion(y, p, q, nu0, mu):
    """Direct O(n^2) evaluation of the constant-Q mean as a weighted sum of past returns."""
    h, b = p.h, q + 1.5
    big_k = (q + 1) * (1 - p.kappa * h) / b
    c0 = (mu * mu * h + 2 * (q + 1) * (p.kappa * p.theta - p.rho * p.xi * mu) * h) / (2 * b)
    c1 = ((q + 1) * p.rho * p.xi - mu) / b
    c2 = 1.0 / (2 * h * b)
    out = np.empty(y.size)
    for n in range(y.size):
        w = big_k ** (n - np.arange(n + 1))
        out[n] = big_k ** (n + 1) * nu0 + np.sum(w * (c0 + c1 * y[:n + 1] + c2 * y[:n + 1] ** 2))
    return out
