"""Independent reference implementations used only by the tests.

These deliberately avoid the library's binned/log-space shortcuts: dense
O(n^2) kernel sums, raw pairwise cross-validation, and a plain
probability-space EM, so agreement is evidence rather than tautology.
"""

import numpy as np
from scipy.stats import norm


def dense_fixed_point(x, pi0, h, tol=1e-6, max_iter=200, tau_init=None):
    """Unbinned fixed-point iteration; returns (tau, iterations, converged)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    tau = np.full(n, 1.0 - pi0) if tau_init is None else np.asarray(tau_init, dtype=float).copy()
    null_dens = norm.pdf(x)
    kern = norm.pdf(x[:, None] - x[None, :], scale=h)
    for iteration in range(1, max_iter + 1):
        g1 = kern @ tau / tau.sum()
        tau_new = (1.0 - pi0) * g1 / (pi0 * null_dens + (1.0 - pi0) * g1)
        shift = float(np.max(np.abs(tau_new - tau)))
        tau = tau_new
        if shift < tol:
            return tau, iteration, True
    return tau, max_iter, False


def dense_weighted_kde(x, weights, h, at):
    """Exact weighted Gaussian KDE evaluated at arbitrary points."""
    x = np.asarray(x, dtype=float)
    weights = np.asarray(weights, dtype=float)
    at = np.asarray(at, dtype=float)
    kern = norm.pdf(at[:, None] - x[None, :], scale=h)
    return kern @ weights / weights.sum()


def lscv_direct(x, h):
    """Raw pairwise least-squares cross-validation criterion."""
    x = np.asarray(x, dtype=float)
    n = x.size
    d = x[:, None] - x[None, :]
    term_conv = norm.pdf(d, scale=np.sqrt(2.0) * h).sum() / n**2
    off_diag = norm.pdf(d, scale=h).sum() - n * norm.pdf(0.0, scale=h)
    return term_conv - 2.0 * off_diag / (n * (n - 1))


def em_probability_space(dens, w0, tol=1e-6, max_iter=10_000):
    """Plain EM on linear-space component densities (n, m).

    Mirrors the library's iteration structure (trace entry then
    convergence check then M-step) so traces are comparable entry-wise.
    Returns (weights, posteriors, loglik_trace, converged).
    """
    dens = np.asarray(dens, dtype=float)
    w = np.asarray(w0, dtype=float).copy()
    n = dens.shape[0]
    trace = []
    converged = False
    for _ in range(max_iter):
        num = dens * w
        s = num.sum(axis=1)
        trace.append(float(np.log(s).sum()))
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= tol * abs(trace[-2]):
            converged = True
            break
        post = num / s[:, None]
        w = post.sum(axis=0) / n
        w /= w.sum()
    num = dens * w
    s = num.sum(axis=1)
    return w, num / s[:, None], np.asarray(trace), converged
