"""Per-test two-component mixture fit on probit-transformed p-values.

Each column of p-values is modelled on the probit scale x = -Phi^{-1}(p)
as pi0 * phi(x) + (1 - pi0) * g1(x) with a known standard-normal null and
an alternative density g1 estimated nonparametrically.  The alternative
is recovered by a fixed-point iteration: current posterior alternative
probabilities tau weight a kernel density estimate of g1, which in turn
updates tau.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import ndtri

from .errors import DegenerateDataError, InvalidArgumentError, InvalidDataError

PROBIT_EPS = 1e-15
DENSITY_FLOOR = 1e-300
GRID_SIZE = 1024
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def probit_transform(p: np.ndarray) -> np.ndarray:
    """Map p-values to scores x = -Phi^{-1}(p), clamping p away from {0, 1}.

    Small p-values map to large positive scores.  The clamp at
    ``PROBIT_EPS`` keeps scores finite (|x| <= 7.9413...).
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InvalidDataError("expected a non-empty 1-d array of p-values")
    bad = ~np.isfinite(p)
    if bad.any():
        raise InvalidDataError(f"non-finite p-value at row {np.nonzero(bad)[0][0]}")
    out = (p < 0.0) | (p > 1.0)
    if out.any():
        i = np.nonzero(out)[0][0]
        raise InvalidDataError(f"p-value out of [0, 1] at row {i}: {p[i]!r}")
    clamped = np.clip(p, PROBIT_EPS, 1.0 - PROBIT_EPS)
    return -ndtri(clamped)


def estimate_pi0(p: np.ndarray, lam: float = 0.5) -> float:
    """Null-proportion estimate #{p > lam} / (n * (1 - lam)), capped at 1."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InvalidArgumentError("expected a non-empty 1-d array of p-values")
    if not (np.isfinite(lam) and 0.0 < lam < 1.0):
        raise InvalidArgumentError(f"lambda must lie in (0, 1), got {lam!r}")
    frac = np.count_nonzero(p > lam) / (p.size * (1.0 - lam))
    return float(min(1.0, frac))


def silverman_bandwidth(x: np.ndarray) -> float:
    """Rule-of-thumb bandwidth 0.9 * min(sd, IQR/1.34) * n^(-1/5)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise InvalidArgumentError("need a 1-d sample of at least 2 points")
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75.0, 25.0])
    scale = min(sd, (q75 - q25) / 1.34)
    if scale <= 0.0:
        raise DegenerateDataError("sample has zero spread; no bandwidth exists")
    return 0.9 * scale * x.size ** (-0.2)


def _gaussian(u: np.ndarray, h: float) -> np.ndarray:
    return np.exp(-0.5 * (u / h) ** 2) / (h * np.sqrt(2.0 * np.pi))


def _linear_binning(x: np.ndarray, weights: np.ndarray, lo: float, delta: float, size: int) -> np.ndarray:
    """Spread each weighted point over its two neighbouring grid nodes."""
    pos = (x - lo) / delta
    left = np.floor(pos).astype(np.int64)
    np.clip(left, 0, size - 2, out=left)
    frac = pos - left
    counts = np.zeros(size, dtype=np.float64)
    np.add.at(counts, left, weights * (1.0 - frac))
    np.add.at(counts, left + 1, weights * frac)
    return counts


def select_bandwidth(x: np.ndarray, n_candidates: int = 32, grid_size: int = 4096) -> float:
    """Least-squares cross-validation bandwidth over a log-spaced grid.

    Candidates span [0.05, 3] times the Silverman value.  The LSCV
    criterion is evaluated from binned pair counts: with A_d the
    (approximate) number of point pairs at lag d * delta,

        LSCV(h) = n^-2 * sum_d A_d * phi_{sqrt(2) h}(d delta)
                  - 2 / (n (n-1)) * (sum_d A_d * phi_h(d delta) - n phi_h(0))

    which is the exact criterion up to the binning approximation.  If the
    minimiser sits on the candidate boundary (criterion effectively
    monotone over the range), the Silverman value is returned instead.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 10:
        raise InvalidArgumentError("bandwidth selection needs at least 10 points")
    h_silv = silverman_bandwidth(x)
    n = x.size
    lo, hi = float(x.min()), float(x.max())
    span = hi - lo
    delta = span / (grid_size - 1)
    counts = _linear_binning(x, np.ones(n), lo, delta, grid_size)
    # pair counts at signed lag d, folded to d >= 0
    acf = fftconvolve(counts, counts[::-1], mode="full")[grid_size - 1 :]
    acf[acf < 0] = 0.0
    lags = np.arange(grid_size) * delta

    candidates = np.geomspace(0.05 * h_silv, 3.0 * h_silv, n_candidates)
    scores = np.empty(n_candidates)
    for i, h in enumerate(candidates):
        pair_sum_2h = acf[0] * _gaussian(np.array([0.0]), np.sqrt(2.0) * h)[0]
        pair_sum_2h += 2.0 * np.sum(acf[1:] * _gaussian(lags[1:], np.sqrt(2.0) * h))
        pair_sum_h = acf[0] * _gaussian(np.array([0.0]), h)[0]
        pair_sum_h += 2.0 * np.sum(acf[1:] * _gaussian(lags[1:], h))
        leave_one_out = pair_sum_h - n * _gaussian(np.array([0.0]), h)[0]
        scores[i] = pair_sum_2h / n**2 - 2.0 * leave_one_out / (n * (n - 1))
    best = int(np.argmin(scores))
    if best == 0 or best == n_candidates - 1:
        return h_silv
    return float(candidates[best])


@dataclass(frozen=True, eq=False)
class MarginalFit:
    """Fitted two-component marginal for one test.

    ``grid`` and ``g1_on_grid`` tabulate the alternative density;
    ``tau`` holds per-item posterior alternative probabilities under this
    marginal alone.
    """

    pi0: float
    bandwidth: float
    grid: np.ndarray = field(repr=False)
    g1_on_grid: np.ndarray = field(repr=False)
    tau: np.ndarray = field(repr=False)
    iterations: int
    converged: bool
    lam: float = 0.5

    def alt_density(self, x: np.ndarray) -> np.ndarray:
        """Evaluate g1 at arbitrary scores; zero outside the fitted grid."""
        x = np.asarray(x, dtype=np.float64)
        return np.interp(x, self.grid, self.g1_on_grid, left=0.0, right=0.0)

    def log_alt_density(self, x: np.ndarray) -> np.ndarray:
        return np.log(np.maximum(self.alt_density(x), DENSITY_FLOOR))


def null_log_density(x: np.ndarray) -> np.ndarray:
    """Log standard-normal density of the probit scores."""
    x = np.asarray(x, dtype=np.float64)
    return -0.5 * x * x - _LOG_SQRT_2PI


def kde_fixed_point(
    x: np.ndarray,
    pi0: float,
    bandwidth: float,
    tol: float = 1e-6,
    max_iter: int = 200,
    grid_size: int = GRID_SIZE,
    tau_init: np.ndarray | None = None,
) -> MarginalFit:
    """Alternating estimate of the alternative density and posteriors.

    Repeats until the posterior vector moves less than ``tol`` in sup
    norm: bin the tau-weighted scores on a regular grid covering
    [min - 4h, max + 4h], convolve with a discrete Gaussian kernel to get
    g1, then update tau = (1-pi0) g1(x) / (pi0 phi(x) + (1-pi0) g1(x)).

    pi0 == 1 short-circuits to tau = 0 with a flat placeholder g1;
    pi0 == 0 short-circuits to tau = 1 with an unweighted KDE.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise InvalidArgumentError("need a 1-d sample of at least 2 scores")
    if not (np.isfinite(pi0) and 0.0 <= pi0 <= 1.0):
        raise InvalidArgumentError(f"pi0 must lie in [0, 1], got {pi0!r}")
    if not (np.isfinite(bandwidth) and bandwidth > 0.0):
        raise InvalidArgumentError(f"bandwidth must be positive, got {bandwidth!r}")
    if grid_size < 8:
        raise InvalidArgumentError("grid_size too small")

    n = x.size
    h = float(bandwidth)
    lo = float(x.min()) - 4.0 * h
    hi = float(x.max()) + 4.0 * h
    grid = np.linspace(lo, hi, grid_size)
    delta = (hi - lo) / (grid_size - 1)
    reach = min(grid_size - 1, int(np.ceil(4.0 * h / delta)))
    kernel = _gaussian(np.arange(-reach, reach + 1) * delta, h)

    if pi0 >= 1.0:
        # no alternative mass to estimate; keep a proper placeholder density
        return MarginalFit(
            pi0=1.0,
            bandwidth=h,
            grid=grid,
            g1_on_grid=np.full(grid_size, 1.0 / (hi - lo)),
            tau=np.zeros(n),
            iterations=0,
            converged=True,
        )

    def density_from(weights: np.ndarray) -> np.ndarray:
        total = weights.sum()
        counts = _linear_binning(x, weights, lo, delta, grid_size)
        dens = fftconvolve(counts, kernel, mode="same") / total
        np.maximum(dens, 0.0, out=dens)
        return dens

    if pi0 <= 0.0:
        tau = np.ones(n)
        return MarginalFit(
            pi0=0.0,
            bandwidth=h,
            grid=grid,
            g1_on_grid=density_from(tau),
            tau=tau,
            iterations=0,
            converged=True,
        )

    if tau_init is None:
        tau = np.full(n, 1.0 - pi0)
    else:
        tau = np.asarray(tau_init, dtype=np.float64).copy()
        if tau.shape != (n,) or np.any(tau < 0) or np.any(tau > 1):
            raise InvalidArgumentError("tau_init must be n probabilities")
        if tau.sum() <= 0.0:
            raise InvalidArgumentError("tau_init must carry positive total mass")

    null_dens = np.exp(null_log_density(x))
    g1_grid = density_from(tau)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        g1_at_x = np.interp(x, grid, g1_grid)
        tau_new = (1.0 - pi0) * g1_at_x
        tau_new /= pi0 * null_dens + tau_new
        shift = float(np.max(np.abs(tau_new - tau)))
        tau = tau_new
        g1_grid = density_from(tau)
        if shift < tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"marginal fixed point did not converge in {max_iter} iterations "
            f"(last sup-norm step {shift:.3g})",
            RuntimeWarning,
            stacklevel=2,
        )
    return MarginalFit(
        pi0=float(pi0),
        bandwidth=h,
        grid=grid,
        g1_on_grid=g1_grid,
        tau=tau,
        iterations=iterations,
        converged=converged,
    )


def fit_marginal_from_scores(x: np.ndarray, lam: float = 0.5, pi0: float | None = None) -> MarginalFit:
    """Full marginal pipeline given probit scores (pi0 from the p-scale
    Storey rule is supplied by the caller via ``pi0`` when available)."""
    if pi0 is None:
        # p > lam corresponds to x < -Phi^{-1}(lam) on the probit scale
        frac = np.count_nonzero(x < -ndtri(lam)) / (x.size * (1.0 - lam))
        pi0 = min(1.0, frac)
    h = select_bandwidth(x)
    fit = kde_fixed_point(x, pi0, h)
    object.__setattr__(fit, "lam", float(lam))
    return fit


def fit_marginal(p: np.ndarray, lam: float = 0.5) -> MarginalFit:
    """Fit one test's marginal mixture from raw p-values."""
    scores = probit_transform(p)
    pi0 = estimate_pi0(np.asarray(p, dtype=np.float64), lam)
    h = select_bandwidth(scores)
    fit = kde_fixed_point(scores, pi0, h)
    object.__setattr__(fit, "lam", float(lam))
    return fit
