"""Joint 2**Q-component mixture over per-test mixture components.

Conditional on a truth configuration c, the Q probit scores of an item
are independent with density f0 (standard normal) where c_q = 0 and the
fitted alternative g1_q where c_q = 1.  The configuration weights are
estimated by EM; per-test densities stay frozen at their marginal fits.

The E-step matrix is the only large object.  It is built once as
scaled component likelihoods gamma[i, c] = exp(log f(x_i | c) - m_i),
each EM sweep then costs two matrix-vector products, and the final
posterior matrix is produced by transforming gamma in place rather than
allocating a second n x 2**Q buffer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import PValueMatrix, config_bits, product_weights
from .errors import InvalidArgumentError, InvalidDataError
from .marginal import (
    MarginalFit,
    estimate_pi0,
    fit_marginal_from_scores,
    null_log_density,
    probit_transform,
)

# above this many matrix cells the E-step matrix drops to float32
FLOAT32_CELL_LIMIT = 60_000_000
_CHUNK_CELLS = 16_000_000


def build_log_densities(marginals: Sequence[MarginalFit], scores: np.ndarray) -> np.ndarray:
    """Per-item, per-test log densities under both components.

    Returns an (n, Q, 2) array: slice [..., 0] is the log null density of
    each score, slice [..., 1] the log fitted alternative density.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise InvalidArgumentError("scores must be an (n, Q) array")
    n, q = scores.shape
    if len(marginals) != q:
        raise InvalidArgumentError(f"got {len(marginals)} marginal fits for {q} score columns")
    logf = np.empty((n, q, 2), dtype=np.float64)
    for j, fit in enumerate(marginals):
        logf[:, j, 0] = null_log_density(scores[:, j])
        logf[:, j, 1] = fit.log_alt_density(scores[:, j])
    return logf


def _scaled_likelihoods(logf: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-scaled component likelihood matrix and the row log offsets.

    gamma[i, c] = exp(sum_q log f_{c_q}(x_iq) - m_i) with m_i the row
    maximum, so each row's largest entry is exactly 1.
    """
    if logf.ndim != 3 or logf.shape[2] != 2:
        raise InvalidArgumentError("logf must have shape (n, Q, 2)")
    n, q = logf.shape[:2]
    bits = config_bits(q).astype(np.float64)
    m = bits.shape[0]
    dtype = np.float64 if n * m <= FLOAT32_CELL_LIMIT else np.float32
    base = logf[:, :, 0].sum(axis=1)
    diff = np.ascontiguousarray(logf[:, :, 1] - logf[:, :, 0])
    gamma = np.empty((n, m), dtype=dtype)
    offsets = np.empty(n, dtype=np.float64)
    step = max(1, _CHUNK_CELLS // m)
    for start in range(0, n, step):
        stop = min(n, start + step)
        block = diff[start:stop] @ bits.T
        block += base[start:stop, None]
        np.max(block, axis=1, out=offsets[start:stop])
        block -= offsets[start:stop, None]
        np.exp(block, out=block)
        gamma[start:stop] = block
    return gamma, offsets


def _init_weights(init, m: int, pi0s) -> np.ndarray:
    if isinstance(init, str):
        if init == "uniform":
            return np.full(m, 1.0 / m)
        if init == "product":
            if pi0s is None:
                raise InvalidArgumentError("init='product' requires per-test pi0 estimates")
            w = product_weights(pi0s)
            if w.size != m:
                raise InvalidArgumentError(f"pi0s imply {w.size} configurations, expected {m}")
            return w
        raise InvalidArgumentError(f"unknown init {init!r}")
    w = np.asarray(init, dtype=np.float64)
    if w.shape != (m,) or np.any(w < 0) or not np.isfinite(w).all():
        raise InvalidArgumentError(f"init weights must be {m} non-negative reals")
    total = w.sum()
    if not np.isclose(total, 1.0, atol=1e-8):
        raise InvalidArgumentError("init weights must sum to 1")
    return w / total


@dataclass(frozen=True, eq=False)
class JointFit:
    """EM output: configuration weights and per-item posteriors.

    ``posteriors[i, k]`` is the probability that item i has the truth
    configuration with canonical index k; rows sum to 1.
    """

    weights: np.ndarray = field(repr=False)
    posteriors: np.ndarray = field(repr=False)
    loglik_trace: np.ndarray = field(repr=False)
    n_iter: int
    converged: bool

    @property
    def n(self) -> int:
        return self.posteriors.shape[0]

    @property
    def q(self) -> int:
        return int(self.weights.size.bit_length() - 1)


def em_fit(
    logf: np.ndarray,
    init="product",
    pi0s: Sequence[float] | None = None,
    tol: float = 1e-6,
    max_iter: int = 10_000,
) -> JointFit:
    """Fit configuration weights by EM with fixed component densities.

    Stops when the relative log-likelihood change drops below ``tol``.
    The log likelihood is non-decreasing across iterations (up to float
    roundoff); the trace is returned for inspection.
    """
    if not (np.isfinite(tol) and tol > 0.0):
        raise InvalidArgumentError(f"tol must be positive, got {tol!r}")
    if max_iter < 1:
        raise InvalidArgumentError("max_iter must be at least 1")
    gamma, offsets = _scaled_likelihoods(logf)
    n, m = gamma.shape
    w = _init_weights(init, m, pi0s)
    tiny = float(np.finfo(gamma.dtype).tiny)
    offset_sum = float(offsets.sum())

    trace: list[float] = []
    converged = False
    for _ in range(max_iter):
        s = gamma @ w.astype(gamma.dtype)
        np.maximum(s, tiny, out=s)
        loglik = offset_sum + float(np.sum(np.log(s), dtype=np.float64))
        trace.append(loglik)
        if len(trace) > 1:
            prev = trace[-2]
            if abs(loglik - prev) <= tol * abs(prev):
                converged = True
                break
        resp = gamma.T @ (1.0 / s)
        w = w * resp.astype(np.float64) / n
        w /= w.sum()

    # posterior rows: w_c * gamma[i, c] / s_i, built in place
    s = gamma @ w.astype(gamma.dtype)
    np.maximum(s, tiny, out=s)
    gamma *= w.astype(gamma.dtype)
    gamma /= s[:, None]
    return JointFit(
        weights=w,
        posteriors=gamma,
        loglik_trace=np.asarray(trace),
        n_iter=len(trace),
        converged=converged,
    )


def e_step_posteriors(logf: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Posterior configuration probabilities for fixed weights (one E-step)."""
    gamma, _ = _scaled_likelihoods(logf)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (gamma.shape[1],):
        raise InvalidArgumentError(
            f"expected {gamma.shape[1]} weights, got shape {w.shape}"
        )
    gamma *= w.astype(gamma.dtype)
    s = gamma.sum(axis=1)
    np.maximum(s, np.finfo(gamma.dtype).tiny, out=s)
    gamma /= s[:, None]
    return gamma


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Marginal fits plus the joint configuration mixture for one dataset."""

    marginals: tuple[MarginalFit, ...]
    joint: JointFit
    lam: float

    @property
    def n(self) -> int:
        return self.joint.n

    @property
    def q(self) -> int:
        return len(self.marginals)

    @property
    def pi0s(self) -> np.ndarray:
        return np.array([m.pi0 for m in self.marginals])

    @property
    def weights(self) -> np.ndarray:
        return self.joint.weights

    @property
    def posteriors(self) -> np.ndarray:
        return self.joint.posteriors


def fit_joint(
    pmatrix: PValueMatrix,
    lam: float = 0.5,
    tol: float = 1e-4,
    max_iter: int = 10_000,
    init="uniform",
) -> FittedModel:
    """Fit per-test marginals, then the joint configuration mixture.

    Operates column by column on the probit scale; the joint step sees
    only the frozen marginal densities.

    The joint EM starts from uniform weights and stops early (relative
    log-likelihood change below ``tol``).  Both defaults act as a
    regularizer when the configuration count is large: a product-form
    start can pin rare configurations at weights near zero that the
    multiplicative updates cannot escape, while deep convergence
    sharpens the weight vector until rare-configuration posteriors lose
    their conservatism.  Pass ``init="product"`` and a tighter ``tol``
    to chase the maximum-likelihood fit instead.
    """
    n, q = pmatrix.n, pmatrix.q
    scores = np.empty((n, q), dtype=np.float64)
    marginals = []
    for j in range(q):
        col = pmatrix.column(j)
        scores[:, j] = probit_transform(col)
        pi0 = estimate_pi0(col, lam)
        marginals.append(fit_marginal_from_scores(scores[:, j], lam=lam, pi0=pi0))
    logf = build_log_densities(marginals, scores)
    pi0s = [m.pi0 for m in marginals] if init == "product" else None
    joint = em_fit(logf, init=init, pi0s=pi0s, tol=tol, max_iter=max_iter)
    return FittedModel(marginals=tuple(marginals), joint=joint, lam=float(lam))
