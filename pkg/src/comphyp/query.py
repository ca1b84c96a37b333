"""Composed-hypothesis queries against a fitted configuration mixture.

A query names a set C1 of configurations to treat as the alternative.
Each item's evidence is the posterior mass tau on C1; items are ranked
by tau and a rejection threshold is calibrated so the estimated false
discovery rate, the mean of 1 - tau over the rejected set, stays at or
below the requested level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConfigSet, config_to_string, index_to_config
from .errors import InvalidArgumentError, InvalidQueryError
from .joint import FittedModel, JointFit


def compute_tau(fit: JointFit, c1: ConfigSet) -> np.ndarray:
    """Posterior probability that each item's configuration lies in C1."""
    if c1.q != fit.q:
        raise InvalidQueryError(f"query is over Q={c1.q} tests but the fit has Q={fit.q}")
    if c1.is_empty:
        raise InvalidQueryError("C1 is empty; nothing to test")
    if c1.is_full:
        raise InvalidQueryError("C1 contains every configuration; the query is vacuous")
    mask = c1.mask().astype(fit.posteriors.dtype)
    tau = fit.posteriors @ mask
    return np.clip(tau.astype(np.float64), 0.0, 1.0)


def fdr_curve(tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ranking by decreasing tau and the estimated FDR of each prefix.

    Returns ``(order, fdr_at_rank)`` where ``order`` permutes items into
    decreasing-tau order (ties broken by original position) and
    ``fdr_at_rank[k]`` is the mean of 1 - tau over the first k+1 items.
    """
    tau = np.asarray(tau, dtype=np.float64)
    if tau.ndim != 1 or tau.size == 0:
        raise InvalidArgumentError("tau must be a non-empty 1-d array")
    n = tau.size
    order = np.lexsort((np.arange(n), -tau))
    ranks = np.arange(1, n + 1, dtype=np.float64)
    fdr_at_rank = 1.0 - np.cumsum(tau[order]) / ranks
    np.clip(fdr_at_rank, 0.0, 1.0, out=fdr_at_rank)
    return order, fdr_at_rank


def calibrate_threshold(
    tau: np.ndarray,
    order: np.ndarray,
    fdr_at_rank: np.ndarray,
    alpha: float,
) -> tuple[float, np.ndarray]:
    """Largest rejection prefix whose estimated FDR stays at or below alpha.

    Returns the tau value of the last rejected item and the boolean
    rejection vector in original item order.  Every rejected item has
    tau >= threshold and every item with tau strictly above it is
    rejected; when ties sit exactly at the threshold the affordable
    prefix wins, so an equal-tau item beyond it can stay unrejected
    (rejecting it would push the estimated FDR past alpha).  With no
    affordable prefix the threshold is +inf and nothing is rejected.
    """
    if not (np.isfinite(alpha) and 0.0 <= alpha < 1.0):
        raise InvalidArgumentError(f"alpha must lie in [0, 1), got {alpha!r}")
    n = tau.shape[0]
    rejected = np.zeros(n, dtype=bool)
    affordable = np.nonzero(fdr_at_rank <= alpha)[0]
    if affordable.size == 0:
        return float("inf"), rejected
    last = int(affordable[-1])
    rejected[order[: last + 1]] = True
    return float(tau[order[last]]), rejected


def classify_items(fit: JointFit, rejected: np.ndarray) -> np.ndarray:
    """Most probable configuration index per rejected item, -1 elsewhere.

    The argmax runs over all 2**Q configurations (not just C1); ties go
    to the lowest canonical index.
    """
    labels = np.argmax(fit.posteriors, axis=1).astype(np.int64)
    labels[~np.asarray(rejected, dtype=bool)] = -1
    return labels


@dataclass(frozen=True, eq=False)
class QueryResult:
    """Outcome of one composed-hypothesis query.

    ``local_fdr`` is 1 - tau, the posterior probability of C0 for each
    item.  ``label_indices`` holds -1 for items that were not rejected.
    """

    c1: ConfigSet
    alpha: float
    tau: np.ndarray = field(repr=False)
    order: np.ndarray = field(repr=False)
    fdr_at_rank: np.ndarray = field(repr=False)
    threshold: float
    rejected: np.ndarray = field(repr=False)
    label_indices: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.tau.shape[0]

    @property
    def n_rejected(self) -> int:
        return int(np.count_nonzero(self.rejected))

    @property
    def local_fdr(self) -> np.ndarray:
        return 1.0 - self.tau

    @property
    def ranks(self) -> np.ndarray:
        """1-based rank of each item in the decreasing-tau ordering."""
        ranks = np.empty(self.n, dtype=np.int64)
        ranks[self.order] = np.arange(1, self.n + 1)
        return ranks

    def labels(self) -> list[str]:
        """Configuration bit strings for rejected items, '' otherwise."""
        q = self.c1.q
        return [
            config_to_string(index_to_config(int(k), q)) if k >= 0 else ""
            for k in self.label_indices
        ]


def run_query(fit: FittedModel | JointFit, c1: ConfigSet, alpha: float = 0.05) -> QueryResult:
    """Answer one composed-hypothesis query; the fit is not modified."""
    joint = fit.joint if isinstance(fit, FittedModel) else fit
    tau = compute_tau(joint, c1)
    order, fdr_at_rank = fdr_curve(tau)
    threshold, rejected = calibrate_threshold(tau, order, fdr_at_rank, alpha)
    label_indices = classify_items(joint, rejected)
    return QueryResult(
        c1=c1,
        alpha=float(alpha),
        tau=tau,
        order=order,
        fdr_at_rank=fdr_at_rank,
        threshold=threshold,
        rejected=rejected,
        label_indices=label_indices,
    )
