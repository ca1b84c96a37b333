"""Reference procedures for intersection-style composed hypotheses.

Both baselines target "H1 in at least k of Q tests" questions and exist
for benchmarking against the posterior-based method: one runs BH on a
per-item max-p statistic, the other intersects per-test BH rejections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import PValueMatrix
from .errors import InvalidArgumentError


def bh_adjust(p: np.ndarray) -> np.ndarray:
    """Benjamini-Hochberg adjusted p-values (step-up, capped at 1)."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InvalidArgumentError("expected a non-empty 1-d array of p-values")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise InvalidArgumentError("p-values must lie in [0, 1]")
    n = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * n / np.arange(1, n + 1)
    adjusted = np.minimum.accumulate(scaled[::-1])[::-1]
    np.clip(adjusted, 0.0, 1.0, out=adjusted)
    out = np.empty(n)
    out[order] = adjusted
    return out


@dataclass(frozen=True, eq=False)
class BaselineResult:
    """Rejection decisions from a baseline procedure.

    ``statistic`` and ``adjusted`` are per-item when the procedure has a
    single test statistic (max-p), and None for the intersection rule.
    """

    method: str
    k: int
    rejected: np.ndarray = field(repr=False)
    statistic: np.ndarray | None = field(default=None, repr=False)
    adjusted: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_rejected(self) -> int:
        return int(np.count_nonzero(self.rejected))


def pmax_procedure(pmatrix: PValueMatrix, alpha: float = 0.05, k: int = 1) -> BaselineResult:
    """BH on the k-th largest p-value of each item.

    k = 1 uses the plain maximum (tests "H1 everywhere"); larger k
    relaxes the target to "H1 in at least Q - k + 1 tests".
    """
    _check_alpha(alpha)
    q = pmatrix.q
    if not 1 <= k <= q:
        raise InvalidArgumentError(f"k must lie in [1, {q}], got {k}")
    stat = np.sort(pmatrix.values, axis=1)[:, q - k]
    adjusted = bh_adjust(stat)
    return BaselineResult(
        method="pmax",
        k=k,
        rejected=adjusted <= alpha,
        statistic=stat,
        adjusted=adjusted,
    )


def intersect_fdr(pmatrix: PValueMatrix, alpha: float = 0.05, k: int | None = None) -> BaselineResult:
    """Intersect per-test BH rejections: keep items rejected in >= k tests.

    Defaults to k = Q (rejected everywhere).  Only k in {Q-1, Q} is
    supported; looser intersections have no calibration story.
    """
    _check_alpha(alpha)
    q = pmatrix.q
    if k is None:
        k = q
    if k not in (q - 1, q) or k < 1:
        raise InvalidArgumentError(f"k must be Q or Q-1 (got k={k} with Q={q})")
    hits = np.zeros(pmatrix.n, dtype=np.int64)
    for j in range(q):
        hits += bh_adjust(pmatrix.column(j)) <= alpha
    return BaselineResult(method="intersect", k=k, rejected=hits >= k)


def _check_alpha(alpha: float) -> None:
    if not (np.isfinite(alpha) and 0.0 <= alpha < 1.0):
        raise InvalidArgumentError(f"alpha must lie in [0, 1), got {alpha!r}")
