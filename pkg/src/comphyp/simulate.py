"""Synthetic benchmark scenarios with known truth configurations.

Each item draws a latent configuration from product-form weights, then
one-sided test statistics T ~ Normal(mu, 1) per test, reported as
upper-tail p-values P = 1 - Phi(T).  On the probit scale the score
equals T, so alternatives are Normal(mu_q, 1) against a standard-normal
null.  The harness runs the posterior method and both baselines over
seeded replicates and scores empirical FDR and power.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .baselines import intersect_fdr, pmax_procedure
from .core import ConfigSet, PValueMatrix, all_alternative, at_least_k, config_bits, product_weights
from .errors import GenerationFailureError, InvalidArgumentError
from .joint import fit_joint
from .marginal import probit_transform
from .query import run_query

DELTA_KINDS = ("equal", "linear")
TARGETS = ("all", "qm1")
FLOOR_MODES = ("boost", "resample")
METHODS = ("qch", "pmax", "intersect")
RESAMPLE_CAP = 100_000


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one benchmark scenario.

    ``delta_kind`` 'equal' gives every alternative test mean ``effect``;
    'linear' gives test q (1-based) mean q + 1, ignoring ``effect``.
    ``mu_override`` replaces either rule with an explicit per-test vector.
    ``target`` picks the composed hypothesis: 'all' (H1 in every test) or
    'qm1' (H1 in at least Q-1 tests).  Every configuration of the target
    class is floored at ``h1_floor`` when drawing truth weights.
    """

    n: int
    q: int
    delta_kind: str = "equal"
    effect: float = 2.0
    h1_floor: float = 0.03
    target: str = "all"
    n_runs: int = 20
    seed: int = 0
    mu_override: tuple[float, ...] | None = None
    floor_mode: str = "boost"

    def __post_init__(self) -> None:
        if self.n < 10:
            raise InvalidArgumentError(f"n must be at least 10, got {self.n}")
        if not 2 <= self.q <= 8:
            raise InvalidArgumentError(f"Q must lie in [2, 8], got {self.q}")
        if self.delta_kind not in DELTA_KINDS:
            raise InvalidArgumentError(f"delta_kind must be one of {DELTA_KINDS}, got {self.delta_kind!r}")
        if self.target not in TARGETS:
            raise InvalidArgumentError(f"target must be one of {TARGETS}, got {self.target!r}")
        if self.floor_mode not in FLOOR_MODES:
            raise InvalidArgumentError(f"floor_mode must be one of {FLOOR_MODES}, got {self.floor_mode!r}")
        if not 0.0 < self.h1_floor < 1.0:
            raise InvalidArgumentError(f"h1_floor must lie in (0, 1), got {self.h1_floor}")
        if not (np.isfinite(self.effect) and self.effect > 0):
            raise InvalidArgumentError(f"effect must be positive, got {self.effect}")
        if self.n_runs < 1:
            raise InvalidArgumentError(f"n_runs must be at least 1, got {self.n_runs}")
        if self.mu_override is not None:
            mu = tuple(float(v) for v in self.mu_override)
            if len(mu) != self.q:
                raise InvalidArgumentError(f"mu_override must have {self.q} entries")
            object.__setattr__(self, "mu_override", mu)

    def mu(self) -> np.ndarray:
        """Per-test alternative means."""
        if self.mu_override is not None:
            return np.asarray(self.mu_override, dtype=np.float64)
        if self.delta_kind == "equal":
            return np.full(self.q, float(self.effect))
        return np.arange(1, self.q + 1, dtype=np.float64) + 1.0

    def c1(self) -> ConfigSet:
        """Composed hypothesis implied by ``target``."""
        if self.target == "all":
            return all_alternative(self.q)
        return at_least_k(self.q, self.q - 1)


@dataclass(frozen=True, eq=False)
class SimulatedData:
    """One generated dataset: p-values plus the latent truth."""

    pmatrix: PValueMatrix
    truth: np.ndarray = field(repr=False)
    weights_true: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)


def draw_weights(
    q: int,
    h1_floor: float,
    rng: np.random.Generator,
    mode: str = "boost",
    max_attempts: int = RESAMPLE_CAP,
    floor_configs: Sequence[int] | None = None,
) -> np.ndarray:
    """Random product-form configuration weights with floored configs.

    Per-test null proportions are Beta(8, 2) draws.  ``floor_configs``
    lists configuration indices guaranteed at least ``h1_floor`` weight;
    by default only the all-H1 configuration is floored.  Mode 'boost'
    raises each below-floor member to the floor and rescales the
    non-members.  Mode 'resample' redraws the whole vector until every
    member reaches the floor (cap ``max_attempts``, then
    generation-failure); its acceptance probability collapses for large
    Q, which is why it is not the default.
    """
    if mode not in FLOOR_MODES:
        raise InvalidArgumentError(f"mode must be one of {FLOOR_MODES}, got {mode!r}")
    if not 0.0 <= h1_floor < 1.0:
        raise InvalidArgumentError(f"h1_floor must lie in [0, 1), got {h1_floor!r}")
    size = 2**q
    if floor_configs is None:
        floor_configs = (size - 1,)
    members = np.zeros(size, dtype=bool)
    for i in floor_configs:
        if not 0 <= int(i) < size:
            raise InvalidArgumentError(f"floor config index {i} out of range for Q={q}")
        members[int(i)] = True
    n_members = int(members.sum())
    if n_members == size:
        raise InvalidArgumentError("cannot floor every configuration")
    if h1_floor * n_members >= 1.0:
        raise InvalidArgumentError(
            f"floor {h1_floor} infeasible for {n_members} floored configurations"
        )
    if mode == "resample":
        for _ in range(max_attempts):
            w = product_weights(rng.beta(8.0, 2.0, size=q))
            if (w[members] >= h1_floor).all():
                return w
        raise GenerationFailureError(
            f"no weight draw reached the floor {h1_floor} in {max_attempts} attempts (Q={q})"
        )
    w = product_weights(rng.beta(8.0, 2.0, size=q))
    low = members & (w < h1_floor)
    if low.any():
        deficit = (h1_floor - w[low]).sum()
        rest = ~members
        rest_sum = w[rest].sum()
        if rest_sum <= deficit:
            raise GenerationFailureError(
                f"non-floored configurations hold too little weight ({rest_sum:.4f}) "
                f"to cover the floor deficit ({deficit:.4f})"
            )
        w[rest] *= (rest_sum - deficit) / rest_sum
        w[low] = h1_floor
    return w


def generate(spec: ScenarioSpec, rng: np.random.Generator) -> SimulatedData:
    """Draw one dataset under the scenario.

    Every configuration of the scenario's composed hypothesis is floored
    at ``h1_floor``, so the queried class is always represented in the
    truth.
    """
    n, q = spec.n, spec.q
    weights = draw_weights(q, spec.h1_floor, rng, mode=spec.floor_mode,
                           floor_configs=spec.c1().indices)
    truth = rng.choice(weights.size, size=n, p=weights)
    mu = spec.mu()
    means = config_bits(q)[truth] * mu
    t_stats = rng.standard_normal((n, q)) + means
    pvals = ndtr(-t_stats)
    ids = np.array([f"item{i:07d}" for i in range(n)])
    return SimulatedData(
        pmatrix=PValueMatrix(item_ids=ids, values=pvals),
        truth=truth,
        weights_true=weights,
        mu=mu,
    )


def score(rejected: np.ndarray, truth: np.ndarray, c1: ConfigSet) -> tuple[float, float]:
    """Empirical (FDR, power) of a rejection set against known truth.

    FDR is FP / max(1, #rejected); power is TP / max(1, #truth in C1).
    """
    rejected = np.asarray(rejected, dtype=bool)
    truth = np.asarray(truth, dtype=np.int64)
    if rejected.shape != truth.shape:
        raise InvalidArgumentError("rejected and truth must have the same length")
    in_c1 = c1.mask()[truth]
    tp = int(np.count_nonzero(rejected & in_c1))
    fp = int(np.count_nonzero(rejected & ~in_c1))
    fdr = fp / max(1, fp + tp)
    power = tp / max(1, int(np.count_nonzero(in_c1)))
    return fdr, power


@dataclass(frozen=True)
class MethodScore:
    """Aggregated FDR/power for one method over the completed runs."""

    method: str
    fdr_mean: float
    fdr_sd: float
    power_mean: float
    power_sd: float
    runtime_mean: float


@dataclass(frozen=True, eq=False)
class ScoreReport:
    """Benchmark outcome: per-method scores plus fit diagnostics."""

    spec: ScenarioSpec
    alpha: float
    scores: dict[str, MethodScore]
    n_runs_done: int
    failures: tuple[str, ...]
    max_loglik_drop: float
    max_rowsum_error: float
    all_converged: bool

    def to_rows(self) -> list[dict]:
        rows = []
        for name, s in self.scores.items():
            rows.append(
                {
                    "n": self.spec.n,
                    "q": self.spec.q,
                    "scenario": self.spec.delta_kind,
                    "target": self.spec.target,
                    "method": name,
                    "fdr_mean": s.fdr_mean,
                    "fdr_sd": s.fdr_sd,
                    "power_mean": s.power_mean,
                    "power_sd": s.power_sd,
                    "runtime_mean_s": s.runtime_mean,
                    "n_runs": self.n_runs_done,
                }
            )
        return rows

    def to_text(self) -> str:
        """Aligned table, one row per scenario cell, FDR/power per method."""
        header = f"{'n':>8}  {'Q':>2}"
        cells = f"{self.spec.n:>8}  {self.spec.q:>2}"
        for name, s in self.scores.items():
            header += f"  {name + ' FDR':>16}  {name + ' power':>16}"
            cells += f"  {f'{s.fdr_mean:.3f} ({s.fdr_sd:.3f})':>16}"
            cells += f"  {f'{s.power_mean:.3f} ({s.power_sd:.3f})':>16}"
        return header + "\n" + cells


def _mean_sd(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return float("nan"), float("nan")
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), sd


def run_benchmark(
    spec: ScenarioSpec,
    alpha: float = 0.05,
    methods: Sequence[str] = METHODS,
) -> ScoreReport:
    """Generate, fit, query, and score over ``spec.n_runs`` replicates.

    Every run gets an independent child seed; a failing run is recorded
    and skipped rather than aborting the whole benchmark.
    """
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise InvalidArgumentError(f"unknown method {m!r}; choose from {METHODS}")
    if not methods:
        raise InvalidArgumentError("need at least one method")
    c1 = spec.c1()
    pmax_k = 1 if spec.target == "all" else 2
    isect_k = spec.q if spec.target == "all" else spec.q - 1

    fdrs: dict[str, list[float]] = {m: [] for m in methods}
    powers: dict[str, list[float]] = {m: [] for m in methods}
    times: dict[str, list[float]] = {m: [] for m in methods}
    failures: list[str] = []
    max_drop = 0.0
    max_rowsum = 0.0
    all_conv = True

    children = np.random.SeedSequence(spec.seed).spawn(spec.n_runs)
    for run_idx, child in enumerate(children):
        rng = np.random.Generator(np.random.Philox(child))
        try:
            data = generate(spec, rng)
            if "qch" in methods:
                t0 = time.perf_counter()
                model = fit_joint(data.pmatrix)
                result = run_query(model, c1, alpha)
                times["qch"].append(time.perf_counter() - t0)
                f, p = score(result.rejected, data.truth, c1)
                fdrs["qch"].append(f)
                powers["qch"].append(p)
                trace = model.joint.loglik_trace
                if trace.size > 1:
                    drops = np.diff(trace)
                    max_drop = max(max_drop, float(max(0.0, -drops.min())))
                rowsums = model.posteriors.sum(axis=1, dtype=np.float64)
                max_rowsum = max(max_rowsum, float(np.abs(rowsums - 1.0).max()))
                all_conv = all_conv and model.joint.converged
            if "pmax" in methods:
                t0 = time.perf_counter()
                res = pmax_procedure(data.pmatrix, alpha, k=pmax_k)
                times["pmax"].append(time.perf_counter() - t0)
                f, p = score(res.rejected, data.truth, c1)
                fdrs["pmax"].append(f)
                powers["pmax"].append(p)
            if "intersect" in methods:
                t0 = time.perf_counter()
                res = intersect_fdr(data.pmatrix, alpha, k=isect_k)
                times["intersect"].append(time.perf_counter() - t0)
                f, p = score(res.rejected, data.truth, c1)
                fdrs["intersect"].append(f)
                powers["intersect"].append(p)
        except Exception as exc:  # noqa: BLE001 - record and continue
            failures.append(f"run {run_idx}: {exc}")

    scores = {}
    for m in methods:
        fm, fs = _mean_sd(fdrs[m])
        pm, ps = _mean_sd(powers[m])
        tm, _ = _mean_sd(times[m])
        scores[m] = MethodScore(
            method=m, fdr_mean=fm, fdr_sd=fs, power_mean=pm, power_sd=ps, runtime_mean=tm
        )
    return ScoreReport(
        spec=spec,
        alpha=alpha,
        scores=scores,
        n_runs_done=spec.n_runs - len(failures),
        failures=tuple(failures),
        max_loglik_drop=max_drop,
        max_rowsum_error=max_rowsum,
        all_converged=all_conv,
    )


def correlated_truth_demo(n: int, rng: np.random.Generator) -> tuple[SimulatedData, dict]:
    """Two tests with fixed non-product weights and Beta(1, 20) alternatives.

    Demonstrates that conditional independence of the p-values given the
    truth still produces marginally correlated p-values when the truth
    configurations are dependent.  Returns the dataset and a summary with
    the sample correlations of the latent indicators, the p-values, and
    the probit scores.
    """
    if n < 1_000:
        raise InvalidArgumentError(f"need n >= 1000 for stable correlations, got {n}")
    weights = np.array([0.8, 0.05, 0.05, 0.1])
    truth = rng.choice(4, size=n, p=weights)
    bits = config_bits(2)[truth].astype(bool)
    pvals = rng.uniform(size=(n, 2))
    n_alt = int(bits.sum())
    pvals[bits] = rng.beta(1.0, 20.0, size=n_alt)
    ids = np.array([f"item{i:07d}" for i in range(n)])
    data = SimulatedData(
        pmatrix=PValueMatrix(item_ids=ids, values=pvals),
        truth=truth,
        weights_true=weights,
        mu=np.full(2, np.nan),
    )
    scores = np.column_stack([probit_transform(pvals[:, 0]), probit_transform(pvals[:, 1])])
    summary = {
        "corr_truth": float(np.corrcoef(bits[:, 0], bits[:, 1])[0, 1]),
        "corr_pvalues": float(np.corrcoef(pvals[:, 0], pvals[:, 1])[0, 1]),
        "corr_scores": float(np.corrcoef(scores[:, 0], scores[:, 1])[0, 1]),
        "weights": weights,
    }
    return data, summary
