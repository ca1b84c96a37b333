"""Composed-hypothesis testing over Q parallel sets of p-values.

Fit a two-component mixture per test, combine them into a 2**Q-component
joint mixture over truth configurations, then answer arbitrary
composed-hypothesis queries ("H1 in every test", "in at least k",
"in a run of r consecutive tests", ...) with FDR-calibrated rejection
sets, without refitting between queries.

Submodules are imported lazily so the command-line front end can
configure threading before numpy loads.
"""

from importlib import import_module

from .errors import (
    ComphypError,
    DegenerateDataError,
    GenerationFailureError,
    InvalidArgumentError,
    InvalidDataError,
    InvalidQueryError,
    NumericError,
    ParseError,
)

__version__ = "1.0.0"

_EXPORTS = {
    "ConfigSet": "core",
    "PValueMatrix": "core",
    "all_alternative": "core",
    "at_least_k": "core",
    "complement": "core",
    "config_bits": "core",
    "config_index": "core",
    "config_to_string": "core",
    "consecutive_run": "core",
    "enumerate_configs": "core",
    "index_to_config": "core",
    "parse_config_set": "core",
    "pattern_set": "core",
    "product_weights": "core",
    "MarginalFit": "marginal",
    "estimate_pi0": "marginal",
    "fit_marginal": "marginal",
    "kde_fixed_point": "marginal",
    "probit_transform": "marginal",
    "select_bandwidth": "marginal",
    "silverman_bandwidth": "marginal",
    "FittedModel": "joint",
    "JointFit": "joint",
    "build_log_densities": "joint",
    "e_step_posteriors": "joint",
    "em_fit": "joint",
    "fit_joint": "joint",
    "QueryResult": "query",
    "calibrate_threshold": "query",
    "classify_items": "query",
    "compute_tau": "query",
    "fdr_curve": "query",
    "run_query": "query",
    "BaselineResult": "baselines",
    "bh_adjust": "baselines",
    "intersect_fdr": "baselines",
    "pmax_procedure": "baselines",
    "ScenarioSpec": "simulate",
    "ScoreReport": "simulate",
    "SimulatedData": "simulate",
    "correlated_truth_demo": "simulate",
    "draw_weights": "simulate",
    "generate": "simulate",
    "run_benchmark": "simulate",
    "score": "simulate",
    "FitArchive": "io",
    "load_archive": "io",
    "read_pvalue_matrix": "io",
    "sha256_file": "io",
    "write_pvalue_matrix": "io",
    "write_query_result": "io",
    "write_report": "io",
    "write_truth": "io",
}

_SUBMODULES = {"core", "marginal", "joint", "query", "baselines", "simulate", "io", "cli", "errors"}

__all__ = sorted(_EXPORTS) + sorted(_SUBMODULES) + [
    "ComphypError",
    "DegenerateDataError",
    "GenerationFailureError",
    "InvalidArgumentError",
    "InvalidDataError",
    "InvalidQueryError",
    "NumericError",
    "ParseError",
    "__version__",
]


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(import_module(f".{_EXPORTS[name]}", __name__), name)
    if name in _SUBMODULES:
        return import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return __all__
