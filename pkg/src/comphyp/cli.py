"""Command-line front end: fit, query, simulate, bench.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
The COMPHYP_THREADS environment variable seeds the BLAS/OpenMP thread
count, so this module defers all numpy-dependent imports until after it
is applied.
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import ComphypError, InvalidArgumentError

THREAD_ENV_VAR = "COMPHYP_THREADS"


class _UsageError(ComphypError):
    exit_code = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _apply_thread_env() -> None:
    value = os.environ.get(THREAD_ENV_VAR)
    if not value:
        return
    if not value.isdigit() or int(value) < 1:
        raise _UsageError(f"{THREAD_ENV_VAR} must be a positive integer, got {value!r}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, value)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="comphyp",
        description="Composed-hypothesis testing over parallel p-value sets",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p_fit = sub.add_parser("fit", help="fit marginals and the joint mixture", parents=[])
    p_fit.add_argument("--input", required=True, help="input p-value matrix (TSV/CSV)")
    p_fit.add_argument("--out", required=True, help="output directory for the fit archive")
    p_fit.add_argument("--lambda", dest="lam", type=float, default=0.5,
                       help="null-proportion tuning parameter (default 0.5)")
    p_fit.add_argument("--binary", action="store_true",
                       help="write one npz file instead of JSON + npy")
    p_fit.add_argument("--no-posteriors", action="store_true",
                       help="omit the posterior matrix (recomputed at query time)")

    p_query = sub.add_parser("query", help="answer a composed hypothesis from a fit archive")
    p_query.add_argument("--fit", required=True, dest="fit_dir", help="fit archive directory")
    p_query.add_argument("--c1", required=True,
                         help='alternative set: "all", "atleast:k", "run:r", or patterns like "11*,101"')
    p_query.add_argument("--alpha", type=float, default=0.05, help="FDR level (default 0.05)")
    p_query.add_argument("--out", required=True, help="output result TSV")
    p_query.add_argument("--input", default=None,
                         help="input matrix path override for posterior recomputation")

    p_sim = sub.add_parser("simulate", help="generate one synthetic dataset with known truth")
    _add_scenario_args(p_sim)
    p_sim.add_argument("--out", required=True, help="output directory")

    p_bench = sub.add_parser("bench", help="run a scored benchmark over seeded replicates")
    _add_scenario_args(p_bench)
    p_bench.add_argument("--runs", type=int, default=20, help="number of replicates (default 20)")
    p_bench.add_argument("--target", choices=("all", "qm1"), default="all",
                         help="composed hypothesis: all H1, or at least Q-1 H1")
    p_bench.add_argument("--methods", default="qch,pmax,intersect",
                         help="comma-separated subset of qch,pmax,intersect")
    p_bench.add_argument("--alpha", type=float, default=0.05, help="FDR level (default 0.05)")
    p_bench.add_argument("--out", required=True, help="output directory")
    return parser


def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", choices=("equal", "linear"), required=True,
                   help="alternative mean structure")
    p.add_argument("--n", type=int, required=True, help="items per dataset")
    p.add_argument("--q", type=int, required=True, help="parallel tests")
    p.add_argument("--effect", type=float, default=2.0,
                   help="alternative mean for the equal scenario (default 2.0)")
    p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    p.add_argument("--h1-floor", type=float, default=0.03,
                   help="minimum weight per target-class configuration (default 0.03)")
    p.add_argument("--floor-mode", choices=("boost", "resample"), default="boost",
                   help="how to enforce the weight floor (default boost)")


def _scenario_from(args, n_runs: int = 1) -> "object":
    from .simulate import ScenarioSpec

    return ScenarioSpec(
        n=args.n,
        q=args.q,
        delta_kind=args.scenario,
        effect=args.effect,
        h1_floor=args.h1_floor,
        target=getattr(args, "target", "all"),
        n_runs=n_runs,
        seed=args.seed,
        floor_mode=args.floor_mode,
    )


def cmd_fit(args) -> int:
    import numpy as np  # noqa: F401  (ensures thread env took effect first)

    from .io import FitArchive, read_pvalue_matrix, sha256_file
    from .joint import fit_joint

    pmatrix = read_pvalue_matrix(args.input)
    checksum = sha256_file(args.input)
    model = fit_joint(pmatrix, lam=args.lam)
    archive = FitArchive.from_model(
        model,
        item_ids=pmatrix.item_ids,
        input_path=str(args.input),
        input_sha256=checksum,
        include_posteriors=not args.no_posteriors,
    )
    target = archive.save(args.out, fmt="binary" if args.binary else "json")
    print(f"fitted {pmatrix.n} items x {pmatrix.q} tests "
          f"({model.joint.n_iter} EM iterations, converged={model.joint.converged})")
    print("pi0: " + " ".join(f"{v:.4f}" for v in model.pi0s))
    print(f"archive: {target}")
    return 0


def _parse_c1(q: int, text: str):
    """Parse a c1 spec; syntax errors are usage errors, size mismatches
    with the fitted Q are invalid-query errors."""
    import re

    from .core import parse_config_set
    from .errors import InvalidQueryError

    try:
        return parse_config_set(q, text)
    except InvalidArgumentError as exc:
        cleaned = ",".join(p.strip() for p in text.strip().lower().split(","))
        if re.fullmatch(r"all|atleast:\d+|run:\d+|[01*]+(,[01*]+)*", cleaned):
            raise InvalidQueryError(f"c1 spec {text!r} does not fit a Q={q} fit: {exc}") from exc
        raise _UsageError(f"malformed c1 spec {text!r}: {exc}") from exc


def cmd_query(args) -> int:
    from .io import load_archive, read_pvalue_matrix, sha256_file, write_query_result
    from .query import run_query

    archive = load_archive(args.fit_dir)
    posteriors = archive.posteriors
    if posteriors is None:
        source = args.input or archive.input_path
        if not source:
            raise InvalidArgumentError(
                "archive omits posteriors and records no input path; pass --input"
            )
        pmatrix = read_pvalue_matrix(source)
        posteriors = archive.recompute_posteriors(pmatrix, verify_checksum=sha256_file(source))
    c1 = _parse_c1(archive.q, args.c1)
    result = run_query(archive.joint_fit(posteriors), c1, alpha=args.alpha)
    write_query_result(result, archive.item_ids, args.out)
    threshold = "inf" if result.threshold == float("inf") else f"{result.threshold:.6f}"
    print(f"C1 = {c1.describe()}")
    print(f"rejected {result.n_rejected} of {result.n} items at alpha={args.alpha:g} "
          f"(threshold tau >= {threshold})")
    print(f"results: {args.out}")
    return 0


def cmd_simulate(args) -> int:
    from pathlib import Path

    import numpy as np

    from .io import write_pvalue_matrix, write_truth
    from .simulate import generate

    spec = _scenario_from(args)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(spec.seed)))
    data = generate(spec, rng)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    pv_path = outdir / "pvalues.tsv"
    truth_path = outdir / "truth.tsv"
    write_pvalue_matrix(data.pmatrix, pv_path)
    write_truth(data.pmatrix.item_ids, data.truth, spec.q, truth_path)
    print(f"wrote {pv_path} and {truth_path} "
          f"(n={spec.n}, Q={spec.q}, scenario={spec.delta_kind}, seed={spec.seed})")
    return 0


def cmd_bench(args) -> int:
    from .io import write_report
    from .simulate import run_benchmark

    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    spec = _scenario_from(args, n_runs=args.runs)
    report = run_benchmark(spec, alpha=args.alpha, methods=methods)
    tsv_path, txt_path = write_report(report, args.out)
    print(report.to_text())
    if report.failures:
        print(f"{len(report.failures)} of {spec.n_runs} runs failed", file=sys.stderr)
    print(f"report: {tsv_path}")
    return 0


_COMMANDS = {"fit": cmd_fit, "query": cmd_query, "simulate": cmd_simulate, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        _apply_thread_env()
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"comphyp: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except ComphypError as exc:
        print(f"comphyp: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"comphyp: error: {exc}", file=sys.stderr)
        return 2
    except (MemoryError, FloatingPointError) as exc:
        print(f"comphyp: numeric failure: {exc}", file=sys.stderr)
        return 3
    except SystemExit as exc:  # argparse --help
        code = exc.code
        return int(code) if isinstance(code, int) else 0


if __name__ == "__main__":
    sys.exit(main())
