"""File formats: p-value matrices, fit archives, query results, reports.

The fit archive persists everything needed to answer queries without
refitting: per-test null proportions, bandwidths, gridded alternative
densities, the joint configuration weights, and (by default) the
posterior matrix.  When posteriors are omitted the archive keeps a
checksum of the input file so they can be recomputed from a verified
re-read with a single E-step.

All writers are deterministic: identical inputs produce identical bytes.
"""

from __future__ import annotations

import hashlib
import io as _io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .core import PValueMatrix, config_to_string, index_to_config
from .errors import InvalidDataError, ParseError
from .joint import FittedModel, JointFit, build_log_densities, e_step_posteriors
from .marginal import MarginalFit, probit_transform
from .query import QueryResult

ARCHIVE_VERSION = 1
_JSON_NAME = "fit.json"
_NPZ_NAME = "fit.npz"
_POSTERIOR_NAME = "posteriors.npy"
_SUMMARY_NAME = "summary.txt"


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _sniff_delimiter(header_line: str) -> str:
    if "\t" in header_line:
        return "\t"
    if "," in header_line:
        return ","
    raise ParseError(
        "header line must be tab- or comma-delimited with an item_id column "
        "followed by at least one p-value column"
    )


def read_pvalue_matrix(path) -> PValueMatrix:
    """Read a delimited p-value matrix: item_id column, then Q numeric columns.

    The delimiter (tab or comma) is sniffed from the header line.  Bad
    cells are reported with their 1-based file line number.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
    if not header.strip():
        raise ParseError(f"{path}: empty file")
    sep = _sniff_delimiter(header)
    names = [c.strip() for c in header.rstrip("\n").split(sep)]
    if len(names) < 2:
        raise ParseError(f"{path}: need an item_id column plus at least one p-value column")
    try:
        df = pd.read_csv(
            path,
            sep=sep,
            skiprows=1,
            names=names,
            dtype={names[0]: str, **{c: np.float64 for c in names[1:]}},
            na_filter=False,
        )
    except (ValueError, pd.errors.ParserError):
        _diagnose_bad_cell(path, sep, names)
        raise  # unreachable; _diagnose_bad_cell always raises
    values = df.iloc[:, 1:].to_numpy(dtype=np.float64)
    bad = ~np.isfinite(values)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ParseError(f"{path}: non-finite p-value at line {i + 2}, column {names[j + 1]!r}")
    out = (values < 0.0) | (values > 1.0)
    if out.any():
        i, j = np.argwhere(out)[0]
        raise ParseError(
            f"{path}: p-value out of [0, 1] at line {i + 2}, column {names[j + 1]!r}: {values[i, j]!r}"
        )
    ids = df.iloc[:, 0].to_numpy(dtype=str)
    return PValueMatrix(item_ids=ids, values=values)


def _diagnose_bad_cell(path: Path, sep: str, names: list[str]) -> None:
    """Slow re-read to name the first unparseable cell, then raise."""
    df = pd.read_csv(path, sep=sep, skiprows=1, names=names, dtype=str, na_filter=False)
    for j, col in enumerate(names[1:], start=1):
        parsed = pd.to_numeric(df.iloc[:, j], errors="coerce")
        bad = parsed.isna().to_numpy()
        if bad.any():
            i = int(np.nonzero(bad)[0][0])
            raise ParseError(
                f"{path}: non-numeric value {df.iloc[i, j]!r} at line {i + 2}, column {col!r}"
            )
    raise ParseError(f"{path}: malformed delimited file")


def write_pvalue_matrix(pmatrix: PValueMatrix, path) -> None:
    """Write a matrix in the same TSV layout ``read_pvalue_matrix`` accepts."""
    cols = {"item_id": pmatrix.item_ids}
    for j in range(pmatrix.q):
        cols[f"p{j + 1}"] = pmatrix.values[:, j]
    pd.DataFrame(cols).to_csv(path, sep="\t", index=False)


def write_truth(item_ids: np.ndarray, truth: np.ndarray, q: int, path) -> None:
    """Write latent configuration assignments as item_id + bit string."""
    labels = [config_to_string(index_to_config(int(k), q)) for k in truth]
    pd.DataFrame({"item_id": item_ids, "config": labels}).to_csv(path, sep="\t", index=False)


def write_query_result(result: QueryResult, item_ids: np.ndarray, path) -> None:
    """Result TSV: item_id, tau, rank, local_fdr, rejected, label."""
    df = pd.DataFrame(
        {
            "item_id": item_ids,
            "tau": result.tau,
            "rank": result.ranks,
            "local_fdr": result.local_fdr,
            "rejected": np.where(result.rejected, "true", "false"),
            "label": result.labels(),
        }
    )
    df.to_csv(path, sep="\t", index=False, float_format="%.10g")


def _deterministic_npz(path, arrays: dict[str, np.ndarray]) -> None:
    """np.savez with fixed zip metadata so identical arrays give identical bytes."""
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = _io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


@dataclass(frozen=True, eq=False)
class FitArchive:
    """Persisted fit: everything a query needs, detached from the fitting run."""

    version: int
    lam: float
    input_path: str
    input_sha256: str
    item_ids: np.ndarray = field(repr=False)
    pi0s: np.ndarray = field(repr=False)
    bandwidths: np.ndarray = field(repr=False)
    marginal_iterations: np.ndarray = field(repr=False)
    marginal_converged: np.ndarray = field(repr=False)
    grids: tuple = field(repr=False)
    g1s: tuple = field(repr=False)
    weights: np.ndarray = field(repr=False)
    loglik_trace: np.ndarray = field(repr=False)
    em_iterations: int
    em_converged: bool
    posteriors: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.item_ids.shape[0]

    @property
    def q(self) -> int:
        return self.pi0s.shape[0]

    @classmethod
    def from_model(
        cls,
        model: FittedModel,
        item_ids: np.ndarray,
        input_path: str = "",
        input_sha256: str = "",
        include_posteriors: bool = True,
    ) -> "FitArchive":
        return cls(
            version=ARCHIVE_VERSION,
            lam=model.lam,
            input_path=str(input_path),
            input_sha256=input_sha256,
            item_ids=np.asarray(item_ids, dtype=str),
            pi0s=model.pi0s,
            bandwidths=np.array([m.bandwidth for m in model.marginals]),
            marginal_iterations=np.array([m.iterations for m in model.marginals], dtype=np.int64),
            marginal_converged=np.array([m.converged for m in model.marginals], dtype=bool),
            grids=tuple(m.grid for m in model.marginals),
            g1s=tuple(m.g1_on_grid for m in model.marginals),
            weights=model.weights,
            loglik_trace=model.joint.loglik_trace,
            em_iterations=model.joint.n_iter,
            em_converged=model.joint.converged,
            posteriors=model.posteriors if include_posteriors else None,
        )

    def marginal_fits(self) -> tuple[MarginalFit, ...]:
        """Rebuild density-evaluable marginal fits (without per-item tau)."""
        fits = []
        for j in range(self.q):
            fits.append(
                MarginalFit(
                    pi0=float(self.pi0s[j]),
                    bandwidth=float(self.bandwidths[j]),
                    grid=self.grids[j],
                    g1_on_grid=self.g1s[j],
                    tau=np.empty(0),
                    iterations=int(self.marginal_iterations[j]),
                    converged=bool(self.marginal_converged[j]),
                    lam=self.lam,
                )
            )
        return tuple(fits)

    def joint_fit(self, posteriors: np.ndarray | None = None) -> JointFit:
        post = posteriors if posteriors is not None else self.posteriors
        if post is None:
            raise InvalidDataError("archive has no posteriors; recompute them first")
        return JointFit(
            weights=self.weights,
            posteriors=post,
            loglik_trace=self.loglik_trace,
            n_iter=self.em_iterations,
            converged=self.em_converged,
        )

    def recompute_posteriors(self, pmatrix: PValueMatrix, verify_checksum: str = "") -> np.ndarray:
        """One E-step on a re-read input; checksum must match when given."""
        if verify_checksum and self.input_sha256 and verify_checksum != self.input_sha256:
            raise InvalidDataError(
                "input checksum does not match the file this archive was fitted on"
            )
        if pmatrix.n != self.n or pmatrix.q != self.q:
            raise InvalidDataError(
                f"archive was fitted on a {self.n} x {self.q} matrix, "
                f"got {pmatrix.n} x {pmatrix.q}"
            )
        scores = np.column_stack([probit_transform(pmatrix.column(j)) for j in range(self.q)])
        logf = build_log_densities(self.marginal_fits(), scores)
        return e_step_posteriors(logf, self.weights)

    def save(self, outdir, fmt: str = "json", include_posteriors: bool | None = None) -> Path:
        """Write the archive into ``outdir`` as JSON (default) or npz.

        JSON keeps the posterior matrix in a sidecar .npy file; npz packs
        everything into one zip.  Also writes a human-readable summary.
        """
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        if include_posteriors is None:
            include_posteriors = self.posteriors is not None
        post = self.posteriors if include_posteriors else None
        if include_posteriors and post is None:
            raise InvalidDataError("archive holds no posteriors to save")

        meta = {
            "format_version": self.version,
            "kind": "comphyp-fit",
            "n": int(self.n),
            "q": int(self.q),
            "lambda": self.lam,
            "input_path": self.input_path,
            "input_sha256": self.input_sha256,
            "em_iterations": int(self.em_iterations),
            "em_converged": bool(self.em_converged),
            "has_posteriors": post is not None,
        }
        if fmt == "json":
            payload = dict(meta)
            payload.update(
                {
                    "item_ids": self.item_ids.tolist(),
                    "pi0s": self.pi0s.tolist(),
                    "bandwidths": self.bandwidths.tolist(),
                    "marginal_iterations": self.marginal_iterations.tolist(),
                    "marginal_converged": self.marginal_converged.tolist(),
                    "grids": [g.tolist() for g in self.grids],
                    "g1s": [g.tolist() for g in self.g1s],
                    "weights": self.weights.tolist(),
                    "loglik_trace": self.loglik_trace.tolist(),
                }
            )
            target = outdir / _JSON_NAME
            with open(target, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
                fh.write("\n")
            if post is not None:
                with open(outdir / _POSTERIOR_NAME, "wb") as fh:
                    np.lib.format.write_array(fh, post, allow_pickle=False)
        elif fmt == "binary":
            arrays = {
                "meta_json": np.frombuffer(
                    json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
                ),
                "item_ids": self.item_ids,
                "pi0s": self.pi0s,
                "bandwidths": self.bandwidths,
                "marginal_iterations": self.marginal_iterations,
                "marginal_converged": self.marginal_converged,
                "weights": self.weights,
                "loglik_trace": self.loglik_trace,
            }
            for j in range(self.q):
                arrays[f"grid_{j}"] = self.grids[j]
                arrays[f"g1_{j}"] = self.g1s[j]
            if post is not None:
                arrays["posteriors"] = post
            target = outdir / _NPZ_NAME
            _deterministic_npz(target, arrays)
        else:
            raise InvalidDataError(f"unknown archive format {fmt!r}")
        (outdir / _SUMMARY_NAME).write_text(self.summary_text(), encoding="utf-8")
        return target

    def summary_text(self) -> str:
        lines = [
            f"items: {self.n}",
            f"tests: {self.q}",
            f"lambda: {self.lam:g}",
            "pi0 estimates: " + " ".join(f"{v:.4f}" for v in self.pi0s),
            "bandwidths: " + " ".join(f"{v:.4f}" for v in self.bandwidths),
            f"log-likelihood: {self.loglik_trace[-1]:.6f} "
            f"({self.em_iterations} iterations, converged={self.em_converged})",
            "configuration weights (descending):",
        ]
        order = np.argsort(-self.weights, kind="stable")
        for k in order:
            cfg = config_to_string(index_to_config(int(k), self.q))
            lines.append(f"  {cfg}  {self.weights[k]:.6f}")
        return "\n".join(lines) + "\n"


def load_archive(directory) -> FitArchive:
    """Load an archive saved by :meth:`FitArchive.save` (either format)."""
    directory = Path(directory)
    npz_path = directory / _NPZ_NAME
    json_path = directory / _JSON_NAME
    if npz_path.exists():
        with np.load(npz_path, allow_pickle=False) as data:
            meta = json.loads(bytes(data["meta_json"]).decode("utf-8"))
            _check_version(meta)
            q = int(meta["q"])
            return FitArchive(
                version=int(meta["format_version"]),
                lam=float(meta["lambda"]),
                input_path=meta["input_path"],
                input_sha256=meta["input_sha256"],
                item_ids=data["item_ids"].astype(str),
                pi0s=data["pi0s"],
                bandwidths=data["bandwidths"],
                marginal_iterations=data["marginal_iterations"],
                marginal_converged=data["marginal_converged"],
                grids=tuple(data[f"grid_{j}"] for j in range(q)),
                g1s=tuple(data[f"g1_{j}"] for j in range(q)),
                weights=data["weights"],
                loglik_trace=data["loglik_trace"],
                em_iterations=int(meta["em_iterations"]),
                em_converged=bool(meta["em_converged"]),
                posteriors=data["posteriors"] if "posteriors" in data else None,
            )
    if json_path.exists():
        with open(json_path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        _check_version(payload)
        posteriors = None
        post_path = directory / _POSTERIOR_NAME
        if payload.get("has_posteriors") and post_path.exists():
            posteriors = np.load(post_path, allow_pickle=False)
        return FitArchive(
            version=int(payload["format_version"]),
            lam=float(payload["lambda"]),
            input_path=payload["input_path"],
            input_sha256=payload["input_sha256"],
            item_ids=np.asarray(payload["item_ids"], dtype=str),
            pi0s=np.asarray(payload["pi0s"], dtype=np.float64),
            bandwidths=np.asarray(payload["bandwidths"], dtype=np.float64),
            marginal_iterations=np.asarray(payload["marginal_iterations"], dtype=np.int64),
            marginal_converged=np.asarray(payload["marginal_converged"], dtype=bool),
            grids=tuple(np.asarray(g, dtype=np.float64) for g in payload["grids"]),
            g1s=tuple(np.asarray(g, dtype=np.float64) for g in payload["g1s"]),
            weights=np.asarray(payload["weights"], dtype=np.float64),
            loglik_trace=np.asarray(payload["loglik_trace"], dtype=np.float64),
            em_iterations=int(payload["em_iterations"]),
            em_converged=bool(payload["em_converged"]),
            posteriors=posteriors,
        )
    raise InvalidDataError(f"no fit archive ({_JSON_NAME} or {_NPZ_NAME}) in {directory}")


def _check_version(meta: dict) -> None:
    if meta.get("kind") not in (None, "comphyp-fit"):
        raise InvalidDataError(f"not a fit archive: kind={meta.get('kind')!r}")
    version = int(meta.get("format_version", -1))
    if version != ARCHIVE_VERSION:
        raise InvalidDataError(f"unsupported archive version {version}")


def write_report(report, outdir) -> tuple[Path, Path]:
    """Write a benchmark report as TSV rows plus an aligned text table."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tsv_path = outdir / "report.tsv"
    txt_path = outdir / "report.txt"
    pd.DataFrame(report.to_rows()).to_csv(tsv_path, sep="\t", index=False, float_format="%.6g")
    body = report.to_text() + "\n"
    if report.failures:
        body += "\nfailed runs:\n" + "\n".join("  " + f for f in report.failures) + "\n"
    txt_path.write_text(body, encoding="utf-8")
    return tsv_path, txt_path
