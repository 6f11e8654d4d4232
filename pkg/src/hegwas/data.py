"""CSV ingestion, validation and preprocessing.

Formats (row per sample, comma separated, header row):
  covariates.csv  sample_id, <covariate names...>          real values
  pheno.csv       sample_id, pheno                         0 or 1
  snps.csv        sample_id, <snp names...>                0, 1, 2 or NA

Preprocessing z-scores covariates and SNPs, prepends the intercept column,
mean-imputes NA dosages and computes the verified covariate Gram inverse.
"""
from __future__ import annotations

import csv
import io as _stdio
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .io import read_text, write_text
from .oracle import CleartextDataset

_DOSAGES = {"0": 0.0, "1": 1.0, "2": 2.0}


@dataclass
class PreprocessResult:
    dataset: CleartextDataset
    xtx_inv: np.ndarray
    sample_ids: list[str]
    covariate_names: list[str]
    snp_ids: list[str]


def _parse_csv(path, what: str) -> tuple[list[str], list[list[str]]]:
    text = read_text(path)
    reader = csv.reader(_stdio.StringIO(text))
    rows = [row for row in reader if row]
    if len(rows) < 2:
        raise InputError(f"{what} file {path}: need a header row and at least one sample")
    header = [c.strip() for c in rows[0]]
    body = [[c.strip() for c in row] for row in rows[1:]]
    width = len(header)
    for i, row in enumerate(body, start=2):
        if len(row) != width:
            raise InputError(
                f"{what} file {path}, line {i}: expected {width} columns, found {len(row)}"
            )
    return header, body


def read_covariates(path) -> tuple[list[str], list[str], np.ndarray]:
    header, body = _parse_csv(path, "covariates")
    names = header[1:]
    ids = [row[0] for row in body]
    values = np.empty((len(body), len(names)))
    for i, row in enumerate(body, start=2):
        for j, cell in enumerate(row[1:]):
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise InputError(
                    f"covariates file {path}, line {i}: non-numeric value {cell!r}"
                ) from None
    return ids, names, values


def read_pheno(path) -> tuple[list[str], np.ndarray]:
    header, body = _parse_csv(path, "phenotype")
    if len(header) != 2:
        raise InputError(f"phenotype file {path}: expected columns sample_id,pheno")
    ids = [row[0] for row in body]
    values = np.empty(len(body))
    for i, row in enumerate(body, start=2):
        if row[1] not in ("0", "1"):
            raise InputError(
                f"phenotype file {path}, line {i}: non-binary phenotype {row[1]!r}"
            )
        values[i - 2] = float(row[1])
    return ids, values


def read_snps(path) -> tuple[list[str], list[str], np.ndarray]:
    """Dosage matrix with NaN for NA entries."""
    header, body = _parse_csv(path, "snp")
    snp_ids = header[1:]
    ids = [row[0] for row in body]
    values = np.empty((len(body), len(snp_ids)))
    for i, row in enumerate(body, start=2):
        for j, cell in enumerate(row[1:]):
            if cell.upper() == "NA":
                values[i - 2, j] = np.nan
            elif cell in _DOSAGES:
                values[i - 2, j] = _DOSAGES[cell]
            else:
                raise InputError(
                    f"snp file {path}, line {i}: dosage must be 0, 1, 2 or NA, found {cell!r}"
                )
    return ids, snp_ids, values


def standardize(matrix: np.ndarray) -> np.ndarray:
    """Column z-scores (population std); zero-variance columns become zeros."""
    matrix = np.asarray(matrix, dtype=float)
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    out = np.zeros_like(matrix)
    nz = std > 0
    out[:, nz] = (matrix[:, nz] - mean[nz]) / std[nz]
    return out


def mean_impute(matrix: np.ndarray) -> np.ndarray:
    out = np.array(matrix, dtype=float)
    for j in range(out.shape[1]):
        col = out[:, j]
        missing = np.isnan(col)
        if missing.any():
            fill = col[~missing].mean() if (~missing).any() else 0.0
            col[missing] = fill
    return out


def compute_xtx_inv(x_mat: np.ndarray) -> np.ndarray:
    """Verified dense inverse of X^T X; raises on (near-)singular designs."""
    gram = x_mat.T @ x_mat
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise InputError(
            "X^T X is singular or near-singular; remove constant or collinear covariates"
        )
    if cond > 1e8:
        import warnings

        warnings.warn(f"X^T X condition number {cond:.3g} above 1e8", stacklevel=2)
    inv = np.linalg.inv(gram)
    residual = np.abs(gram @ inv - np.eye(gram.shape[0])).max()
    if residual >= 1e-8:
        raise InputError(f"inverse verification failed: residual {residual:.3g}")
    return inv


def preprocess(covariates_path, pheno_path, snps_path) -> PreprocessResult:
    cov_ids, cov_names, covars = read_covariates(covariates_path)
    ph_ids, pheno = read_pheno(pheno_path)
    snp_sample_ids, snp_ids, dosages = read_snps(snps_path)
    if not (cov_ids == ph_ids == snp_sample_ids):
        raise InputError("sample ids disagree across covariates, phenotype and snp files")

    if covars.shape[1] and np.any(covars.std(axis=0) == 0):
        j = int(np.where(covars.std(axis=0) == 0)[0][0])
        raise InputError(
            f"covariate {cov_names[j]!r} is constant; remove it (the model carries an intercept)"
        )
    n = covars.shape[0]
    x_mat = np.column_stack([np.ones(n), standardize(covars)])
    s_mat = standardize(mean_impute(dosages))
    xtx_inv = compute_xtx_inv(x_mat)
    dataset = CleartextDataset(X=x_mat, S=s_mat, y=pheno)
    return PreprocessResult(dataset=dataset, xtx_inv=xtx_inv, sample_ids=cov_ids,
                            covariate_names=cov_names, snp_ids=snp_ids)


def write_fixture_csvs(outdir, covars: np.ndarray, pheno: np.ndarray,
                       dosages: np.ndarray) -> dict[str, str]:
    """Write the three input CSVs for a synthetic dataset; returns their paths."""
    from pathlib import Path

    outdir = Path(outdir)
    n, d = covars.shape
    k = dosages.shape[1]
    ids = [f"s{i:04d}" for i in range(n)]

    lines = ["sample_id," + ",".join(f"cov{j}" for j in range(d))]
    for i in range(n):
        lines.append(ids[i] + "," + ",".join(repr(float(v)) for v in covars[i]))
    write_text(outdir / "covariates.csv", "\n".join(lines) + "\n")

    lines = ["sample_id,pheno"]
    for i in range(n):
        lines.append(f"{ids[i]},{int(pheno[i])}")
    write_text(outdir / "pheno.csv", "\n".join(lines) + "\n")

    lines = ["sample_id," + ",".join(f"snp{j}" for j in range(k))]
    for i in range(n):
        cells = ["NA" if np.isnan(v) else str(int(v)) for v in dosages[i]]
        lines.append(ids[i] + "," + ",".join(cells))
    write_text(outdir / "snps.csv", "\n".join(lines) + "\n")

    return {
        "covariates": str(outdir / "covariates.csv"),
        "pheno": str(outdir / "pheno.csv"),
        "snps": str(outdir / "snps.csv"),
    }
