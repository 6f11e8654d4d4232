"""Cleartext reference implementations and accuracy scoring.

Everything the encrypted pipeline computes exists here in plain numpy: exact
Newton-Raphson logistic regression, the approximate variant (degree-7 sigmoid
plus the fixed-curvature update), the weighted and simplified semi-parallel
association statistics, and the two accuracy methodologies (entry-difference
counts and a best-fit line).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InputError

# Degree-7 sigmoid approximation over x/8: 0.5 + c1 u + c3 u^3 + c5 u^5 + c7 u^7.
SIGMA7_C1 = -1.73496
SIGMA7_C3 = 4.19407
SIGMA7_C5 = -5.43402
SIGMA7_C7 = 2.50739


def sigma7(x):
    """Degree-7 sigmoid approximation, valid on [-8, 8].

    With these coefficients the polynomial is a fit of the REFLECTED sigmoid
    (it decreases through 0.5 at the origin); callers that want an increasing
    response evaluate it at the negated argument.
    """
    u = np.asarray(x, dtype=float) / 8.0
    u2 = u * u
    return 0.5 + u * (SIGMA7_C1 + u2 * (SIGMA7_C3 + u2 * (SIGMA7_C5 + u2 * SIGMA7_C7)))


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def log_likelihood(x_mat, y, beta) -> float:
    """sum y_i (beta.x_i) - sum log(exp(beta.x_i) + 1)."""
    eta = x_mat @ beta
    return float(y @ eta - np.logaddexp(0.0, eta).sum())


@dataclass
class CleartextDataset:
    """Standardized design: X carries a leading ones column, y is 0/1."""

    X: np.ndarray  # n x (d+1)
    S: np.ndarray  # n x k
    y: np.ndarray  # n

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.S = np.asarray(self.S, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if not np.allclose(self.X[:, 0], 1.0):
            raise InputError("first column of X must be the intercept (all ones)")
        if not np.all(np.isin(self.y, (0.0, 1.0))):
            raise InputError("response must be binary")
        if self.X.shape[0] != self.S.shape[0] or self.X.shape[0] != self.y.shape[0]:
            raise DimensionError("X, S and y disagree on the sample count")


# -- logistic regression -------------------------------------------------------

def oracle_logreg_exact(x_mat, y, iters: int = 25) -> np.ndarray:
    """Newton-Raphson with the exact sigmoid and exact Hessian X^T W X."""
    x_mat = np.asarray(x_mat, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = np.zeros(x_mat.shape[1])
    for _ in range(iters):
        p = sigmoid(x_mat @ beta)
        w = p * (1.0 - p)
        hess = x_mat.T @ (w[:, None] * x_mat)
        grad = x_mat.T @ (y - p)
        beta = beta + np.linalg.solve(hess, grad)
    return beta


def oracle_logreg_approx(x_mat, y, kappa: int, return_state: bool = False):
    """The approximate iteration: p = sigma7(X beta), fixed update 4 (X^T X)^-1 g.

    Returns beta after kappa iterations; with return_state also the stale
    probability vector (from the final iteration's entry beta) and the list of
    betas per iteration.
    """
    if kappa < 1:
        raise InputError("kappa must be at least 1")
    x_mat = np.asarray(x_mat, dtype=float)
    y = np.asarray(y, dtype=float)
    xtx_inv = np.linalg.inv(x_mat.T @ x_mat)
    beta = np.zeros(x_mat.shape[1])
    history = [beta.copy()]
    p = None
    for _ in range(kappa):
        p = sigma7(-(x_mat @ beta))  # reflected polynomial; see sigma7
        grad = x_mat.T @ (y - p)
        beta = beta + 4.0 * (xtx_inv @ grad)
        history.append(beta.copy())
    if return_state:
        return beta, p, history
    return beta


# -- semi-parallel association statistics --------------------------------------

def _colsum_stats(w, z_orth, s_orth):
    numerator = (w * z_orth) @ s_orth
    denominator = w @ (s_orth * s_orth)
    return numerator, denominator


def _finalize(numerator, denominator):
    # Denominators at rounding-noise level mean the SNP was annihilated by the
    # projection (zero variance or collinear with X): flagged, not divided.
    floor = 1e-10 * max(1.0, float(np.max(denominator, initial=0.0)))
    ok = denominator > floor
    b = np.full(numerator.shape, np.nan)
    err = np.full(numerator.shape, np.nan)
    b[ok] = numerator[ok] / denominator[ok]
    err[ok] = np.sqrt(1.0 / denominator[ok])
    return b, err


def oracle_gwas_original(dataset: CleartextDataset, beta, p):
    """The weighted projections: S* = S - X (X^T W X)^-1 X^T W S, likewise z*."""
    x_mat, s_mat, y = dataset.X, dataset.S, dataset.y
    p = np.asarray(p, dtype=float)
    w = p * (1.0 - p)
    z = x_mat @ beta + (y - p) / w
    xtwx_inv = np.linalg.inv(x_mat.T @ (w[:, None] * x_mat))
    proj = x_mat @ (xtwx_inv @ (x_mat.T * w))
    s_star = s_mat - proj @ s_mat
    z_star = z - proj @ z
    return _finalize(*_colsum_stats(w, z_star, s_star))


def gwas_modified_parts(dataset: CleartextDataset, beta, p):
    """Numerator and denominator of the simplified statistic (unweighted projector)."""
    x_mat, s_mat, y = dataset.X, dataset.S, dataset.y
    p = np.asarray(p, dtype=float)
    w = p * (1.0 - p)
    z = x_mat @ beta + (y - p) / w
    m = projection_complement(x_mat)
    return _colsum_stats(w, m @ z, m @ s_mat)


def oracle_gwas_modified(dataset: CleartextDataset, beta, p):
    """Effects and standard errors under M = I - X (X^T X)^-1 X^T."""
    return _finalize(*gwas_modified_parts(dataset, beta, p))


def projection_complement(x_mat) -> np.ndarray:
    x_mat = np.asarray(x_mat, dtype=float)
    n = x_mat.shape[0]
    return np.eye(n) - x_mat @ np.linalg.inv(x_mat.T @ x_mat) @ x_mat.T


def wald_pvalues(b, denominator) -> np.ndarray:
    """Two-sided normal p-values for b with variance 1/denominator."""
    b = np.asarray(b, dtype=float)
    den = np.asarray(denominator, dtype=float)
    out = np.full(b.shape, np.nan)
    ok = np.isfinite(b) & (den > 0)
    zstat = np.abs(b[ok]) * np.sqrt(den[ok])
    out[ok] = np.array([math.erfc(z / math.sqrt(2.0)) for z in zstat])
    return out


# -- accuracy methodology -------------------------------------------------------

@dataclass
class AccuracyReport:
    """Entry-difference counts per threshold plus the least-squares fit line."""

    diff_counts: dict[float, int]
    fit_slope: float
    fit_intercept: float
    scatter: list[tuple[float, float]] = field(default_factory=list)

    def accuracy_pct(self, threshold: float) -> float:
        total = len(self.scatter)
        if not total:
            return float("nan")
        return 100.0 * (total - self.diff_counts[threshold]) / total

    def to_tsv(self) -> str:
        lines = ["threshold\tnum_different\taccuracy_pct"]
        for e in sorted(self.diff_counts, reverse=True):
            lines.append(f"{e}\t{self.diff_counts[e]}\t{self.accuracy_pct(e):.2f}")
        return "\n".join(lines) + "\n"

    def summary_text(self) -> str:
        lines = [f"best-fit line: y = {self.fit_slope:.6g} x + {self.fit_intercept:.6g}",
                 f"entries compared: {len(self.scatter)}"]
        for e in sorted(self.diff_counts, reverse=True):
            lines.append(
                f"  |diff| > {e}: {self.diff_counts[e]} entries "
                f"({self.accuracy_pct(e):.2f}% within)"
            )
        return "\n".join(lines) + "\n"


def compare(reference, test, thresholds=(0.1, 0.01, 0.005)) -> AccuracyReport:
    reference = np.asarray(reference, dtype=float)
    test = np.asarray(test, dtype=float)
    if reference.shape != test.shape:
        raise DimensionError(f"length mismatch: {reference.shape} vs {test.shape}")
    diff = np.abs(test - reference)
    counts = {float(e): int(np.sum(diff > e)) for e in thresholds}
    if reference.size >= 2 and np.ptp(reference) > 0:
        slope, intercept = np.polyfit(reference, test, 1)
    else:
        slope, intercept = (1.0, 0.0) if np.allclose(reference, test) else (0.0, 0.0)
    scatter = list(zip(reference.tolist(), test.tolist()))
    return AccuracyReport(diff_counts=counts, fit_slope=float(slope),
                          fit_intercept=float(intercept), scatter=scatter)


# -- synthetic data --------------------------------------------------------------

def standardize_columns(mat) -> np.ndarray:
    """Z-score each column; zero-variance columns become all zeros."""
    mat = np.asarray(mat, dtype=float)
    mean = mat.mean(axis=0)
    std = mat.std(axis=0)
    out = np.zeros_like(mat)
    nz = std > 0
    out[:, nz] = (mat[:, nz] - mean[nz]) / std[nz]
    return out


def synth_tables(n: int, d: int, k: int, seed: int, effect_fraction: float = 0.1,
                 na_fraction: float = 0.0):
    """Raw generator: covariates, 0/1 phenotype and {0,1,2} dosages (optionally with NAs)."""
    rng = np.random.default_rng(seed)
    covars = rng.normal(0.0, 1.0, size=(n, d))
    mafs = rng.uniform(0.1, 0.5, size=k)
    dosages = rng.binomial(2, mafs, size=(n, k)).astype(float)

    s_std = standardize_columns(dosages)
    # Weak effects keep the fitted probabilities near 0.5, where both the
    # polynomial sigmoid and the short reciprocal iteration are accurate.
    beta_true = rng.normal(0.0, 0.15 / max(1.0, np.sqrt(d)), size=d + 1)
    beta_true[0] = 0.0
    n_effects = int(round(effect_fraction * k))
    gamma = np.zeros(k)
    if n_effects:
        picks = rng.choice(k, size=n_effects, replace=False)
        gamma[picks] = rng.uniform(0.15, 0.35, size=n_effects) * rng.choice((-1.0, 1.0), size=n_effects)
    eta = np.column_stack([np.ones(n), standardize_columns(covars)]) @ beta_true + s_std @ gamma
    y = (rng.uniform(size=n) < sigmoid(eta)).astype(float)

    dosage_out = dosages.copy()
    if na_fraction > 0:
        mask = rng.uniform(size=dosages.shape) < na_fraction
        dosage_out[mask] = np.nan
    return covars, y, dosage_out


def synth_dataset(n: int, d: int, k: int, seed: int,
                  effect_fraction: float = 0.1) -> CleartextDataset:
    """Standardized synthetic dataset with a known sparse SNP effect."""
    covars, y, dosages = synth_tables(n, d, k, seed, effect_fraction)
    x_mat = np.column_stack([np.ones(n), standardize_columns(covars)])
    return CleartextDataset(X=x_mat, S=standardize_columns(dosages), y=y)
