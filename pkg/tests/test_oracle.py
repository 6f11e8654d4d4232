import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hegwas import (
    CleartextDataset,
    compare,
    oracle_gwas_modified,
    oracle_gwas_original,
    oracle_logreg_approx,
    oracle_logreg_exact,
    sigma7,
    synth_dataset,
    synth_tables,
    wald_pvalues,
)
from hegwas.errors import DimensionError, InputError
from hegwas.oracle import (
    gwas_modified_parts,
    log_likelihood,
    projection_complement,
    sigmoid,
    standardize_columns,
)


# -- sigma7 ---------------------------------------------------------------------


def test_sigma7_at_zero():
    assert sigma7(0.0) == 0.5


def test_sigma7_at_eight():
    expected = 0.5 - 1.73496 + 4.19407 - 5.43402 + 2.50739  # = 0.03248
    assert abs(expected - 0.03248) < 1e-12
    assert abs(sigma7(8.0) - expected) < 1e-12


def test_sigma7_odd_symmetry():
    xs = np.linspace(-8, 8, 41)
    assert np.max(np.abs(sigma7(-xs) - (1.0 - sigma7(xs)))) < 1e-9


def test_sigma7_reflected_tracks_sigmoid():
    xs = np.linspace(-5, 5, 21)
    assert np.max(np.abs(sigma7(-xs) - sigmoid(xs))) < 0.03


# -- exact logistic regression -----------------------------------------------------


def test_exact_logreg_balanced_symmetric_zero():
    x = np.array([[1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [1.0, -1.0]])
    y = np.array([1.0, 1.0, 0.0, 0.0])
    beta = oracle_logreg_exact(x, y, iters=10)
    assert np.max(np.abs(beta)) < 1e-9


def test_exact_logreg_diverges_on_separable_data():
    # perfectly separated: the MLE runs off to infinity
    x = np.column_stack([np.ones(8), np.linspace(-2, 2, 8)])
    y = (x[:, 1] > 0).astype(float)
    beta = oracle_logreg_exact(x, y, iters=40)
    assert abs(beta[1]) > 8.0


def test_exact_logreg_self_consistency():
    rng = np.random.default_rng(0)
    x = np.column_stack([np.ones(100), rng.normal(size=(100, 2))])
    beta_true = np.array([0.2, -0.5, 0.8])
    y = (rng.uniform(size=100) < sigmoid(x @ beta_true)).astype(float)
    full = oracle_logreg_exact(x, y, iters=30)
    # halved steps, doubled count reaches the same fixed point
    beta = np.zeros(3)
    for _ in range(60):
        p = sigmoid(x @ beta)
        w = p * (1 - p)
        hess = x.T @ (w[:, None] * x)
        beta = beta + 0.5 * np.linalg.solve(hess, x.T @ (y - p))
    assert np.max(np.abs(full - beta)) < 1e-6


# -- approximate logistic regression -------------------------------------------------


def test_approx_logreg_balanced_orthogonal_stays_zero():
    x = np.array([[1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [1.0, -1.0]])
    y = np.array([1.0, 0.0, 0.0, 1.0])  # balanced, uncorrelated with the column
    beta = oracle_logreg_approx(x, y, kappa=1)
    assert np.max(np.abs(beta)) < 1e-12


def test_approx_logreg_rejects_zero_iterations():
    x = np.column_stack([np.ones(4), np.arange(4.0)])
    with pytest.raises(InputError):
        oracle_logreg_approx(x, np.array([0.0, 1, 0, 1]), kappa=0)


def test_approx_logreg_close_to_exact_mle():
    ds = synth_dataset(n=32, d=2, k=4, seed=21, effect_fraction=0.0)
    approx = oracle_logreg_approx(ds.X, ds.y, kappa=3)
    exact = oracle_logreg_exact(ds.X, ds.y, iters=25)
    assert np.max(np.abs(approx - exact)) < 0.15


def test_approx_logreg_monotone_likelihood_fixture():
    # seed chosen so the three updates each still gain likelihood
    ds = synth_dataset(n=32, d=4, k=16, seed=8, effect_fraction=0.1)
    _, _, history = oracle_logreg_approx(ds.X, ds.y, kappa=3, return_state=True)
    lls = [log_likelihood(ds.X, ds.y, b) for b in history]
    assert all(lls[i + 1] >= lls[i] for i in range(len(lls) - 1))


# -- association statistic oracles ------------------------------------------------------


def _fitted(ds, kappa=3):
    return oracle_logreg_approx(ds.X, ds.y, kappa, return_state=True)[:2]


def test_original_reduces_to_modified_for_scalar_weights():
    ds = synth_dataset(n=16, d=2, k=8, seed=3, effect_fraction=0.0)
    beta = np.zeros(ds.X.shape[1])
    p_half = np.full(16, 0.5)  # W = 0.25 I exactly
    b_orig, err_orig = oracle_gwas_original(ds, beta, p_half)
    b_mod, err_mod = oracle_gwas_modified(ds, beta, p_half)
    assert np.max(np.abs(b_orig - b_mod)) < 1e-10
    assert np.max(np.abs(err_orig - err_mod)) < 1e-10


def test_original_collinear_snp_is_degenerate():
    ds = synth_dataset(n=16, d=2, k=4, seed=5, effect_fraction=0.0)
    s = ds.S.copy()
    s[:, 0] = ds.X[:, 1]  # SNP equals a covariate column
    ds2 = CleartextDataset(X=ds.X, S=s, y=ds.y)
    beta, p = _fitted(ds2)
    b, err = oracle_gwas_original(ds2, beta, p)
    assert abs(b[0]) < 1e-6 or not np.isfinite(b[0])
    assert err[0] > 1e3 or not np.isfinite(err[0])


def test_original_vs_one_step_per_snp_rank_correlation():
    ds = synth_dataset(n=64, d=2, k=32, seed=8, effect_fraction=0.25)
    beta, p = _fitted(ds)
    b, _ = oracle_gwas_original(ds, beta, p)

    # independent oracle: one Newton step for the SNP coefficient in the
    # extended model [X, s_j], starting from the covariate-only fit
    w = p * (1 - p)
    one_step = np.empty(ds.S.shape[1])
    for j in range(ds.S.shape[1]):
        xj = np.column_stack([ds.X, ds.S[:, j]])
        hess = xj.T @ (w[:, None] * xj)
        step = np.linalg.solve(hess, xj.T @ (ds.y - p))
        one_step[j] = step[-1]

    def ranks(v):
        order = np.argsort(v)
        out = np.empty(len(v))
        out[order] = np.arange(len(v))
        return out

    ra, rb = ranks(b), ranks(one_step)
    corr = np.corrcoef(ra, rb)[0, 1]
    assert corr > 0.99


def test_modified_projector_idempotent():
    ds = synth_dataset(n=16, d=3, k=4, seed=9, effect_fraction=0.0)
    m = projection_complement(ds.X)
    assert np.max(np.abs(m @ m - m)) < 1e-10
    assert np.max(np.abs(m @ ds.X)) < 1e-10


def test_modified_equals_ols_when_projector_trivial():
    # With X absent (projector = I) and unit weights the statistic is per-SNP OLS.
    rng = np.random.default_rng(10)
    n, k = 32, 8
    s = rng.normal(size=(n, k))
    z = rng.normal(size=n)
    w = np.ones(n)
    num = (w * z) @ s
    den = w @ (s * s)
    b = num / den
    closed_form = np.array([(z @ s[:, j]) / (s[:, j] @ s[:, j]) for j in range(k)])
    assert np.max(np.abs(b - closed_form)) < 1e-10


def test_modified_flags_zero_variance_snp():
    ds = synth_dataset(n=16, d=2, k=4, seed=11, effect_fraction=0.0)
    s = ds.S.copy()
    s[:, 2] = 0.0  # standardized zero-variance column
    ds2 = CleartextDataset(X=ds.X, S=s, y=ds.y)
    beta, p = _fitted(ds2)
    b, err = oracle_gwas_modified(ds2, beta, p)
    assert not np.isfinite(b[2]) and not np.isfinite(err[2])


def test_modified_vs_original_rank_correlation():
    ds = synth_dataset(n=64, d=2, k=32, seed=12, effect_fraction=0.3)
    beta, p = _fitted(ds)
    b_orig, _ = oracle_gwas_original(ds, beta, p)
    b_mod, _ = oracle_gwas_modified(ds, beta, p)

    def ranks(v):
        order = np.argsort(v)
        out = np.empty(len(v))
        out[order] = np.arange(len(v))
        return out

    corr = np.corrcoef(ranks(b_orig), ranks(b_mod))[0, 1]
    assert corr > 0.9


def test_wald_pvalues_match_erfc():
    b = np.array([0.5, -0.2])
    den = np.array([16.0, 25.0])
    got = wald_pvalues(b, den)
    for i in range(2):
        z = abs(b[i]) * math.sqrt(den[i])
        assert abs(got[i] - math.erfc(z / math.sqrt(2))) < 1e-15


# -- compare ------------------------------------------------------------------------


def test_compare_identical_vectors():
    v = np.linspace(-1, 1, 50)
    rep = compare(v, v, (0.1, 0.01, 0.005))
    assert rep.fit_slope == pytest.approx(1.0, abs=1e-12)
    assert rep.fit_intercept == pytest.approx(0.0, abs=1e-12)
    assert all(c == 0 for c in rep.diff_counts.values())


def test_compare_constant_offset():
    ref = np.linspace(-1, 1, 40)
    rep = compare(ref, ref + 0.02, (0.1, 0.01))
    assert rep.diff_counts[0.01] == 40
    assert rep.diff_counts[0.1] == 0


def test_compare_paper_shaped_thresholds():
    ref = np.linspace(-0.5, 0.5, 100)
    rep = compare(ref, ref, (0.1, 0.01, 0.005))
    lines = rep.to_tsv().strip().splitlines()
    assert lines[0] == "threshold\tnum_different\taccuracy_pct"
    assert lines[1].startswith("0.1\t0\t100")


def test_compare_length_mismatch():
    with pytest.raises(DimensionError):
        compare(np.zeros(3), np.zeros(4), (0.1,))


@given(st.floats(0.001, 0.2), st.floats(0.21, 2.0))
@settings(max_examples=20, deadline=None)
def test_compare_counts_monotone_in_threshold(e_small, e_big):
    rng = np.random.default_rng(0)
    ref = rng.normal(size=64)
    test = ref + rng.normal(scale=0.05, size=64)
    rep = compare(ref, test, (e_small, e_big))
    assert rep.diff_counts[e_big] <= rep.diff_counts[e_small]


# -- synthetic data ------------------------------------------------------------------


def test_synth_deterministic():
    a = synth_dataset(16, 2, 8, seed=4)
    b = synth_dataset(16, 2, 8, seed=4)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.S, b.S) and np.array_equal(a.y, b.y)


def test_synth_dosages_pre_standardization():
    _, _, dosages = synth_tables(32, 2, 16, seed=6)
    assert set(np.unique(dosages)) <= {0.0, 1.0, 2.0}


def test_synth_na_injection():
    _, _, dosages = synth_tables(32, 2, 16, seed=6, na_fraction=0.2)
    assert np.isnan(dosages).any()


def test_synth_null_effects_centered():
    means = []
    for seed in range(20):
        ds = synth_dataset(n=48, d=2, k=32, seed=seed, effect_fraction=0.0)
        beta, p = _fitted(ds)
        num, den = gwas_modified_parts(ds, beta, p)
        ok = den > 1e-9
        means.append(np.mean(num[ok] / den[ok]))
    assert abs(np.mean(means)) < 0.05


def test_standardize_columns_idempotent():
    rng = np.random.default_rng(13)
    mat = standardize_columns(rng.normal(size=(64, 3)))
    again = standardize_columns(mat)
    assert np.max(np.abs(again - mat)) < 1e-12
