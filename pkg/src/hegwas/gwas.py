"""The modified semi-parallel association pipeline over encrypted data.

After the logistic fit, a single unweighted projector M = I - X (X^T X)^-1 X^T
orthogonalizes both the working response and every SNP block; per-SNP effects
reduce to column sums of slotwise products.  SNP pairs ride the real and
imaginary parts of one complex slot, doubling batch capacity; the conjugation
trick x^2 = Re(z*conj(z) + z^2)/2 recovers the two squared channels.
Numerators and denominators are decrypted separately and divided in the clear.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .cache import CacheHandle, CiphertextCache
from .ckks import (
    Ciphertext,
    HeEngine,
    decrypt_values,
    encrypt_values,
)
from .errors import DimensionError, InputError, ParameterError
from .keys import PublicKey, RotationKeySet, SecretKey
from .logreg import LogRegInputs, hom_logreg
from .matrix import (
    CCPMatrix,
    CPMatrix,
    REPMatrix,
    col_sum,
    cp_matmul,
    cp_matvec,
    cp_rep_matmul,
    ccp_to_cp,
    duplicate,
    identity_minus,
    next_pow2,
    pack_cp,
    pack_rep,
)
from .oracle import CleartextDataset
from .params import CkksParams


def default_tau(params: CkksParams, n: int) -> int:
    """Max SNPs per batch: complex packing doubles the per-ciphertext capacity."""
    return (2 * params.slot_count) // next_pow2(n)


@dataclass
class GwasConfig:
    n: int
    d: int
    k: int
    kappa: int = 3
    tau: int | None = None  # defaults to the packing capacity
    inverse_iters: int = 3
    inverse_guess: float = 3.0
    complex_packing: bool = True

    def resolve(self, params: CkksParams) -> "GwasConfig":
        tau = self.tau if self.tau is not None else default_tau(params, self.n)
        cfg = GwasConfig(n=self.n, d=self.d, k=self.k, kappa=self.kappa, tau=tau,
                         inverse_iters=self.inverse_iters, inverse_guess=self.inverse_guess,
                         complex_packing=self.complex_packing)
        cs = next_pow2(self.n)
        if cs * self.n > params.slot_count:
            raise ParameterError(
                f"projector needs {self.n} columns x {cs} slots "
                f"> {params.slot_count} available; raise log_n"
            )
        if cfg.cols_per_batch * cs > params.slot_count:
            raise ParameterError(
                f"batch needs {cfg.cols_per_batch} columns x {cs} slots "
                f"> {params.slot_count} available; lower tau"
            )
        if self.kappa < 1:
            raise ParameterError("kappa must be at least 1")
        return cfg

    @property
    def cols_per_batch(self) -> int:
        if self.tau is None:
            raise ParameterError("config not resolved")
        return (self.tau + 1) // 2 if self.complex_packing else self.tau

    @property
    def num_batches(self) -> int:
        return max(1, math.ceil(self.k / self.tau)) if self.k else 0


@dataclass
class SnpBatch:
    """One column block of the SNP matrix, REP-packed for the projector product."""

    index: int
    S_packed: REPMatrix
    snp_offset: int
    snp_count: int
    complex_packing: bool


@dataclass
class GwasIntermediate:
    w: Ciphertext        # p (1 - p), slots beyond the sample range are garbage
    w_inv: Ciphertext
    z: Ciphertext
    M: CPMatrix
    z_prime: Ciphertext


@dataclass
class GwasResult:
    numerator: np.ndarray
    denominator: np.ndarray
    effects: np.ndarray
    std_err: np.ndarray
    p_values: np.ndarray


@dataclass
class EncryptedGwasInputs:
    logreg: LogRegInputs
    batches: list[SnpBatch]
    config: GwasConfig


@dataclass
class BatchOutput:
    index: int
    num_ct: Ciphertext
    den_even_ct: Ciphertext
    den_odd_ct: Ciphertext | None  # absent for real-only packing


@dataclass
class EncryptedGwasOutputs:
    batch_outputs: list[BatchOutput]
    intermediates: GwasIntermediate
    beta: Ciphertext
    p_prev: Ciphertext


# -- pipeline stages ----------------------------------------------------------

def inverse_slots(engine: HeEngine, w: Ciphertext, iters: int = 3,
                  guess: float = 3.0) -> Ciphertext:
    """Slotwise reciprocal by the division-free iteration x <- x (2 - w x).

    The first pass folds the constant initial guess into plaintext products;
    later passes cost two ciphertext-mult levels each, as the recurrence states.
    """
    if iters < 1:
        raise InputError("need at least one inversion iteration")
    t = engine.mult_const(w, guess)                       # w * guess
    x = engine.mult_plain(engine.sub_from_const(2.0, t), engine.constant(guess))
    for _ in range(iters - 1):
        t = engine.mult(w, x)
        x = engine.mult(engine.sub_from_const(2.0, t), x)
    return x


def compute_z(engine: HeEngine, x_cp: CPMatrix, beta: Ciphertext, y: Ciphertext,
              p_prev: Ciphertext, w_inv: Ciphertext) -> Ciphertext:
    """Working response z = X beta + w^-1 (y - p)."""
    xb = cp_matvec(engine, x_cp, beta)
    correction = engine.mult(w_inv, engine.sub(y, p_prev))
    return engine.add(xb, correction)


def compute_M(engine: HeEngine, x_cp: CPMatrix, xtx_inv: CPMatrix,
              xt_rep: REPMatrix) -> CPMatrix:
    """Projector M = I - X (X^T X)^-1 X^T as a column-packed n x n matrix."""
    if x_cp.cols_logical != xtx_inv.rows or xt_rep.rows != xtx_inv.cols_logical:
        raise DimensionError("projector factors disagree on the covariate count")
    hat = cp_matmul(engine, x_cp, xtx_inv)               # X (X^T X)^-1, n x (d+1)
    prod = cp_rep_matmul(engine, hat, xt_rep)            # CCP n x n
    return identity_minus(engine, ccp_to_cp(engine, prod), x_cp.rows)


def orthogonalize_z(engine: HeEngine, m: CPMatrix, z: Ciphertext) -> Ciphertext:
    return cp_matvec(engine, m, z)


def orthogonalize_snps(engine: HeEngine, m: CPMatrix, batch: SnpBatch,
                       m_duplicated: list[Ciphertext] | None = None) -> CCPMatrix:
    """Project one SNP block: M S_i via the CP x REP product, emitted compactly.

    The projection is real-linear, so fused complex SNP pairs pass through with
    both channels projected at once.
    """
    return cp_rep_matmul(engine, m, batch.S_packed, a_duplicated=m_duplicated)


def batch_statistics(engine: HeEngine, s_prime: CCPMatrix, w: Ciphertext,
                     z_prime: Ciphertext, complex_packing: bool = True,
                     sample_count: int | None = None):
    """Numerator and denominator column sums for one projected batch.

    num holds colSum((w z')^T S') per column: real part = even SNP, imaginary
    part = odd SNP.  Squared-channel denominators come from WSS = (w S') S' and
    WSC = (w S') conj(S'): den_even = (WSC + WSS)/2, den_odd = (WSC - WSS)/2,
    with the 1/2 folded into the w mask.  Only slots at column starts matter.
    """
    cs = s_prime.col_size
    n = sample_count or cs
    wz = engine.mult(w, z_prime)
    wz_dup = duplicate(engine, wz, cs)
    num = col_sum(engine, CCPMatrix(ct=engine.mult(wz_dup, s_prime.ct),
                                    col_size=cs, num_cols=s_prime.num_cols))
    if complex_packing:
        w_masked = engine.mult_plain(w, engine.mask(("range_value", 0, n, 0.5)))
        w_dup = duplicate(engine, w_masked, cs)
        ws = engine.mult(w_dup, s_prime.ct)
        wss = engine.mult(ws, s_prime.ct)
        wsc = engine.mult(ws, engine.conjugate(s_prime.ct))
        den_even = col_sum(engine, CCPMatrix(ct=engine.add(wsc, wss),
                                             col_size=cs, num_cols=s_prime.num_cols))
        den_odd = col_sum(engine, CCPMatrix(ct=engine.sub(wsc, wss),
                                            col_size=cs, num_cols=s_prime.num_cols))
        return num, den_even, den_odd
    w_masked = engine.mult_plain(w, engine.mask(("range", 0, n)))
    w_dup = duplicate(engine, w_masked, cs)
    ws = engine.mult(w_dup, s_prime.ct)
    den = col_sum(engine, CCPMatrix(ct=engine.mult(ws, s_prime.ct),
                                    col_size=cs, num_cols=s_prime.num_cols))
    return num, den, None


# -- packing / encryption -------------------------------------------------------

def fuse_snp_pairs(s_block: np.ndarray) -> np.ndarray:
    """Fuse SNP columns (2j, 2j+1) into complex columns s_2j + i s_2j+1."""
    n, width = s_block.shape
    cols = (width + 1) // 2
    fused = np.zeros((n, cols), dtype=np.complex128)
    fused += s_block[:, 0::2]
    if width > 1:
        odd = s_block[:, 1::2]
        fused[:, : odd.shape[1]] += 1j * odd
    return fused


def build_snp_batches(s_mat: np.ndarray, config: GwasConfig, params: CkksParams,
                      pk: PublicKey, rng: random.Random) -> list[SnpBatch]:
    cs = next_pow2(config.n)
    batches = []
    for b in range(config.num_batches):
        offset = b * config.tau
        block = s_mat[:, offset: offset + config.tau]
        payload = fuse_snp_pairs(block) if config.complex_packing else block
        rep = pack_rep(payload, cs, pk, params, rng)
        batches.append(SnpBatch(index=b, S_packed=rep, snp_offset=offset,
                                snp_count=block.shape[1],
                                complex_packing=config.complex_packing))
    return batches


def encrypt_gwas_inputs(dataset: CleartextDataset, config: GwasConfig,
                        params: CkksParams, pk: PublicKey, rng: random.Random,
                        xtx_inv: np.ndarray | None = None) -> EncryptedGwasInputs:
    config = config.resolve(params)
    x_mat = dataset.X
    if xtx_inv is None:
        xtx_inv = np.linalg.inv(x_mat.T @ x_mat)
    residual = np.abs(x_mat.T @ x_mat @ xtx_inv - np.eye(x_mat.shape[1])).max()
    if residual >= 1e-8:
        raise InputError(f"inverse verification failed: ||X^T X inv - I|| = {residual:.3g}")
    cs = next_pow2(config.n)
    logreg = LogRegInputs(
        X=pack_cp(x_mat, pk, params, rng),
        Xt_rep=pack_rep(x_mat.T, cs, pk, params, rng),
        XtX_inv=pack_cp(xtx_inv, pk, params, rng),
        y=encrypt_values(dataset.y, params.log_p, pk, params, rng),
    )
    batches = build_snp_batches(dataset.S, config, params, pk, rng)
    return EncryptedGwasInputs(logreg=logreg, batches=batches, config=config)


# -- compute ----------------------------------------------------------------------

def _batch_handles(cache: CiphertextCache, batches: list[SnpBatch]) -> dict[int, list[CacheHandle]]:
    handles = {}
    for batch in batches:
        handles[batch.index] = [cache.put(ct) for ct in batch.S_packed.rows_ct]
    plan = [h.id for b in batches for h in handles[b.index]]
    cache.schedule(plan)
    return handles


def compute_gwas_encrypted(engine: HeEngine, inputs: EncryptedGwasInputs,
                           cache: CiphertextCache | None = None) -> EncryptedGwasOutputs:
    """Run the encrypted pipeline; SNP payload flows through the cache when given."""
    config = inputs.config
    logreg_inputs = inputs.logreg
    beta, p_prev = hom_logreg(engine, logreg_inputs, config.kappa)

    # w = p (1 - p); slots past the sample range carry sigmoid(0) garbage and
    # are masked or annihilated downstream.
    w = engine.mult(p_prev, engine.sub_from_const(1.0, p_prev))
    w_inv = inverse_slots(engine, w, config.inverse_iters, config.inverse_guess)
    z = compute_z(engine, logreg_inputs.X, beta, logreg_inputs.y, p_prev, w_inv)
    m = compute_M(engine, logreg_inputs.X, logreg_inputs.XtX_inv, logreg_inputs.Xt_rep)
    z_prime = orthogonalize_z(engine, m, z)
    inter = GwasIntermediate(w=w, w_inv=w_inv, z=z, M=m, z_prime=z_prime)

    cs = next_pow2(config.n)
    m_dup = [duplicate(engine, col, cs) for col in m.cols]

    handles = _batch_handles(cache, inputs.batches) if cache is not None else None
    outputs = []
    for pos, batch in enumerate(inputs.batches):
        if handles is not None:
            if pos + 1 < len(inputs.batches):
                cache.prefetch(handles[inputs.batches[pos + 1].index])
            rows = [cache.get(h) for h in handles[batch.index]]
            packed = REPMatrix(rows_ct=rows, repeat=batch.S_packed.repeat,
                               rows=batch.S_packed.rows,
                               cols_logical=batch.S_packed.cols_logical)
            batch = SnpBatch(index=batch.index, S_packed=packed,
                             snp_offset=batch.snp_offset, snp_count=batch.snp_count,
                             complex_packing=batch.complex_packing)
        s_prime = orthogonalize_snps(engine, m, batch, m_duplicated=m_dup)
        num, den_even, den_odd = batch_statistics(
            engine, s_prime, w, z_prime,
            complex_packing=batch.complex_packing, sample_count=config.n,
        )
        outputs.append(BatchOutput(index=batch.index, num_ct=num,
                                   den_even_ct=den_even, den_odd_ct=den_odd))
    return EncryptedGwasOutputs(batch_outputs=outputs, intermediates=inter,
                                beta=beta, p_prev=p_prev)


# -- decrypt / assemble -------------------------------------------------------------

def decrypt_statistics(outputs: list[BatchOutput], config: GwasConfig,
                       params: CkksParams, sk: SecretKey) -> tuple[np.ndarray, np.ndarray]:
    """De-interleave per-batch column sums back into SNP order."""
    cs = next_pow2(config.n)
    numerator = np.zeros(config.k)
    denominator = np.zeros(config.k)
    for out in outputs:
        offset = out.index * config.tau
        count = min(config.tau, config.k - offset)
        num_vals = decrypt_values(out.num_ct, sk)
        de_vals = decrypt_values(out.den_even_ct, sk)
        do_vals = decrypt_values(out.den_odd_ct, sk) if out.den_odd_ct is not None else None
        if do_vals is not None:
            for c in range((count + 1) // 2):
                slot = num_vals[c * cs]
                numerator[offset + 2 * c] = slot.real
                denominator[offset + 2 * c] = de_vals[c * cs].real
                if offset + 2 * c + 1 < offset + count:
                    numerator[offset + 2 * c + 1] = slot.imag
                    denominator[offset + 2 * c + 1] = do_vals[c * cs].real
        else:
            for c in range(count):
                numerator[offset + c] = num_vals[c * cs].real
                denominator[offset + c] = de_vals[c * cs].real
    return numerator, denominator


def assemble_result(numerator: np.ndarray, denominator: np.ndarray) -> GwasResult:
    """Elementwise division with non-finite flags for degenerate denominators."""
    k = numerator.shape[0]
    effects = np.full(k, np.nan)
    std_err = np.full(k, np.nan)
    p_values = np.full(k, np.nan)
    ok = denominator > 0
    effects[ok] = numerator[ok] / denominator[ok]
    std_err[ok] = np.sqrt(1.0 / denominator[ok])
    zstat = np.abs(effects[ok]) * np.sqrt(denominator[ok])
    p_values[ok] = np.array([math.erfc(zv / math.sqrt(2.0)) for zv in zstat])
    return GwasResult(numerator=numerator, denominator=denominator,
                      effects=effects, std_err=std_err, p_values=p_values)


@dataclass
class KeyMaterial:
    params: CkksParams
    sk: SecretKey | None
    pk: PublicKey
    evk: object
    rot_keys: RotationKeySet


def run_gwas(dataset: CleartextDataset, config: GwasConfig, keys: KeyMaterial,
             seed: int = 0, cache: CiphertextCache | None = None) -> GwasResult:
    """Client-side convenience: encrypt, compute and decrypt in one call."""
    if keys.sk is None:
        raise InputError("run_gwas needs the secret key for the final decryption")
    if dataset.S.shape[1] == 0:
        empty = np.zeros(0)
        return GwasResult(numerator=empty, denominator=empty.copy(),
                          effects=empty.copy(), std_err=empty.copy(),
                          p_values=empty.copy())
    config = config.resolve(keys.params)
    rng = random.Random(seed)
    enc = encrypt_gwas_inputs(dataset, config, keys.params, keys.pk, rng)
    engine = HeEngine(keys.params, keys.evk, keys.rot_keys)
    outputs = compute_gwas_encrypted(engine, enc, cache=cache)
    num, den = decrypt_statistics(outputs.batch_outputs, config, keys.params, keys.sk)
    return assemble_result(num, den)
