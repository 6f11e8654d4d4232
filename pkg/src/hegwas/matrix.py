"""Encrypted matrices under four packing layouts and their algebra.

Layouts: column-packed (one ciphertext per column), column-compact-packed
(whole matrix in one ciphertext, columns padded to a power of two), row-packed
and row-expanded-packed (each row entry repeated q times).  Only the slots a
post-condition names are meaningful; everything else is documented garbage and
consumers must mask before reuse.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from .ckks import Ciphertext, HeEngine, add_plain, decrypt_values, encrypt_values, negate
from .errors import DimensionError, ParameterError
from .keys import PublicKey, SecretKey
from .params import CkksParams


def next_pow2(x: int) -> int:
    if x < 1:
        raise ParameterError("dimension must be positive")
    return 1 << (x - 1).bit_length()


@dataclass
class CPMatrix:
    cols: list[Ciphertext]
    rows: int
    cols_logical: int

    def __post_init__(self):
        if len(self.cols) != self.cols_logical:
            raise DimensionError("CP matrix needs one ciphertext per column")


@dataclass
class CCPMatrix:
    ct: Ciphertext
    col_size: int  # rows padded to a power of two
    num_cols: int

    def __post_init__(self):
        if self.col_size & (self.col_size - 1):
            raise DimensionError("CCP col_size must be a power of two")
        if self.col_size * self.num_cols > self.ct.slots:
            raise DimensionError("CCP matrix does not fit the slot count")


@dataclass
class RPMatrix:
    rows_ct: list[Ciphertext]
    rows: int
    cols_logical: int

    def __post_init__(self):
        if len(self.rows_ct) != self.rows:
            raise DimensionError("RP matrix needs one ciphertext per row")


@dataclass
class REPMatrix:
    rows_ct: list[Ciphertext]
    repeat: int  # q, a power of two
    rows: int
    cols_logical: int

    def __post_init__(self):
        if self.repeat & (self.repeat - 1):
            raise DimensionError("REP repeat factor must be a power of two")
        if len(self.rows_ct) != self.rows:
            raise DimensionError("REP matrix needs one ciphertext per row")


# -- core algorithms ----------------------------------------------------------

def replicate(engine: HeEngine, ct: Ciphertext, n: int) -> list[Ciphertext]:
    """Broadcast each of the first n slots into its own all-slots ciphertext.

    Mask out slot i (one cheap-tier rescale), then doubling rotate-adds fill
    every slot.
    """
    slots = engine.params.slot_count
    if n > slots:
        raise DimensionError(f"cannot replicate {n} entries from {slots} slots")
    out = []
    for i in range(n):
        t = engine.mult_plain(ct, engine.mask(("slot", i)))
        step = 1
        while step < slots:
            t = engine.add(t, engine.rotate(t, step))
            step <<= 1
        out.append(t)
    return out


def cp_matvec(engine: HeEngine, a: CPMatrix, b: Ciphertext) -> Ciphertext:
    """A.v with the vector replicated entrywise; result in the first `rows` slots."""
    reps = replicate(engine, b, a.cols_logical)
    acc = None
    for col, rep in zip(a.cols, reps):
        term = engine.mult(col, rep)
        acc = term if acc is None else engine.add(acc, term)
    return acc


def cp_matmul(engine: HeEngine, a: CPMatrix, b: CPMatrix) -> CPMatrix:
    if a.cols_logical != b.rows:
        raise DimensionError(f"inner dims differ: {a.cols_logical} vs {b.rows}")
    cols = [cp_matvec(engine, a, col) for col in b.cols]
    return CPMatrix(cols=cols, rows=a.rows, cols_logical=b.cols_logical)


def col_sum(engine: HeEngine, m: CCPMatrix) -> Ciphertext:
    """Column sums landing every col_size slots, starting from the first slot.

    Rotate-add reduction accumulates block sums at block ends; one composite
    left shift moves them to block starts.  All other slots are garbage.
    """
    c = m.ct
    step = 1
    while step < m.col_size:
        c = engine.add(c, engine.rotate(c, step))
        step <<= 1
    if m.col_size > 1:
        c = engine.rotate_left(c, m.col_size - 1)
    return c


def dot_prod(engine: HeEngine, a: Ciphertext, b: Ciphertext, length: int) -> Ciphertext:
    """Inner product of two packed vectors; every slot of the result holds it.

    Inputs must be zero beyond their data; the reduction wraps the whole slot
    array so padding length only needs to fit the slot count.
    """
    slots = engine.params.slot_count
    if next_pow2(length) > slots:
        raise DimensionError(f"padded length {next_pow2(length)} exceeds {slots} slots")
    c = engine.mult(a, b)
    step = 1
    while step < slots:
        c = engine.add(c, engine.rotate(c, step))
        step <<= 1
    return c


def rp_matvec(engine: HeEngine, a: RPMatrix, b: Ciphertext) -> Ciphertext:
    """Row-packed matvec: per-row dot products masked into their slots."""
    acc = None
    for i, row in enumerate(a.rows_ct):
        dp = dot_prod(engine, row, b, a.cols_logical)
        term = engine.mult_plain(dp, engine.mask(("slot", i)))
        acc = term if acc is None else engine.add(acc, term)
    return acc


def duplicate(engine: HeEngine, ct: Ciphertext, k: int) -> Ciphertext:
    """Tile the first ceil2(k) slots across the whole ciphertext via rotate-adds."""
    slots = engine.params.slot_count
    block = next_pow2(k)
    if block > slots:
        raise DimensionError(f"pattern of {block} slots exceeds {slots}")
    c = ct
    step = block
    while step < slots:
        c = engine.add(c, engine.rotate(c, step))
        step <<= 1
    return c


def cp_rep_matmul(engine: HeEngine, a: CPMatrix, b: REPMatrix,
                  a_duplicated: list[Ciphertext] | None = None) -> CCPMatrix:
    """CP x REP product, emitted as a CCP matrix with col_size = ceil2(a.rows).

    `a_duplicated` lets callers reuse the tiled columns across repeated products
    with the same left factor.
    """
    if a.cols_logical != b.rows:
        raise DimensionError(f"inner dims differ: {a.cols_logical} vs {b.rows}")
    col_size = next_pow2(a.rows)
    if b.repeat != col_size:
        raise DimensionError(f"REP repeat {b.repeat} != padded column height {col_size}")
    if col_size * b.cols_logical > engine.params.slot_count:
        raise DimensionError("product exceeds the slot capacity")
    if a_duplicated is None:
        a_duplicated = [duplicate(engine, col, col_size) for col in a.cols]
    acc = None
    for dup, row in zip(a_duplicated, b.rows_ct):
        term = engine.mult(dup, row)
        acc = term if acc is None else engine.add(acc, term)
    return CCPMatrix(ct=acc, col_size=col_size, num_cols=b.cols_logical)


def ccp_to_cp(engine: HeEngine, m: CCPMatrix) -> CPMatrix:
    """Split a CCP matrix back into per-column ciphertexts.

    Column j is masked out of its slot range and shifted down to the front;
    costs one cheap-tier rescale.
    """
    cols = []
    cs = m.col_size
    for j in range(m.num_cols):
        t = engine.mult_plain(m.ct, engine.mask(("range", j * cs, (j + 1) * cs)))
        if j:
            t = engine.rotate_left(t, j * cs)
        cols.append(t)
    return CPMatrix(cols=cols, rows=cs, cols_logical=m.num_cols)


def identity_minus(engine: HeEngine, m: CPMatrix, rows: int) -> CPMatrix:
    """I - M for a square CP matrix (adds the exact unit diagonal plaintext)."""
    cols = []
    for j, col in enumerate(m.cols):
        t = negate(col)
        cols.append(add_plain(t, engine.mask(("slot", j), t.scale_bits)))
    return CPMatrix(cols=cols, rows=rows, cols_logical=m.cols_logical)


# -- packing helpers ----------------------------------------------------------

def _columns(matrix: np.ndarray) -> np.ndarray:
    mat = np.asarray(matrix)
    if mat.ndim != 2:
        raise DimensionError("expected a 2-D matrix")
    return mat


def pack_cp(matrix, pk: PublicKey, params: CkksParams, rng: random.Random,
            scale_bits: int | None = None) -> CPMatrix:
    mat = _columns(matrix)
    scale = scale_bits or params.log_p
    cols = [encrypt_values(mat[:, j], scale, pk, params, rng) for j in range(mat.shape[1])]
    return CPMatrix(cols=cols, rows=mat.shape[0], cols_logical=mat.shape[1])


def pack_rp(matrix, pk: PublicKey, params: CkksParams, rng: random.Random,
            scale_bits: int | None = None) -> RPMatrix:
    mat = _columns(matrix)
    scale = scale_bits or params.log_p
    rows = [encrypt_values(mat[i, :], scale, pk, params, rng) for i in range(mat.shape[0])]
    return RPMatrix(rows_ct=rows, rows=mat.shape[0], cols_logical=mat.shape[1])


def pack_rep(matrix, repeat: int, pk: PublicKey, params: CkksParams, rng: random.Random,
             scale_bits: int | None = None) -> REPMatrix:
    mat = _columns(matrix)
    scale = scale_bits or params.log_p
    if repeat * mat.shape[1] > params.slot_count:
        raise DimensionError("REP rows exceed the slot capacity")
    rows = [encrypt_values(np.repeat(mat[i, :], repeat), scale, pk, params, rng)
            for i in range(mat.shape[0])]
    return REPMatrix(rows_ct=rows, repeat=repeat, rows=mat.shape[0],
                     cols_logical=mat.shape[1])


def pack_ccp(matrix, pk: PublicKey, params: CkksParams, rng: random.Random,
             scale_bits: int | None = None, col_size: int | None = None) -> CCPMatrix:
    mat = _columns(matrix)
    scale = scale_bits or params.log_p
    cs = col_size or next_pow2(mat.shape[0])
    if cs * mat.shape[1] > params.slot_count:
        raise DimensionError("CCP matrix exceeds the slot capacity")
    flat = np.zeros(cs * mat.shape[1], dtype=np.complex128)
    for j in range(mat.shape[1]):
        flat[j * cs: j * cs + mat.shape[0]] = mat[:, j]
    return CCPMatrix(ct=encrypt_values(flat, scale, pk, params, rng),
                     col_size=cs, num_cols=mat.shape[1])


def unpack_cp(m: CPMatrix, sk: SecretKey) -> np.ndarray:
    out = np.empty((m.rows, m.cols_logical), dtype=np.complex128)
    for j, col in enumerate(m.cols):
        out[:, j] = decrypt_values(col, sk)[: m.rows]
    return out


def unpack_rp(m: RPMatrix, sk: SecretKey) -> np.ndarray:
    out = np.empty((m.rows, m.cols_logical), dtype=np.complex128)
    for i, row in enumerate(m.rows_ct):
        out[i, :] = decrypt_values(row, sk)[: m.cols_logical]
    return out


def unpack_rep(m: REPMatrix, sk: SecretKey) -> np.ndarray:
    out = np.empty((m.rows, m.cols_logical), dtype=np.complex128)
    for i, row in enumerate(m.rows_ct):
        vals = decrypt_values(row, sk)
        out[i, :] = vals[: m.repeat * m.cols_logical: m.repeat]
    return out


def unpack_ccp(m: CCPMatrix, sk: SecretKey, rows: int | None = None) -> np.ndarray:
    rows = rows or m.col_size
    vals = decrypt_values(m.ct, sk)
    out = np.empty((rows, m.num_cols), dtype=np.complex128)
    for j in range(m.num_cols):
        out[:, j] = vals[j * m.col_size: j * m.col_size + rows]
    return out
