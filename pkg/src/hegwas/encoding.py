"""Canonical-embedding encoding of complex slot vectors into ring elements.

Slot t corresponds to evaluation of the polynomial at zeta^(5^t) where zeta is
a primitive 2N-th root of unity; conjugate slots complete the embedding.  This
ordering is what makes slot rotation an automorphism x -> x^(5^r).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .params import CkksParams
from .ring import RingElement

_TABLES: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _tables(n: int):
    """(slot index table, zeta^j, conj(zeta^j)) for ring degree n."""
    cached = _TABLES.get(n)
    if cached is not None:
        return cached
    m = 2 * n
    idx = np.empty(n // 2, dtype=np.int64)
    g = 1
    for t in range(n // 2):
        idx[t] = (g - 1) // 2
        g = (g * 5) % m
    j = np.arange(n)
    zeta_pow = np.exp(1j * np.pi * j / n)
    tables = (idx, zeta_pow, np.conj(zeta_pow))
    _TABLES[n] = tables
    return tables


@dataclass(frozen=True)
class Plaintext:
    """Encoded message polynomial with its scale."""

    m: RingElement
    scale_bits: int
    slots: int

    def __post_init__(self):
        if self.scale_bits <= 0:
            raise ParameterError("plaintext scale must be positive")


def encode(values, scale_bits: int, params: CkksParams) -> Plaintext:
    """Scale by 2^scale_bits and map through the inverse canonical embedding."""
    if scale_bits <= 0:
        raise ParameterError("scale_bits must be positive")
    vec = np.asarray(values, dtype=np.complex128).ravel()
    slots = params.slot_count
    if vec.size > slots:
        raise ParameterError(f"{vec.size} values exceed {slots} slots")
    if vec.size:
        top = float(np.max(np.abs(vec)))
        headroom = params.log_l - scale_bits
        if top > 0 and np.log2(top) >= headroom:
            raise ParameterError(
                f"value magnitude {top:.3g} >= 2^(log_l - scale) = 2^{headroom}: overflow risk"
            )
    z = np.zeros(slots, dtype=np.complex128)
    z[: vec.size] = vec

    n = params.n
    idx, _, zeta_neg = _tables(n)
    delta = 2.0 ** scale_bits
    emb = np.empty(n, dtype=np.complex128)
    emb[idx] = z * delta
    emb[n - 1 - idx] = np.conj(z) * delta
    g = np.fft.fft(emb) / n
    coeffs_f = np.rint((g * zeta_neg).real)
    coeffs = [int(c) for c in coeffs_f]
    m = RingElement.from_signed(n, params.log_l, coeffs)
    return Plaintext(m=m, scale_bits=scale_bits, slots=slots)


def encode_constant(value: float, scale_bits: int, params: CkksParams) -> Plaintext:
    """Real constant in every slot: a single rounded coefficient, no embedding spread."""
    if scale_bits <= 0:
        raise ParameterError("scale_bits must be positive")
    n = params.n
    c0 = round(value * (2.0 ** scale_bits))
    coeffs = [c0] + [0] * (n - 1)
    m = RingElement.from_signed(n, params.log_l, coeffs)
    return Plaintext(m=m, scale_bits=scale_bits, slots=params.slot_count)


def _coeffs_to_float(centered: list[int]) -> tuple[np.ndarray, float]:
    """float64 view of big signed coefficients plus a power-of-two multiplier.

    Values beyond float range (e.g. wrong-key decryptions) are shifted down and
    the multiplier clamped: garbage stays finite, large garbage stays large.
    """
    top = max((abs(c) for c in centered), default=0)
    shift = 0
    if top.bit_length() > 960:
        shift = top.bit_length() - 500
        centered = [c >> shift for c in centered]
    mult = 2.0 ** min(shift, 300)
    return np.array([float(c) for c in centered], dtype=np.float64), mult


def decode(pt: Plaintext) -> np.ndarray:
    """Evaluate the canonical embedding and divide by 2^scale_bits."""
    n = pt.m.n
    idx, zeta_pow, _ = _tables(n)
    arr, mult = _coeffs_to_float(pt.m.centered())
    g = arr * zeta_pow
    evals = np.fft.ifft(g) * n
    return evals[idx] * (mult / (2.0 ** pt.scale_bits))
