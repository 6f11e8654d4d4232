"""Arbitrary-precision arithmetic in Z[x]/(x^N + 1) with power-of-two moduli.

Coefficients are stored as nonnegative residues in [0, 2^mod_bits).  The fast
multiplication path packs both operands into single huge integers (Kronecker
substitution) so the heavy lifting happens inside the bignum library;
``schoolbook_negacyclic`` is the quadratic correctness oracle.
"""
from __future__ import annotations

import math
import random

from .errors import ParameterError

try:
    from gmpy2 import mpz

    HAVE_GMPY2 = True
except ImportError:  # pragma: no cover - gmpy2 is a declared dependency
    def mpz(x):
        return x

    HAVE_GMPY2 = False

# Below this degree the quadratic method is at least as fast as packing.
_SCHOOLBOOK_MAX_N = 8


def schoolbook_negacyclic(a: list[int], b: list[int], n: int) -> list[int]:
    """Exact negacyclic convolution, O(n^2). Correctness oracle for the packed path."""
    out = [0] * n
    for i, ai in enumerate(a):
        if not ai:
            continue
        for j, bj in enumerate(b):
            if not bj:
                continue
            k = i + j
            if k < n:
                out[k] += ai * bj
            else:
                out[k - n] -= ai * bj
    return out


def _kronecker_negacyclic(a: list[int], b: list[int], n: int, a_bits: int, b_bits: int) -> list[int]:
    # Slot width must hold sum of n cross products of (a_bits x b_bits) values.
    w = a_bits + b_bits + max(1, n - 1).bit_length() + 2
    w += (-w) % 8
    wb = w // 8
    abuf = b"".join(c.to_bytes(wb, "little") for c in a)
    bbuf = b"".join(c.to_bytes(wb, "little") for c in b)
    big_a = int.from_bytes(abuf, "little")
    big_b = int.from_bytes(bbuf, "little")
    prod = int(mpz(big_a) * mpz(big_b))
    data = prod.to_bytes(2 * n * wb + 16, "little")
    coeffs = [int.from_bytes(data[k * wb:(k + 1) * wb], "little") for k in range(2 * n)]
    return [coeffs[k] - coeffs[k + n] for k in range(n)]


def negacyclic_mul(a: list[int], b: list[int], n: int, a_bits: int, b_bits: int) -> list[int]:
    """Negacyclic convolution of nonnegative coefficient vectors (result unreduced)."""
    if n <= _SCHOOLBOOK_MAX_N:
        return schoolbook_negacyclic(a, b, n)
    return _kronecker_negacyclic(a, b, n, a_bits, b_bits)


class RingElement:
    """Element of Z_{2^mod_bits}[x]/(x^n + 1)."""

    __slots__ = ("n", "mod_bits", "coeffs")

    def __init__(self, n: int, mod_bits: int, coeffs: list[int], *, _reduced: bool = False):
        if n & (n - 1):
            raise ParameterError(f"ring degree {n} is not a power of two")
        if mod_bits < 1:
            raise ParameterError("modulus must be at least 2^1")
        if len(coeffs) != n:
            raise ParameterError(f"expected {n} coefficients, got {len(coeffs)}")
        if not _reduced:
            mask = (1 << mod_bits) - 1
            coeffs = [c & mask for c in coeffs]
        self.n = n
        self.mod_bits = mod_bits
        self.coeffs = coeffs

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, n: int, mod_bits: int) -> "RingElement":
        return cls(n, mod_bits, [0] * n, _reduced=True)

    @classmethod
    def from_signed(cls, n: int, mod_bits: int, signed: list[int]) -> "RingElement":
        return cls(n, mod_bits, list(signed))

    # -- helpers ------------------------------------------------------------

    def _require_same(self, other: "RingElement"):
        if self.n != other.n or self.mod_bits != other.mod_bits:
            raise ParameterError(
                f"ring mismatch: (n={self.n}, bits={self.mod_bits}) vs "
                f"(n={other.n}, bits={other.mod_bits})"
            )

    def centered(self) -> list[int]:
        """Signed representatives in (-2^(bits-1), 2^(bits-1)]."""
        half = 1 << (self.mod_bits - 1)
        full = 1 << self.mod_bits
        return [c - full if c > half else c for c in self.coeffs]

    # -- arithmetic ---------------------------------------------------------

    def add(self, other: "RingElement") -> "RingElement":
        self._require_same(other)
        mask = (1 << self.mod_bits) - 1
        return RingElement(
            self.n, self.mod_bits,
            [(x + y) & mask for x, y in zip(self.coeffs, other.coeffs)],
            _reduced=True,
        )

    def sub(self, other: "RingElement") -> "RingElement":
        self._require_same(other)
        mask = (1 << self.mod_bits) - 1
        return RingElement(
            self.n, self.mod_bits,
            [(x - y) & mask for x, y in zip(self.coeffs, other.coeffs)],
            _reduced=True,
        )

    def neg(self) -> "RingElement":
        mask = (1 << self.mod_bits) - 1
        return RingElement(self.n, self.mod_bits, [(-x) & mask for x in self.coeffs], _reduced=True)

    def scalar_mul(self, k: int) -> "RingElement":
        mask = (1 << self.mod_bits) - 1
        return RingElement(self.n, self.mod_bits, [(x * k) & mask for x in self.coeffs], _reduced=True)

    def mul(self, other: "RingElement") -> "RingElement":
        self._require_same(other)
        raw = negacyclic_mul(self.coeffs, other.coeffs, self.n, self.mod_bits, other.mod_bits)
        return RingElement(self.n, self.mod_bits, raw)

    def mul_mod(self, other: "RingElement", out_bits: int) -> "RingElement":
        """Product reduced mod 2^out_bits; operands may carry different moduli."""
        if self.n != other.n:
            raise ParameterError("ring degree mismatch")
        raw = negacyclic_mul(self.coeffs, other.coeffs, self.n, self.mod_bits, other.mod_bits)
        return RingElement(self.n, out_bits, raw)

    def automorphism(self, k: int) -> "RingElement":
        """Apply x -> x^k for odd k (a bijection on the ring)."""
        if k % 2 == 0:
            raise ParameterError("automorphism exponent must be odd")
        n2 = 2 * self.n
        k %= n2
        mask = (1 << self.mod_bits) - 1
        out = [0] * self.n
        for j, c in enumerate(self.coeffs):
            e = (j * k) % n2
            if e < self.n:
                out[e] = c
            else:
                out[e - self.n] = (-c) & mask
        return RingElement(self.n, self.mod_bits, out, _reduced=True)

    def reduce_to(self, bits: int) -> "RingElement":
        """Switch to a smaller power-of-two modulus."""
        if bits > self.mod_bits:
            raise ParameterError(f"cannot reduce modulus upward ({self.mod_bits} -> {bits})")
        if bits == self.mod_bits:
            return self
        mask = (1 << bits) - 1
        return RingElement(self.n, bits, [c & mask for c in self.coeffs], _reduced=True)

    def lift_centered_to(self, bits: int) -> "RingElement":
        """Re-embed the centered representative at a larger modulus."""
        if bits < self.mod_bits:
            raise ParameterError("lift target smaller than current modulus")
        mask = (1 << bits) - 1
        return RingElement(self.n, bits, [c & mask for c in self.centered()], _reduced=True)

    def divide_round(self, shift: int, out_bits: int) -> "RingElement":
        """Rounded division by 2^shift, reduced mod 2^out_bits.

        The result modulo 2^out_bits is independent of the representative as
        long as shift + out_bits <= mod_bits.
        """
        half = 1 << (shift - 1) if shift > 0 else 0
        mask = (1 << out_bits) - 1
        return RingElement(
            self.n, out_bits,
            [((c + half) >> shift) & mask for c in self.coeffs],
            _reduced=True,
        )

    # -- dunder -------------------------------------------------------------

    def __eq__(self, other):
        return (
            isinstance(other, RingElement)
            and self.n == other.n
            and self.mod_bits == other.mod_bits
            and self.coeffs == other.coeffs
        )

    def __repr__(self):
        return f"RingElement(n={self.n}, mod_bits={self.mod_bits})"


# -- coefficient samplers (signed output; callers reduce) -------------------

def sample_uniform(n: int, bits: int, rng: random.Random) -> list[int]:
    return [rng.getrandbits(bits) for _ in range(n)]


def sample_gaussian(n: int, sigma: float, rng: random.Random) -> list[int]:
    """Rounded Gaussian with rejection of the far tail (|x| > 6 sigma)."""
    cut = 6.0 * sigma
    out = []
    while len(out) < n:
        x = rng.gauss(0.0, sigma)
        if abs(x) > cut:
            continue
        out.append(round(x))
    return out


def sample_hamming(n: int, h: int, rng: random.Random) -> list[int]:
    """Exactly h nonzero +-1 coefficients, positions without replacement."""
    if h > n:
        raise ParameterError(f"Hamming weight {h} exceeds degree {n}")
    out = [0] * n
    for pos in rng.sample(range(n), h):
        out[pos] = 1 if rng.getrandbits(1) else -1
    return out


def sample_ternary(n: int, rng: random.Random) -> list[int]:
    """{-1, 0, +1} with probabilities (1/4, 1/2, 1/4) - the encryption ephemeral."""
    out = []
    for _ in range(n):
        b = rng.getrandbits(2)
        out.append(1 if b == 0 else (-1 if b == 3 else 0))
    return out


def derive_rng(seed: int, *labels) -> random.Random:
    """Deterministic child RNG for (seed, labels)."""
    import hashlib

    tag = "/".join(str(x) for x in labels)
    digest = hashlib.blake2b(f"{seed}:{tag}".encode(), digest_size=8).digest()
    return random.Random(int.from_bytes(digest, "little"))
