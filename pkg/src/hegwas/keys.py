"""Key material and key generation."""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import MissingKeyError, ParameterError
from .params import CkksParams
from .ring import (
    RingElement,
    derive_rng,
    sample_gaussian,
    sample_hamming,
    sample_uniform,
)

CONJUGATION_EXPONENT = -1  # automorphism x -> x^(2N-1)


@dataclass(frozen=True)
class SecretKey:
    s: RingElement  # exactly h nonzero coefficients in {-1, +1}


@dataclass(frozen=True)
class PublicKey:
    b: RingElement  # -a*s + e  (mod 2^L)
    a: RingElement


@dataclass(frozen=True)
class EvaluationKey:
    b: RingElement  # -a*s + e + 2^L * s^2  (mod 2^(2L))
    a: RingElement


@dataclass(frozen=True)
class RotationKeySet:
    """Key-switching keys for right rotations by powers of two, plus conjugation."""

    keys: dict[int, tuple[RingElement, RingElement]] = field(default_factory=dict)
    conj: tuple[RingElement, RingElement] | None = None

    def key_for(self, amount: int) -> tuple[RingElement, RingElement]:
        pair = self.keys.get(amount)
        if pair is None:
            raise MissingKeyError(
                f"no rotation key for amount {amount}; available: {sorted(self.keys)}"
            )
        return pair

    def conj_key(self) -> tuple[RingElement, RingElement]:
        if self.conj is None:
            raise MissingKeyError("conjugation key absent from rotation key set")
        return self.conj


def rotation_exponent(params: CkksParams, amount: int) -> int:
    """Automorphism exponent realizing a right rotation by `amount` slots."""
    slots = params.slot_count
    return pow(5, (slots - amount) % slots, 2 * params.n)


def keygen(params: CkksParams, seed: int):
    """Generate (SecretKey, PublicKey, EvaluationKey, RotationKeySet), deterministic in seed."""
    n = params.n
    big_l = params.log_l
    if params.h > n:
        raise ParameterError(f"h={params.h} exceeds N={n}")
    if big_l < params.log_p + max(params.log_p, params.log_p_small):
        raise ParameterError(
            f"log_l={big_l} too small to hold one multiply-and-rescale at log_p={params.log_p}"
        )

    s_signed = sample_hamming(n, params.h, derive_rng(seed, "secret"))
    s_l = RingElement.from_signed(n, big_l, s_signed)
    s_2l = RingElement.from_signed(n, 2 * big_l, s_signed)

    def make_switch_key(target: RingElement, label: str) -> tuple[RingElement, RingElement]:
        # b = -a*s + e + 2^L * target (mod 2^(2L))
        rng = derive_rng(seed, "switch", label)
        a = RingElement(n, 2 * big_l, sample_uniform(n, 2 * big_l, rng))
        e = RingElement.from_signed(n, 2 * big_l, sample_gaussian(n, params.sigma, rng))
        b = a.mul(s_2l).neg().add(e).add(target.scalar_mul(1 << big_l))
        return b, a

    pk_rng = derive_rng(seed, "public")
    a_pk = RingElement(n, big_l, sample_uniform(n, big_l, pk_rng))
    e_pk = RingElement.from_signed(n, big_l, sample_gaussian(n, params.sigma, pk_rng))
    pk = PublicKey(b=a_pk.mul(s_l).neg().add(e_pk), a=a_pk)

    evk_pair = make_switch_key(s_2l.mul(s_2l), "evk")
    evk = EvaluationKey(b=evk_pair[0], a=evk_pair[1])

    rot: dict[int, tuple[RingElement, RingElement]] = {}
    amount = 1
    while amount <= n // 4:
        k = rotation_exponent(params, amount)
        rot[amount] = make_switch_key(s_2l.automorphism(k), f"rot{amount}")
        amount <<= 1
    conj = make_switch_key(s_2l.automorphism(2 * n - 1), "conj")

    return SecretKey(s=s_l), pk, evk, RotationKeySet(keys=rot, conj=conj)
