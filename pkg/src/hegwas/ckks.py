"""The leveled approximate scheme: encrypt/decrypt and the homomorphic operations.

Moduli are powers of two; a ciphertext at level_bits l lives mod 2^l and every
rescale subtracts bits from both level and scale.  Key switching multiplies by
material living mod 2^(2L) and divides by 2^L with rounding.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, replace

import numpy as np

from . import instrument
from .encoding import Plaintext, decode, encode, encode_constant
from .errors import AlignmentError, BudgetDepletedError, ParameterError
from .keys import (
    EvaluationKey,
    PublicKey,
    RotationKeySet,
    SecretKey,
    rotation_exponent,
)
from .params import CkksParams
from .ring import RingElement, sample_gaussian, sample_ternary


@dataclass(frozen=True)
class Ciphertext:
    c0: RingElement
    c1: RingElement
    level_bits: int
    scale_bits: int
    slots: int
    params: CkksParams
    depth_ct: int = 0  # ciphertext-mult rescales on this value's critical path
    depth_pt: int = 0  # plaintext-mult rescales on this value's critical path
    pending: str | None = None  # rescale tier owed after the last product

    def __post_init__(self):
        if self.level_bits > self.params.log_l:
            raise ParameterError("ciphertext level exceeds modulus budget")
        if self.c0.mod_bits != self.level_bits or self.c1.mod_bits != self.level_bits:
            raise ParameterError("ring elements not reduced to the ciphertext level")

    @property
    def exhausted(self) -> bool:
        return self.level_bits < self.scale_bits


def _max_depths(*cts: Ciphertext) -> dict:
    return {
        "depth_ct": max(c.depth_ct for c in cts),
        "depth_pt": max(c.depth_pt for c in cts),
    }


# -- encryption --------------------------------------------------------------

def encrypt(pt: Plaintext, pk: PublicKey, params: CkksParams,
            rng: random.Random | None = None) -> Ciphertext:
    """Fresh ciphertext at full level: v*pk + (m + e0, e1) mod 2^L."""
    rng = rng or random.Random()
    n = params.n
    big_l = params.log_l
    v = RingElement.from_signed(n, big_l, sample_ternary(n, rng))
    e0 = RingElement.from_signed(n, big_l, sample_gaussian(n, params.sigma, rng))
    e1 = RingElement.from_signed(n, big_l, sample_gaussian(n, params.sigma, rng))
    m = pt.m.reduce_to(big_l) if pt.m.mod_bits >= big_l else pt.m.lift_centered_to(big_l)
    c0 = v.mul(pk.b).add(m).add(e0)
    c1 = v.mul(pk.a).add(e1)
    return Ciphertext(c0=c0, c1=c1, level_bits=big_l, scale_bits=pt.scale_bits,
                      slots=params.slot_count, params=params)


def decrypt(ct: Ciphertext, sk: SecretKey) -> Plaintext:
    """m = c0 + c1*s mod 2^level; fails once the budget is gone."""
    if ct.exhausted:
        raise BudgetDepletedError(
            f"budget depleted: level {ct.level_bits} < scale {ct.scale_bits}"
        )
    s = sk.s.reduce_to(ct.level_bits) if sk.s.mod_bits >= ct.level_bits \
        else sk.s.lift_centered_to(ct.level_bits)
    m = ct.c0.add(ct.c1.mul(s))
    return Plaintext(m=m, scale_bits=ct.scale_bits, slots=ct.slots)


def encrypt_values(values, scale_bits: int, pk: PublicKey, params: CkksParams,
                   rng: random.Random | None = None) -> Ciphertext:
    return encrypt(encode(values, scale_bits, params), pk, params, rng)


def decrypt_values(ct: Ciphertext, sk: SecretKey) -> np.ndarray:
    return decode(decrypt(ct, sk))


# -- additive ops -------------------------------------------------------------

def _check_aligned(ct1: Ciphertext, ct2: Ciphertext, require_scale: bool = True):
    if ct1.level_bits != ct2.level_bits:
        raise AlignmentError(
            f"level mismatch {ct1.level_bits} != {ct2.level_bits}; mod_down first"
        )
    if require_scale and ct1.scale_bits != ct2.scale_bits:
        raise AlignmentError(f"scale mismatch {ct1.scale_bits} != {ct2.scale_bits}")


def add(ct1: Ciphertext, ct2: Ciphertext) -> Ciphertext:
    _check_aligned(ct1, ct2)
    return replace(ct1, c0=ct1.c0.add(ct2.c0), c1=ct1.c1.add(ct2.c1),
                   pending=ct1.pending or ct2.pending, **_max_depths(ct1, ct2))


def sub(ct1: Ciphertext, ct2: Ciphertext) -> Ciphertext:
    _check_aligned(ct1, ct2)
    return replace(ct1, c0=ct1.c0.sub(ct2.c0), c1=ct1.c1.sub(ct2.c1),
                   pending=ct1.pending or ct2.pending, **_max_depths(ct1, ct2))


def negate(ct: Ciphertext) -> Ciphertext:
    return replace(ct, c0=ct.c0.neg(), c1=ct.c1.neg())


def add_plain(ct: Ciphertext, pt: Plaintext) -> Ciphertext:
    if ct.scale_bits != pt.scale_bits:
        raise AlignmentError(f"plaintext scale {pt.scale_bits} != ciphertext scale {ct.scale_bits}")
    m = pt.m.reduce_to(ct.level_bits) if pt.m.mod_bits >= ct.level_bits \
        else pt.m.lift_centered_to(ct.level_bits)
    return replace(ct, c0=ct.c0.add(m))


def sub_plain(ct: Ciphertext, pt: Plaintext) -> Ciphertext:
    if ct.scale_bits != pt.scale_bits:
        raise AlignmentError(f"plaintext scale {pt.scale_bits} != ciphertext scale {ct.scale_bits}")
    m = pt.m.reduce_to(ct.level_bits) if pt.m.mod_bits >= ct.level_bits \
        else pt.m.lift_centered_to(ct.level_bits)
    return replace(ct, c0=ct.c0.sub(m))


def mult_integer(ct: Ciphertext, k: int) -> Ciphertext:
    """Exact small-integer scalar multiply: no scale change, no level cost."""
    return replace(ct, c0=ct.c0.scalar_mul(k), c1=ct.c1.scalar_mul(k))


# -- multiplicative ops -------------------------------------------------------

def mult_plain(ct: Ciphertext, pt: Plaintext) -> Ciphertext:
    """Slotwise plaintext product; output scale is the sum of scales.

    Caller rescales by the plaintext's scale (the cheap tier).
    """
    if ct.scale_bits + pt.scale_bits > ct.level_bits:
        raise BudgetDepletedError("plaintext product would exceed the level budget")
    m = pt.m.reduce_to(ct.level_bits) if pt.m.mod_bits >= ct.level_bits \
        else pt.m.lift_centered_to(ct.level_bits)
    instrument.record(pt_mults=1)
    return replace(
        ct,
        c0=ct.c0.mul(m),
        c1=ct.c1.mul(m),
        scale_bits=ct.scale_bits + pt.scale_bits,
        pending="pt",
    )


def mult(ct1: Ciphertext, ct2: Ciphertext, evk: EvaluationKey) -> Ciphertext:
    """Slotwise ciphertext product with relinearization through evk."""
    _check_aligned(ct1, ct2, require_scale=False)
    level = ct1.level_bits
    out_scale = ct1.scale_bits + ct2.scale_bits
    if out_scale > level:
        raise BudgetDepletedError(
            f"combined scale {out_scale} exceeds level budget {level}"
        )
    big_l = ct1.params.log_l
    d0 = ct1.c0.mul(ct2.c0)
    d1 = ct1.c0.mul(ct2.c1).add(ct1.c1.mul(ct2.c0))
    d2 = ct1.c1.mul(ct2.c1)
    e0, e1 = _keyswitch(d2, (evk.b, evk.a), level, big_l)
    instrument.record(ct_mults=1, keyswitches=1)
    return Ciphertext(
        c0=d0.add(e0), c1=d1.add(e1), level_bits=level, scale_bits=out_scale,
        slots=ct1.slots, params=ct1.params, pending="ct", **_max_depths(ct1, ct2),
    )


def _keyswitch(x: RingElement, key: tuple[RingElement, RingElement],
               level: int, big_l: int) -> tuple[RingElement, RingElement]:
    """(round(2^-L * x*kb), round(2^-L * x*ka)) mod 2^level."""
    kb = key[0].reduce_to(level + big_l)
    ka = key[1].reduce_to(level + big_l)
    t0 = x.mul_mod(kb, level + big_l)
    t1 = x.mul_mod(ka, level + big_l)
    return t0.divide_round(big_l, level), t1.divide_round(big_l, level)


def rescale(ct: Ciphertext, bits: int) -> Ciphertext:
    """Divide by 2^bits with rounding; level and scale both drop by bits."""
    if bits < 0:
        raise ParameterError("rescale amount must be nonnegative")
    if bits == 0:
        return ct
    if bits > ct.level_bits:
        raise BudgetDepletedError(f"rescale by {bits} exceeds level {ct.level_bits}")
    new_scale = ct.scale_bits - bits
    new_level = ct.level_bits - bits
    if new_scale <= 0:
        raise BudgetDepletedError("rescale would destroy the message scale")
    kind = ct.pending
    if kind is None:
        kind = "ct" if bits >= ct.params.log_p else "pt"
    depth_ct = ct.depth_ct + (1 if kind == "ct" else 0)
    depth_pt = ct.depth_pt + (1 if kind == "pt" else 0)
    instrument.record(**{f"rescales_{kind}": 1})
    return replace(
        ct,
        c0=ct.c0.divide_round(bits, new_level),
        c1=ct.c1.divide_round(bits, new_level),
        level_bits=new_level,
        scale_bits=new_scale,
        depth_ct=depth_ct,
        depth_pt=depth_pt,
        pending=None,
    )


def mod_down(ct: Ciphertext, target_level_bits: int) -> Ciphertext:
    """Reduce the modulus without touching the message or scale."""
    if target_level_bits > ct.level_bits:
        raise AlignmentError("mod_down cannot raise the level")
    if target_level_bits < ct.scale_bits:
        raise BudgetDepletedError(
            f"mod_down target {target_level_bits} below scale floor {ct.scale_bits}"
        )
    if target_level_bits == ct.level_bits:
        return ct
    return replace(
        ct,
        c0=ct.c0.reduce_to(target_level_bits),
        c1=ct.c1.reduce_to(target_level_bits),
        level_bits=target_level_bits,
    )


# -- slot permutations --------------------------------------------------------

def _apply_automorphism(ct: Ciphertext, exponent: int,
                        key: tuple[RingElement, RingElement]) -> Ciphertext:
    big_l = ct.params.log_l
    a0 = ct.c0.automorphism(exponent)
    a1 = ct.c1.automorphism(exponent)
    e0, e1 = _keyswitch(a1, key, ct.level_bits, big_l)
    return replace(ct, c0=a0.add(e0), c1=e1)


def rotate(ct: Ciphertext, r: int, rot_keys: RotationKeySet) -> Ciphertext:
    """Rotate slots right by r: slot i of the output is slot (i - r) of the input.

    General r is composed from its set bits, one key switch per power of two.
    """
    slots = ct.slots
    if not (0 <= r < slots):
        raise ParameterError(f"rotation amount {r} out of range [0, {slots})")
    out = ct
    amount = 1
    while amount <= r:
        if r & amount:
            key = rot_keys.key_for(amount)
            exponent = rotation_exponent(ct.params, amount)
            out = _apply_automorphism(out, exponent, key)
            instrument.record(rotations=1, keyswitches=1, rotation_amounts=[amount])
        amount <<= 1
    return out


def conjugate(ct: Ciphertext, conj_key: tuple[RingElement, RingElement]) -> Ciphertext:
    """Slotwise complex conjugation via the index-negating automorphism."""
    instrument.record(conjugations=1, keyswitches=1)
    return _apply_automorphism(ct, 2 * ct.params.n - 1, conj_key)


# -- evaluation engine --------------------------------------------------------

class HeEngine:
    """Bundles params and public evaluation material with alignment helpers.

    Holds no secret material; safe to hand to the compute side.  Plaintext
    masks and constants are cached per (pattern, scale).
    """

    def __init__(self, params: CkksParams, evk: EvaluationKey | None = None,
                 rot_keys: RotationKeySet | None = None):
        self.params = params
        self.evk = evk
        self.rot_keys = rot_keys
        self._plaintext_cache: dict[tuple, Plaintext] = {}

    # alignment

    def align(self, *cts: Ciphertext) -> list[Ciphertext]:
        level = min(ct.level_bits for ct in cts)
        return [mod_down(ct, level) for ct in cts]

    def add(self, ct1: Ciphertext, ct2: Ciphertext) -> Ciphertext:
        return add(*self.align(ct1, ct2))

    def sub(self, ct1: Ciphertext, ct2: Ciphertext) -> Ciphertext:
        return sub(*self.align(ct1, ct2))

    def mult(self, ct1: Ciphertext, ct2: Ciphertext) -> Ciphertext:
        """Aligned product followed by the full-tier rescale."""
        a, b = self.align(ct1, ct2)
        return rescale(mult(a, b, self._evk()), self.params.log_p)

    def mult_plain(self, ct: Ciphertext, pt: Plaintext) -> Ciphertext:
        """Plaintext product followed by the cheap-tier rescale (by the pt scale)."""
        return rescale(mult_plain(ct, pt), pt.scale_bits)

    def rotate(self, ct: Ciphertext, r: int) -> Ciphertext:
        return rotate(ct, r, self._rot())

    def rotate_left(self, ct: Ciphertext, r: int) -> Ciphertext:
        return rotate(ct, (ct.slots - r) % ct.slots, self._rot())

    def conjugate(self, ct: Ciphertext) -> Ciphertext:
        return conjugate(ct, self._rot().conj_key())

    # cached plaintexts

    def mask(self, spec: tuple, scale_bits: int | None = None) -> Plaintext:
        """Encoded mask for spec ("slot", i) | ("range", a, b) | ("range_value", a, b, v)."""
        scale = scale_bits if scale_bits is not None else self.params.log_p_small
        key = (spec, scale)
        pt = self._plaintext_cache.get(key)
        if pt is None:
            slots = self.params.slot_count
            vec = np.zeros(slots)
            if spec[0] == "slot":
                vec[spec[1]] = 1.0
            elif spec[0] == "range":
                vec[spec[1]:spec[2]] = 1.0
            elif spec[0] == "range_value":
                vec[spec[1]:spec[2]] = spec[3]
            else:
                raise ParameterError(f"unknown mask spec {spec!r}")
            pt = encode(vec, scale, self.params)
            self._plaintext_cache[key] = pt
        return pt

    def constant(self, value: float, scale_bits: int | None = None) -> Plaintext:
        scale = scale_bits if scale_bits is not None else self.params.log_p_small
        key = (("const", value), scale)
        pt = self._plaintext_cache.get(key)
        if pt is None:
            pt = encode_constant(value, scale, self.params)
            self._plaintext_cache[key] = pt
        return pt

    def mult_const(self, ct: Ciphertext, value: float) -> Ciphertext:
        return self.mult_plain(ct, self.constant(value))

    def add_const(self, ct: Ciphertext, value: float) -> Ciphertext:
        return add_plain(ct, self.constant(value, ct.scale_bits))

    def sub_from_const(self, value: float, ct: Ciphertext) -> Ciphertext:
        return add_plain(negate(ct), self.constant(value, ct.scale_bits))

    def _evk(self) -> EvaluationKey:
        if self.evk is None:
            raise ParameterError("engine has no evaluation key")
        return self.evk

    def _rot(self) -> RotationKeySet:
        if self.rot_keys is None:
            raise ParameterError("engine has no rotation keys")
        return self.rot_keys
