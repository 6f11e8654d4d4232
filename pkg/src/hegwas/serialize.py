"""Versioned binary serialization for keys and ciphertexts.

Layout: header (magic "HEGW", format version u16, kind u8, log_n u8,
level_bits u32, scale_bits u32, slots u32, depth/extra u16s), then one or more
little-endian length-prefixed coefficient arrays.  Every payload carries a
trailing 64-bit blake2b checksum so files double as cache spill format.
"""
from __future__ import annotations

import hashlib
import struct

from .ckks import Ciphertext
from .encoding import Plaintext
from .errors import SerializationError
from .keys import EvaluationKey, PublicKey, RotationKeySet, SecretKey
from .params import CkksParams
from .ring import RingElement

MAGIC = b"HEGW"
VERSION = 1

KIND_CIPHERTEXT = 1
KIND_SECRET_KEY = 2
KIND_PUBLIC_KEY = 3
KIND_EVAL_KEY = 4
KIND_ROTATION_SET = 5
KIND_PLAINTEXT = 6

_HEADER = struct.Struct("<4sHBBIIIHH")
_CONJ_TAG = 0xFFFFFFFF


def _checksum(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def _pack_ring(elem: RingElement) -> bytes:
    width = (elem.mod_bits + 7) // 8
    body = b"".join(c.to_bytes(width, "little") for c in elem.coeffs)
    return struct.pack("<IIH", len(elem.coeffs), width, elem.mod_bits % 65536) + \
        struct.pack("<I", elem.mod_bits) + body


def _unpack_ring(data: bytes, offset: int) -> tuple[RingElement, int]:
    count, width, _ = struct.unpack_from("<IIH", data, offset)
    offset += struct.calcsize("<IIH")
    (mod_bits,) = struct.unpack_from("<I", data, offset)
    offset += 4
    end = offset + count * width
    if end > len(data):
        raise SerializationError("truncated coefficient array")
    coeffs = [int.from_bytes(data[offset + i * width: offset + (i + 1) * width], "little")
              for i in range(count)]
    return RingElement(count, mod_bits, coeffs, _reduced=True), end


def _header(kind: int, log_n: int, level_bits: int = 0, scale_bits: int = 0,
            slots: int = 0, extra_a: int = 0, extra_b: int = 0) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, kind, log_n, level_bits, scale_bits, slots,
                        extra_a, extra_b)


def _parse_header(data: bytes, expect_kind: int):
    if len(data) < _HEADER.size + 8:
        raise SerializationError("payload too short")
    body, check = data[:-8], data[-8:]
    if _checksum(body) != check:
        raise SerializationError("checksum mismatch")
    magic, version, kind, log_n, level_bits, scale_bits, slots, ea, eb = \
        _HEADER.unpack_from(body, 0)
    if magic != MAGIC:
        raise SerializationError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SerializationError(f"unsupported format version {version}")
    if kind != expect_kind:
        raise SerializationError(f"expected kind {expect_kind}, found {kind}")
    return body, _HEADER.size, log_n, level_bits, scale_bits, slots, ea, eb


def ciphertext_to_bytes(ct: Ciphertext) -> bytes:
    body = _header(KIND_CIPHERTEXT, ct.params.log_n, ct.level_bits, ct.scale_bits,
                   ct.slots, ct.depth_ct, ct.depth_pt)
    body += _pack_ring(ct.c0) + _pack_ring(ct.c1)
    return body + _checksum(body)


def ciphertext_from_bytes(data: bytes, params: CkksParams) -> Ciphertext:
    body, off, log_n, level_bits, scale_bits, slots, dct, dpt = \
        _parse_header(data, KIND_CIPHERTEXT)
    if log_n != params.log_n:
        raise SerializationError(f"ring degree mismatch: file log_n={log_n}, params {params.log_n}")
    c0, off = _unpack_ring(body, off)
    c1, _ = _unpack_ring(body, off)
    return Ciphertext(c0=c0, c1=c1, level_bits=level_bits, scale_bits=scale_bits,
                      slots=slots, params=params, depth_ct=dct, depth_pt=dpt)


def plaintext_to_bytes(pt: Plaintext, log_n: int) -> bytes:
    body = _header(KIND_PLAINTEXT, log_n, pt.m.mod_bits, pt.scale_bits, pt.slots)
    body += _pack_ring(pt.m)
    return body + _checksum(body)


def plaintext_from_bytes(data: bytes) -> Plaintext:
    body, off, _, _, scale_bits, slots, _, _ = _parse_header(data, KIND_PLAINTEXT)
    m, _ = _unpack_ring(body, off)
    return Plaintext(m=m, scale_bits=scale_bits, slots=slots)


def secret_key_to_bytes(sk: SecretKey, log_n: int) -> bytes:
    body = _header(KIND_SECRET_KEY, log_n) + _pack_ring(sk.s)
    return body + _checksum(body)


def secret_key_from_bytes(data: bytes) -> SecretKey:
    body, off, *_ = _parse_header(data, KIND_SECRET_KEY)
    s, _ = _unpack_ring(body, off)
    return SecretKey(s=s)


def public_key_to_bytes(pk: PublicKey, log_n: int) -> bytes:
    body = _header(KIND_PUBLIC_KEY, log_n) + _pack_ring(pk.b) + _pack_ring(pk.a)
    return body + _checksum(body)


def public_key_from_bytes(data: bytes) -> PublicKey:
    body, off, *_ = _parse_header(data, KIND_PUBLIC_KEY)
    b, off = _unpack_ring(body, off)
    a, _ = _unpack_ring(body, off)
    return PublicKey(b=b, a=a)


def evaluation_key_to_bytes(evk: EvaluationKey, log_n: int) -> bytes:
    body = _header(KIND_EVAL_KEY, log_n) + _pack_ring(evk.b) + _pack_ring(evk.a)
    return body + _checksum(body)


def evaluation_key_from_bytes(data: bytes) -> EvaluationKey:
    body, off, *_ = _parse_header(data, KIND_EVAL_KEY)
    b, off = _unpack_ring(body, off)
    a, _ = _unpack_ring(body, off)
    return EvaluationKey(b=b, a=a)


def rotation_keys_to_bytes(rk: RotationKeySet, log_n: int) -> bytes:
    entries = sorted(rk.keys.items())
    count = len(entries) + (1 if rk.conj is not None else 0)
    body = _header(KIND_ROTATION_SET, log_n, extra_a=count)
    for amount, (b, a) in entries:
        body += struct.pack("<I", amount) + _pack_ring(b) + _pack_ring(a)
    if rk.conj is not None:
        body += struct.pack("<I", _CONJ_TAG) + _pack_ring(rk.conj[0]) + _pack_ring(rk.conj[1])
    return body + _checksum(body)


def rotation_keys_from_bytes(data: bytes) -> RotationKeySet:
    body, off, _, _, _, _, count, _ = _parse_header(data, KIND_ROTATION_SET)
    keys: dict[int, tuple[RingElement, RingElement]] = {}
    conj = None
    for _ in range(count):
        (amount,) = struct.unpack_from("<I", body, off)
        off += 4
        b, off = _unpack_ring(body, off)
        a, off = _unpack_ring(body, off)
        if amount == _CONJ_TAG:
            conj = (b, a)
        else:
            keys[amount] = (b, a)
    return RotationKeySet(keys=keys, conj=conj)
