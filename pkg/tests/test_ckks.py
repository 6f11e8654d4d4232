import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hegwas import (
    CkksParams,
    add,
    conjugate,
    decrypt,
    decrypt_values,
    encode,
    encrypt,
    encrypt_values,
    keygen,
    mod_down,
    mult,
    mult_integer,
    mult_plain,
    rescale,
    rotate,
    sub,
    track_ops,
)
from hegwas.errors import (
    AlignmentError,
    BudgetDepletedError,
    MissingKeyError,
    ParameterError,
)

from conftest import UNIT, max_err


def rand_vec(seed, slots, lo=-1.0, hi=1.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, slots) + 1j * rng.uniform(lo, hi, slots)


# -- key generation -----------------------------------------------------------


def test_keygen_secret_weight_exact():
    params = CkksParams(log_n=4, log_l=120, log_p=45, log_p_small=10, h=4)
    sk, _, _, _ = keygen(params, seed=7)
    nonzero = [c for c in sk.s.centered() if c]
    assert len(nonzero) == 4
    assert set(nonzero) <= {-1, 1}


def test_keygen_deterministic():
    a = keygen(UNIT, seed=9)
    b = keygen(UNIT, seed=9)
    assert a[0].s == b[0].s
    assert a[1].b == b[1].b and a[1].a == b[1].a
    assert a[2].b == b[2].b
    assert a[3].keys.keys() == b[3].keys.keys()
    assert all(a[3].keys[r] == b[3].keys[r] for r in a[3].keys)


def test_keygen_different_seeds_differ():
    assert keygen(UNIT, seed=1)[0].s != keygen(UNIT, seed=2)[0].s


def test_keygen_rejects_bad_params():
    with pytest.raises(ParameterError):
        CkksParams(log_n=4, log_l=120, log_p=45, log_p_small=10, h=99)
    with pytest.raises(ParameterError):
        keygen(CkksParams(log_n=4, log_l=60, log_p=45, log_p_small=10, h=4), seed=0)


def test_evk_and_rotation_keys_live_mod_2_2l(unit_ctx):
    assert unit_ctx.evk.b.mod_bits == 2 * UNIT.log_l
    assert unit_ctx.evk.a.mod_bits == 2 * UNIT.log_l
    for pair in unit_ctx.rot.keys.values():
        assert pair[0].mod_bits == 2 * UNIT.log_l
    # keys exactly for powers of two up to N/4, plus conjugation
    expected = {1 << j for j in range((UNIT.n // 4).bit_length())}
    assert set(unit_ctx.rot.keys) == expected
    assert unit_ctx.rot.conj is not None


# -- encrypt / decrypt ----------------------------------------------------------


def test_roundtrip_noise_bound_over_trials(unit_ctx):
    rng = random.Random(0)
    worst = 0.0
    for trial in range(100):
        v = rand_vec(trial, UNIT.slot_count)
        ct = encrypt_values(v, 45, unit_ctx.pk, UNIT, rng)
        worst = max(worst, max_err(decrypt_values(ct, unit_ctx.sk), v))
    assert worst < 2.0 ** (-(45 - UNIT.log_n - 4))


def test_constant_vector_roundtrip(unit_ctx):
    ct = encrypt_values([0.5] * UNIT.slot_count, 45, unit_ctx.pk, UNIT, random.Random(1))
    got = decrypt_values(ct, unit_ctx.sk)
    assert max_err(got, np.full(UNIT.slot_count, 0.5)) < 1e-9


def test_wrong_key_decrypts_to_garbage(unit_ctx):
    other_sk = keygen(UNIT, seed=999)[0]
    v = rand_vec(5, UNIT.slot_count)
    ct = encrypt_values(v, 45, unit_ctx.pk, UNIT, random.Random(2))
    got = decrypt_values(ct, other_sk)
    assert np.max(np.abs(got - v)) > 1.0


def test_decrypt_exhausted_raises(unit_ctx):
    v = rand_vec(6, UNIT.slot_count)
    ct = encrypt_values(v, 45, unit_ctx.pk, UNIT, random.Random(3))
    low = mod_down(ct, 45)  # level == scale is the last decryptable point
    assert max_err(decrypt_values(low, unit_ctx.sk), v) < 1e-6
    from dataclasses import replace

    dead = replace(low, scale_bits=46)
    with pytest.raises(BudgetDepletedError):
        decrypt(dead, unit_ctx.sk)


# -- additive operations ---------------------------------------------------------


def test_add_cancels_negation(unit_ctx):
    v = rand_vec(7, UNIT.slot_count)
    rng = random.Random(4)
    ct1 = encrypt_values(v, 45, unit_ctx.pk, UNIT, rng)
    ct2 = encrypt_values(-v, 45, unit_ctx.pk, UNIT, rng)
    assert np.max(np.abs(decrypt_values(add(ct1, ct2), unit_ctx.sk))) < 1e-9


def test_add_commutes(unit_ctx):
    rng = random.Random(5)
    a = encrypt_values(rand_vec(8, UNIT.slot_count), 45, unit_ctx.pk, UNIT, rng)
    b = encrypt_values(rand_vec(9, UNIT.slot_count), 45, unit_ctx.pk, UNIT, rng)
    ab = decrypt_values(add(a, b), unit_ctx.sk)
    ba = decrypt_values(add(b, a), unit_ctx.sk)
    assert max_err(ab, ba) < 2.0 ** (-45 + 2)


def test_add_requires_alignment(unit_ctx):
    rng = random.Random(6)
    a = encrypt_values([0.1], 45, unit_ctx.pk, UNIT, rng)
    b = mod_down(encrypt_values([0.2], 45, unit_ctx.pk, UNIT, rng), 200)
    with pytest.raises(AlignmentError):
        add(a, b)
    c = encrypt_values([0.2], 40, unit_ctx.pk, UNIT, rng)
    with pytest.raises(AlignmentError):
        add(a, mod_down(c, a.level_bits))


def test_sub_of_self_is_zero(unit_ctx):
    ct = encrypt_values(rand_vec(10, UNIT.slot_count), 45, unit_ctx.pk, UNIT, random.Random(7))
    assert np.max(np.abs(decrypt_values(sub(ct, ct), unit_ctx.sk))) == 0.0


def test_mult_plain_with_rescale(unit_ctx):
    rng = random.Random(8)
    ct = encrypt_values([2.0, 3.0], 45, unit_ctx.pk, UNIT, rng)
    pt = encode([10.0, 10.0], 30, UNIT)
    out = rescale(mult_plain(ct, pt), 30)
    got = decrypt_values(out, unit_ctx.sk).real
    assert abs(got[0] - 20.0) < 1e-5 and abs(got[1] - 30.0) < 1e-5
    assert out.level_bits == ct.level_bits - 30
    assert out.scale_bits == 45


def test_mult_integer_is_free_and_exact(unit_ctx):
    ct = encrypt_values([0.2, -0.1], 45, unit_ctx.pk, UNIT, random.Random(9))
    out = mult_integer(ct, 4)
    assert out.level_bits == ct.level_bits and out.scale_bits == ct.scale_bits
    got = decrypt_values(out, unit_ctx.sk).real
    assert abs(got[0] - 0.8) < 1e-8 and abs(got[1] + 0.4) < 1e-8


# -- multiplication ---------------------------------------------------------------


def test_mult_example(unit_ctx):
    rng = random.Random(10)
    a = encrypt_values([2.0, 3.0], 45, unit_ctx.pk, UNIT, rng)
    b = encrypt_values([4.0, 5.0], 45, unit_ctx.pk, UNIT, rng)
    got = decrypt_values(rescale(mult(a, b, unit_ctx.evk), 45), unit_ctx.sk).real
    assert abs(got[0] - 8.0) < 1e-5 and abs(got[1] - 15.0) < 1e-5


def test_mult_by_ones_is_identity(unit_ctx):
    rng = random.Random(11)
    v = rand_vec(11, UNIT.slot_count)
    a = encrypt_values(v, 45, unit_ctx.pk, UNIT, rng)
    ones = encrypt_values(np.ones(UNIT.slot_count), 45, unit_ctx.pk, UNIT, rng)
    got = decrypt_values(rescale(mult(a, ones, unit_ctx.evk), 45), unit_ctx.sk)
    assert max_err(got, v) < 1e-8


def test_mult_homomorphism_relative_error(unit_ctx):
    rng = random.Random(12)
    worst = 0.0
    for trial in range(50):
        va = rand_vec(100 + trial, UNIT.slot_count)
        vb = rand_vec(200 + trial, UNIT.slot_count)
        a = encrypt_values(va, 45, unit_ctx.pk, UNIT, rng)
        b = encrypt_values(vb, 45, unit_ctx.pk, UNIT, rng)
        got = decrypt_values(rescale(mult(a, b, unit_ctx.evk), 45), unit_ctx.sk)
        exact = va * vb
        worst = max(worst, max_err(got, exact) / np.max(np.abs(exact)))
    assert worst < 1e-6


def test_mult_budget_exhaustion(unit_ctx):
    rng = random.Random(13)
    ct = encrypt_values([0.5], 45, unit_ctx.pk, UNIT, rng)
    low = mod_down(ct, 60)
    with pytest.raises(BudgetDepletedError):
        mult(low, low, unit_ctx.evk)


# -- rescale ----------------------------------------------------------------------


def test_rescale_zero_is_identity(unit_ctx):
    ct = encrypt_values([0.7], 45, unit_ctx.pk, UNIT, random.Random(14))
    assert rescale(ct, 0) is ct


def test_rescale_rounding_bound(unit_ctx):
    rng = random.Random(15)
    v = rand_vec(16, UNIT.slot_count)
    ct = encrypt_values(v, 60, unit_ctx.pk, UNIT, rng)
    before = decrypt_values(ct, unit_ctx.sk)
    after = decrypt_values(rescale(ct, 15), unit_ctx.sk)
    assert max_err(after, before) < 2.0 ** (-45 + UNIT.log_n)


def test_rescale_level_arithmetic(unit_ctx):
    ct = encrypt_values([0.3], 45, unit_ctx.pk, UNIT, random.Random(16))
    out = rescale(mult(ct, ct, unit_ctx.evk), 45)
    assert out.level_bits == ct.level_bits - 45
    assert out.scale_bits == 45


def test_mult_rescale_chain_budget():
    params = CkksParams(log_n=6, log_l=200, log_p=45, log_p_small=10, h=8)
    sk, pk, evk, _ = keygen(params, seed=3)
    rng = random.Random(17)
    steps = (params.log_l - params.log_p) // params.log_p  # 3
    ct = encrypt_values([0.9] * params.slot_count, 45, pk, params, rng)
    for _ in range(steps):
        ct = rescale(mult(ct, ct, evk), 45)
    expect = 0.9 ** (2 ** steps)
    assert abs(decrypt_values(ct, sk).real[0] - expect) < 1e-4
    with pytest.raises(BudgetDepletedError):
        mult(ct, ct, evk)


# -- rotation / conjugation --------------------------------------------------------


def test_rotate_shifts_right(unit_ctx):
    vec = np.zeros(UNIT.slot_count)
    vec[:4] = [1, 2, 3, 4]
    ct = encrypt_values(vec, 45, unit_ctx.pk, UNIT, random.Random(18))
    got = decrypt_values(rotate(ct, 1, unit_ctx.rot), unit_ctx.sk).real
    assert abs(got[0]) < 1e-6
    assert max_err(got[1:5], [1, 2, 3, 4]) < 1e-6


def test_rotate_full_cycle_composed(unit_ctx):
    v = rand_vec(20, UNIT.slot_count)
    ct = encrypt_values(v, 45, unit_ctx.pk, UNIT, random.Random(19))
    half = UNIT.slot_count // 2
    back = rotate(rotate(ct, half, unit_ctx.rot), half, unit_ctx.rot)
    assert max_err(decrypt_values(back, unit_ctx.sk), v) < 1e-6


@given(st.integers(0, 127), st.integers(0, 127))
@settings(max_examples=8, deadline=None)
def test_rotate_composition(unit_ctx, a, b):
    v = rand_vec(21, UNIT.slot_count)
    ct = encrypt_values(v, 45, unit_ctx.pk, UNIT, random.Random(20))
    lhs = rotate(rotate(ct, a, unit_ctx.rot), b, unit_ctx.rot)
    rhs = rotate(ct, (a + b) % UNIT.slot_count, unit_ctx.rot)
    assert max_err(decrypt_values(lhs, unit_ctx.sk), decrypt_values(rhs, unit_ctx.sk)) < 1e-5


def test_rotation_keyswitch_counts_follow_binary_decomposition():
    # 245 = 11110101b has six set bits; 256 is a single power of two
    params = CkksParams(log_n=10, log_l=160, log_p=45, log_p_small=10, h=16)
    sk, pk, evk, rot = keygen(params, seed=5)
    ct = encrypt_values([1.0, 2.0], 45, pk, params, random.Random(21))
    with track_ops() as counter:
        rotate(ct, 245, rot)
    assert counter.rotations == 6
    assert sorted(counter.rotation_amounts) == [1, 4, 16, 32, 64, 128]
    with track_ops() as counter:
        rotate(ct, 256, rot)
    assert counter.rotations == 1 and counter.rotation_amounts == [256]


def test_rotate_missing_key():
    from hegwas.keys import RotationKeySet

    empty = RotationKeySet(keys={}, conj=None)
    ct_params = UNIT
    sk, pk, evk, _ = keygen(ct_params, seed=6)
    ct = encrypt_values([1.0], 45, pk, ct_params, random.Random(22))
    with pytest.raises(MissingKeyError):
        rotate(ct, 1, empty)


def test_conjugate_example(unit_ctx):
    ct = encrypt_values([3 + 4j] * 4, 45, unit_ctx.pk, UNIT, random.Random(23))
    got = decrypt_values(conjugate(ct, unit_ctx.rot.conj_key()), unit_ctx.sk)
    assert abs(got[0] - (3 - 4j)) < 1e-6


def test_conjugate_involution(unit_ctx):
    v = rand_vec(24, UNIT.slot_count)
    ct = encrypt_values(v, 45, unit_ctx.pk, UNIT, random.Random(24))
    twice = conjugate(conjugate(ct, unit_ctx.rot.conj_key()), unit_ctx.rot.conj_key())
    assert max_err(decrypt_values(twice, unit_ctx.sk), v) < 1e-6


def test_conjugate_magnitude_squared(unit_ctx):
    v = rand_vec(25, UNIT.slot_count)
    ct = encrypt_values(v, 45, unit_ctx.pk, UNIT, random.Random(25))
    prod = rescale(mult(ct, conjugate(ct, unit_ctx.rot.conj_key()), unit_ctx.evk), 45)
    got = decrypt_values(prod, unit_ctx.sk).real
    assert max_err(got, np.abs(v) ** 2) < 1e-6


# -- mod_down ------------------------------------------------------------------------


def test_mod_down_to_own_level_is_identity(unit_ctx):
    ct = encrypt_values([0.4], 45, unit_ctx.pk, UNIT, random.Random(26))
    assert mod_down(ct, ct.level_bits) is ct


def test_mod_down_preserves_message(unit_ctx):
    v = rand_vec(27, UNIT.slot_count)
    ct = encrypt_values(v, 45, unit_ctx.pk, UNIT, random.Random(27))
    low = mod_down(ct, 120)
    assert low.scale_bits == ct.scale_bits
    assert max_err(decrypt_values(low, unit_ctx.sk), decrypt_values(ct, unit_ctx.sk)) \
        < 2.0 ** (-45 + 1)


def test_mod_down_enables_add(unit_ctx):
    rng = random.Random(28)
    va, vb = rand_vec(28, UNIT.slot_count), rand_vec(29, UNIT.slot_count)
    a = encrypt_values(va, 45, unit_ctx.pk, UNIT, rng)
    b = mod_down(encrypt_values(vb, 45, unit_ctx.pk, UNIT, rng), 150)
    out = add(mod_down(a, 150), b)
    assert max_err(decrypt_values(out, unit_ctx.sk), va + vb) < 1e-6


def test_mod_down_below_scale_floor_rejected(unit_ctx):
    ct = encrypt_values([0.4], 45, unit_ctx.pk, UNIT, random.Random(29))
    with pytest.raises(BudgetDepletedError):
        mod_down(ct, 44)


# -- depth bookkeeping -----------------------------------------------------------------


def test_depth_counters_track_tiers(unit_ctx):
    rng = random.Random(30)
    ct = encrypt_values([0.5] * 4, 45, unit_ctx.pk, UNIT, rng)
    assert ct.depth_ct == 0 and ct.depth_pt == 0
    prod = rescale(mult(ct, ct, unit_ctx.evk), 45)
    assert prod.depth_ct == 1 and prod.depth_pt == 0
    masked = rescale(mult_plain(prod, encode([1.0] * 4, 30, UNIT)), 30)
    assert masked.depth_ct == 1 and masked.depth_pt == 1
    summed = add(masked, mod_down(rescale(mult_plain(ct, encode([0.0], 30, UNIT)), 30),
                                  masked.level_bits))
    assert summed.depth_ct == 1 and summed.depth_pt == 1
