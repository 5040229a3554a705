import collections

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from fragfl import crypto
from fragfl.errors import DecryptionError, DomainError, ProtocolError
from fragfl.params import ParamWords, xor_words


def test_toy_group_is_gated():
    with pytest.raises(DomainError):
        crypto.get_group("test-23")
    with pytest.raises(DomainError):
        crypto.get_group("nope")


def test_toy_modpow_oracle(toy_group):
    assert crypto.dh_public(toy_group, 6) == 8
    assert crypto.dh_public(toy_group, 15) == pow(5, 15, 23)
    a_pub, b_pub = crypto.dh_public(toy_group, 6), crypto.dh_public(toy_group, 15)
    assert crypto.dh_shared(toy_group, b_pub, 6) == 2
    assert crypto.dh_shared(toy_group, a_pub, 15) == 2


@pytest.mark.parametrize("bad", [0, 1, 22, 23, 100])
def test_invalid_peer_public_rejected(toy_group, bad):
    with pytest.raises(ProtocolError):
        crypto.dh_shared(toy_group, bad, 6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**64))
def test_dh_symmetry_modp(modp, s):
    rng = crypto.DeterministicRandom(s)
    a, b = crypto.dh_private(modp, rng), crypto.dh_private(modp, rng)
    A, B = crypto.dh_public(modp, a), crypto.dh_public(modp, b)
    assert crypto.dh_shared(modp, B, a) == crypto.dh_shared(modp, A, b)
    assert pow(A, modp.q, modp.p) == 1  # lands in the prime-order subgroup


def test_prng_determinism_and_avalanche():
    n = 10**6
    s = bytes(range(32))
    assert np.array_equal(crypto.prng_stream(s, n), crypto.prng_stream(s, n))
    flipped = bytes([s[0] ^ 1]) + s[1:]
    dist = int(np.sum(crypto.prng_stream(s, n) != crypto.prng_stream(flipped, n)))
    assert abs(dist - n / 2) <= 3 * np.sqrt(n / 4)


def test_prng_is_lsb_first():
    s = b"\x01" * 32
    first = crypto.prng_bytes(s, 1)[0]
    assert crypto.prng_stream(s, 8).tolist() == [(first >> i) & 1 for i in range(8)]


def test_mask_popcount_and_agreement(modp):
    n = 10**5
    m1 = crypto.derive_mask(123456789, n, modp)
    assert m1 == crypto.derive_mask(123456789, n, modp)
    assert abs(m1.popcount() - n / 2) <= 3 * np.sqrt(n / 4)
    m2 = crypto.derive_mask(987654321, n, modp)
    agree = int(np.sum(m1.bits == m2.bits))
    assert abs(agree - n / 2) <= 3 * np.sqrt(n / 4)


def test_otp_self_inverse_and_distinct():
    w = ParamWords.from_floats(np.linspace(-1, 1, 50))
    pad_a = crypto.gen_otp(b"a" * 32, w.layout)
    pad_b = crypto.gen_otp(b"b" * 32, w.layout)
    assert xor_words(xor_words(w, pad_a), pad_a) == w
    assert pad_a != pad_b


def test_otp_byte_histogram_uniform():
    pad = crypto.gen_otp(b"u" * 32, 50_000)
    counts = np.bincount(np.frombuffer(pad.words.tobytes(), dtype=np.uint8), minlength=256)
    assert stats.chisquare(counts).pvalue > 0.001
    # a structured plaintext under the same pad looks the same
    w = ParamWords.from_floats(np.ones(50_000))
    enc = xor_words(w, pad)
    counts = np.bincount(np.frombuffer(enc.words.tobytes(), dtype=np.uint8), minlength=256)
    assert stats.chisquare(counts).pvalue > 0.001


def test_seed_encryption(keys):
    seed = crypto.new_seed(crypto.DeterministicRandom("s"))
    c1 = crypto.pk_encrypt_seed(seed, keys.public_key)
    c2 = crypto.pk_encrypt_seed(seed, keys.public_key)
    assert len(c1) == 384 == keys.ciphertext_bytes
    assert c1 != c2
    assert crypto.pk_decrypt_seed(c1, keys) == seed
    tampered = bytes([c1[0] ^ 0xFF]) + c1[1:]
    with pytest.raises(DecryptionError):
        crypto.pk_decrypt_seed(tampered, keys)
    with pytest.raises(DomainError):
        crypto.pk_encrypt_seed(b"short", keys.public_key)


def test_deterministic_random_reproducible():
    a, b = crypto.DeterministicRandom("x"), crypto.DeterministicRandom("x")
    assert [a.randbelow(1000) for _ in range(5)] == [b.randbelow(1000) for _ in range(5)]
    rng = crypto.DeterministicRandom(1)
    counts = collections.Counter(rng.randbelow(4) for _ in range(4000))
    assert set(counts) == {0, 1, 2, 3}
    assert stats.chisquare(list(counts.values())).pvalue > 0.001
