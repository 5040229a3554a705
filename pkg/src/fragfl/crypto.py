"""PRNG streams, Diffie-Hellman, mask/OTP derivation and seed encryption.

The PRNG is SHAKE-256 over a domain tag and the seed, so every endpoint on
every platform expands the same seed into the same bit stream.  Bits are
taken LSB-first from each output byte.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass
from typing import Protocol

import gmpy2
import numpy as np
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import padding, rsa

from .errors import DecryptionError, DomainError, ProtocolError
from .params import BitMask, LayerLayout, ParamWords, WORD_BITS

SEED_BYTES = 32
RSA_BITS = 3072
_PRNG_TAG = b"fragfl/prng/v1\x00"


# ---------------------------------------------------------------------------
# Groups
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DhGroup:
    name: str
    p: int
    g: int
    q: int  # order of the subgroup generated by g
    exponent_bits: int

    @property
    def byte_length(self) -> int:
        return (self.p.bit_length() + 7) // 8

    @property
    def bit_length(self) -> int:
        return 8 * self.byte_length


# RFC 5114 section 2.3: 2048-bit MODP group with 256-bit prime order subgroup.
_MODP2048_256 = DhGroup(
    name="modp2048-256",
    p=int(
        "87A8E61DB4B6663CFFBBD19C651959998CEEF608660DD0F25D2CEED4435E3B00"
        "E00DF8F1D61957D4FAF7DF4561B2AA3016C3D91134096FAA3BF4296D830E9A7C"
        "209E0C6497517ABD5A8A9D306BCF67ED91F9E6725B4758C022E0B1EF4275BF7B"
        "6C5BFC11D45F9088B941F54EB1E59BB8BC39A0BF12307F5C4FDB70C581B23F76"
        "B63ACAE1CAA6B7902D52526735488A0EF13C6D9A51BFA4AB3AD8347796524D8E"
        "F6A167B5A41825D967E144E5140564251CCACB83E6B486F6B3CA3F7971506026"
        "C0B857F689962856DED4010ABD0BE621C3A3960A54E710C375F26375D7014103"
        "A4B54330C198AF126116D2276E11715F693877FAD7EF09CADB094AE91E1A1597",
        16,
    ),
    g=int(
        "3FB32C9B73134D0B2E77506660EDBD484CA7B18F21EF205407F4793A1A0BA125"
        "10DBC15077BE463FFF4FED4AAC0BB555BE3A6C1B0C6B47B1BC3773BF7E8C6F62"
        "901228F8C28CBB18A55AE31341000A650196F931C77A57F2DDF463E5E9EC144B"
        "777DE62AAAB8A8628AC376D282D6ED3864E67982428EBC831D14348F6F2F9193"
        "B5045AF2767164E1DFC967C1FB3F2E55A4BD1BFFE83B9C80D052B985D182EA0A"
        "DB2A3B7313D3FE14C8484B1E052588B9B7D2BBD2DF016199ECD06E1557CD0915"
        "B3353BBB64E0EC377FD028370DF92B52C7891428CDC67EB6184B523D1DB246C3"
        "2F63078490F00EF8D647D148D47954515E2327CFEF98C582664B4C0F6CC41659",
        16,
    ),
    q=int("8CF83642A709A097B447997640129DA299B1A47D1EB3750BA308B0FE64F5FBD3", 16),
    exponent_bits=256,
)

# Oracle-checkable toy group; 5 generates the whole multiplicative group.
_TEST_23 = DhGroup(name="test-23", p=23, g=5, q=22, exponent_bits=4)

GROUPS: dict[str, DhGroup] = {g.name: g for g in (_MODP2048_256, _TEST_23)}
TEST_GROUPS = frozenset({"test-23"})


def get_group(name: str = "modp2048-256", *, allow_test: bool = False) -> DhGroup:
    try:
        group = GROUPS[name]
    except KeyError:
        raise DomainError(f"unknown DH group {name!r}") from None
    if name in TEST_GROUPS and not allow_test:
        raise DomainError(f"group {name!r} is only available with allow_test=True")
    return group


# ---------------------------------------------------------------------------
# Randomness sources
# ---------------------------------------------------------------------------


class RandomSource(Protocol):
    def token_bytes(self, n: int) -> bytes: ...

    def randbelow(self, n: int) -> int: ...


class SystemRandom:
    """OS entropy; the default for real protocol runs."""

    def token_bytes(self, n: int) -> bytes:
        return secrets.token_bytes(n)

    def randbelow(self, n: int) -> int:
        return secrets.randbelow(n)


class DeterministicRandom:
    """Seeded SHAKE-256 counter DRBG for reproducible simulations and tests."""

    def __init__(self, seed: bytes | int | str) -> None:
        if isinstance(seed, int):
            seed = seed.to_bytes((seed.bit_length() + 8) // 8, "big", signed=True)
        elif isinstance(seed, str):
            seed = seed.encode()
        self._key = hashlib.sha256(b"fragfl/drbg/v1\x00" + seed).digest()
        self._counter = 0

    def token_bytes(self, n: int) -> bytes:
        block = hashlib.shake_256(self._key + self._counter.to_bytes(8, "big")).digest(n)
        self._counter += 1
        return block

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise DomainError("randbelow bound must be positive")
        nbytes = (n.bit_length() + 7) // 8 + 8
        # Extra 64 bits keep the modulo bias below 2**-64.
        return int.from_bytes(self.token_bytes(nbytes), "big") % n


# ---------------------------------------------------------------------------
# PRNG, masks and pads
# ---------------------------------------------------------------------------


def prng_bytes(seed: bytes, n_bytes: int) -> bytes:
    if not seed:
        raise DomainError("PRNG seed must be non-empty")
    return hashlib.shake_256(_PRNG_TAG + bytes(seed)).digest(n_bytes)


def prng_stream(seed: bytes, n_bits: int) -> np.ndarray:
    """First ``n_bits`` of the PRNG stream as a uint8 array of 0/1."""
    raw = np.frombuffer(prng_bytes(seed, (n_bits + 7) // 8), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:n_bits]


def dh_private(group: DhGroup, rng: RandomSource | None = None) -> int:
    rng = rng or SystemRandom()
    # uniform in [2, q-1]
    return 2 + rng.randbelow(group.q - 2)


def _check_exponent(group: DhGroup, a: int) -> None:
    if not 1 < a < group.q:
        raise ProtocolError("DH exponent outside (1, q)")


def dh_public(group: DhGroup, a: int) -> int:
    _check_exponent(group, a)
    return int(gmpy2.powmod(group.g, a, group.p))


def check_public(group: DhGroup, value: int) -> None:
    if not 1 < value < group.p - 1:
        raise ProtocolError("DH public value outside (1, p-1)")


def dh_shared(group: DhGroup, peer_pub: int, a: int) -> int:
    check_public(group, peer_pub)
    _check_exponent(group, a)
    return int(gmpy2.powmod(peer_pub, a, group.p))


def encode_int(value: int, width: int) -> bytes:
    return value.to_bytes(width, "big")


def derive_mask(shared_secret: int, n_params: int, group: DhGroup) -> BitMask:
    seed = encode_int(shared_secret, group.byte_length)
    return BitMask(prng_stream(seed, n_params).astype(bool))


def gen_otp(seed: bytes, layout: LayerLayout | int) -> ParamWords:
    """One-time pad of ``|W|`` words expanded from ``seed``."""
    if isinstance(layout, int):
        layout = LayerLayout.flat(layout)
    n = layout.total
    raw = prng_bytes(seed, n * WORD_BITS // 8)
    return ParamWords(np.frombuffer(raw, dtype="<u4"), layout)


def new_seed(rng: RandomSource | None = None) -> bytes:
    return (rng or SystemRandom()).token_bytes(SEED_BYTES)


# ---------------------------------------------------------------------------
# Seed encryption under the server key (RSA-OAEP)
# ---------------------------------------------------------------------------

_OAEP = padding.OAEP(mgf=padding.MGF1(algorithm=hashes.SHA256()), algorithm=hashes.SHA256(), label=None)


@dataclass(frozen=True)
class ServerKeyPair:
    private_key: rsa.RSAPrivateKey

    @classmethod
    def generate(cls, bits: int = RSA_BITS) -> "ServerKeyPair":
        return cls(rsa.generate_private_key(public_exponent=65537, key_size=bits))

    @property
    def public_key(self) -> rsa.RSAPublicKey:
        return self.private_key.public_key()

    @property
    def ciphertext_bytes(self) -> int:
        return self.private_key.key_size // 8


def pk_encrypt_seed(seed: bytes, public_key: rsa.RSAPublicKey) -> bytes:
    if len(seed) != SEED_BYTES:
        raise DomainError(f"seed must be {SEED_BYTES} bytes")
    return public_key.encrypt(bytes(seed), _OAEP)


def pk_decrypt_seed(ciphertext: bytes, keys: ServerKeyPair) -> bytes:
    try:
        seed = keys.private_key.decrypt(bytes(ciphertext), _OAEP)
    except ValueError as exc:
        raise DecryptionError("seed ciphertext failed to decrypt") from exc
    if len(seed) != SEED_BYTES:
        raise DecryptionError("decrypted seed has the wrong length")
    return seed
