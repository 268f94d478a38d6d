"""Cryptographic primitives behind a small seam.

TESLA needs a hash for the key chain and a keyed MAC for commitments; the
chain root and NTS messages need a detached signature.  Tests substitute
:class:`CountingPrimitives` to observe how often each primitive runs.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat


class Primitives:
    """SHA-256 chain hash and HMAC-SHA256 commitments."""

    def hash(self, data: bytes) -> bytes:
        return hashlib.sha256(data).digest()

    def mac(self, key: bytes, message: bytes) -> bytes:
        return hmac.new(key, message, hashlib.sha256).digest()


@dataclass
class CountingPrimitives(Primitives):
    hash_calls: int = 0
    mac_calls: int = 0

    def hash(self, data: bytes) -> bytes:
        self.hash_calls += 1
        return super().hash(data)

    def mac(self, key: bytes, message: bytes) -> bytes:
        self.mac_calls += 1
        return super().mac(key, message)


DEFAULT_PRIMITIVES = Primitives()


def truncate_bits(digest: bytes, bits: int) -> bytes:
    """Keep the high-order ``bits`` of ``digest`` (whole bytes only)."""
    if bits <= 0 or bits % 8:
        raise ValueError(f"truncation length must be a positive multiple of 8, got {bits}")
    if bits > len(digest) * 8:
        raise ValueError(f"cannot truncate {len(digest) * 8}-bit digest to {bits} bits")
    return digest[: bits // 8]


@dataclass(frozen=True)
class Verifier:
    public_bytes: bytes

    def verify(self, signature: bytes, data: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(self.public_bytes).verify(signature, data)
        except (InvalidSignature, ValueError):
            return False
        return True


@dataclass(frozen=True)
class Signer:
    """Detached Ed25519 signer.

    ``Signer.from_seed`` derives a deterministic test key; real key management
    lives outside this package.
    """

    _key: Ed25519PrivateKey = field(repr=False)

    @classmethod
    def generate(cls) -> Signer:
        return cls(Ed25519PrivateKey.generate())

    @classmethod
    def from_seed(cls, seed: bytes | str) -> Signer:
        if isinstance(seed, str):
            seed = seed.encode()
        return cls(Ed25519PrivateKey.from_private_bytes(hashlib.sha256(b"signer|" + seed).digest()))

    def sign(self, data: bytes) -> bytes:
        return self._key.sign(data)

    @property
    def verifier(self) -> Verifier:
        raw = self._key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return Verifier(raw)
