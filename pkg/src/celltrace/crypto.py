"""Cryptographic primitives for the tracing protocol.

Four pieces live here:

* salted cell tags: SHA-256 over (cell id bytes || 16-byte area salt), the
  only form in which a location ever reaches the back-end
* positive-report credentials: a self-checking message ``m = a || sha256(a)``
  carrying no identity, authorized through a textbook RSA blind signature so
  the signer never sees ``m`` itself
* a replay ledger so one signed credential cannot authorize two reports
* sealed envelopes for the client -> back-end channel, with a real hybrid
  public-key scheme and a transparent test transport behind one interface

The blind-signature math is deliberately the plain multiplicative scheme
(blind with r^e, sign with the private exponent, strip r): the structure
check on ``m`` is the integrity mechanism, not a padding scheme. Signing
keypairs of 1024 bits or more come from the ``cryptography`` library; smaller
ones (test-only, flagged insecure) are generated locally since the library
refuses them.
"""

from __future__ import annotations

import hashlib
import math
import os
import secrets
import threading
from dataclasses import dataclass
from typing import NamedTuple, Optional

from .geometry import CellId, cell_id_to_bytes

SALT_BYTES = 16
PSEUDONYM_BYTES = 16
TAG_BYTES = 32
_DIGEST_BITS = 256


class CryptoError(Exception):
    pass


class EnvelopeError(CryptoError):
    """Envelope failed to open: wrong key, truncation, or tampering."""


# ---------------------------------------------------------------------------
# Cell tags and pseudonyms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AreaSalt:
    """Random value a coverage area broadcasts for one validity window."""

    value: bytes
    area: tuple[int, int]
    valid_from: int
    valid_slots: int

    def __post_init__(self):
        if len(self.value) != SALT_BYTES:
            raise ValueError(f"salt must be {SALT_BYTES} bytes, got {len(self.value)}")


def cell_tag(cell: CellId, salt: AreaSalt | bytes) -> bytes:
    """32-byte tag hiding the cell: SHA-256(cell id bytes || salt bytes)."""
    value = salt.value if isinstance(salt, AreaSalt) else salt
    if len(value) != SALT_BYTES:
        raise ValueError(f"salt must be {SALT_BYTES} bytes, got {len(value)}")
    return hashlib.sha256(cell_id_to_bytes(cell) + value).digest()


def new_pseudonym(rng=None) -> bytes:
    """Fresh 16-byte pseudonym; rng is a numpy Generator for seeded scenarios."""
    if rng is None:
        return secrets.token_bytes(PSEUDONYM_BYTES)
    return rng.bytes(PSEUDONYM_BYTES)


# ---------------------------------------------------------------------------
# RSA blind signatures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SigningKeyPair:
    modulus: int
    public_exponent: int
    private_exponent: int
    bits: int

    @property
    def public(self) -> tuple[int, int]:
        return self.public_exponent, self.modulus


def generate_signing_keypair(bits: int = 1024) -> SigningKeyPair:
    if bits % 8 != 0 or bits < 384:
        raise ValueError(f"key size must be a multiple of 8 and >= 384, got {bits}")
    if bits >= 1024:
        from cryptography.hazmat.primitives.asymmetric import rsa

        key = rsa.generate_private_key(public_exponent=65537, key_size=bits)
        nums = key.private_numbers()
        return SigningKeyPair(nums.public_numbers.n, nums.public_numbers.e, nums.d, bits)
    return _small_keypair(bits)


def _small_keypair(bits: int) -> SigningKeyPair:
    # test-only path: the cryptography library refuses keys under 1024 bits
    import gmpy2

    e = 65537
    while True:
        p = int(gmpy2.next_prime(secrets.randbits(bits // 2) | (3 << (bits // 2 - 2)) | 1))
        q = int(gmpy2.next_prime(secrets.randbits(bits // 2) | (3 << (bits // 2 - 2)) | 1))
        if p == q:
            continue
        n = p * q
        if n.bit_length() != bits:
            continue
        lam = (p - 1) * (q - 1) // math.gcd(p - 1, q - 1)
        if math.gcd(e, lam) != 1:
            continue
        return SigningKeyPair(n, e, pow(e, -1, lam), bits)


class ReportMessage(NamedTuple):
    """Credential body: random bytes ``a`` plus their digest, packed as one int."""

    a: bytes
    m: int


def random_part_len(modulus: int) -> int:
    """Byte length of the random part ``a`` for a given signer modulus."""
    bits = modulus.bit_length()
    if bits % 8 != 0 or bits <= _DIGEST_BITS:
        raise ValueError(f"unsupported modulus size {bits}")
    return (bits - _DIGEST_BITS) // 8


def gen_report_message(modulus: int, rng=None, a: Optional[bytes] = None) -> ReportMessage:
    """Draw ``a`` and build ``m = a || sha256(a)``, resampling until m < modulus.

    ``a`` may be pinned for tests; otherwise it comes from the OS entropy pool
    (or a numpy Generator when a seeded flow is wanted).
    """
    a_len = random_part_len(modulus)
    pinned = a is not None
    while True:
        if not pinned:
            a = rng.bytes(a_len) if rng is not None else secrets.token_bytes(a_len)
        if len(a) != a_len:
            raise ValueError(f"a must be {a_len} bytes, got {len(a)}")
        m = int.from_bytes(a + hashlib.sha256(a).digest(), "big")
        if m < modulus:
            return ReportMessage(a, m)
        if pinned:
            raise ValueError("pinned a produces m >= modulus")


def blind(m: int, public: tuple[int, int], r: Optional[int] = None) -> tuple[int, int]:
    """Blind m for signing; returns (blinded value, unblinding factor).

    The blinding factor r is uniform and invertible mod n, so the signer
    learns nothing about m. r may be pinned for the broken-blinding controls.
    """
    e, n = public
    if not 0 <= m < n:
        raise ValueError("message out of range")
    if r is None:
        while True:
            r = secrets.randbelow(n - 2) + 2
            if math.gcd(r, n) == 1:
                break
    elif math.gcd(r, n) != 1:
        raise ValueError("blinding factor not invertible")
    blinded = (m * pow(r, e, n)) % n
    return blinded, pow(r, -1, n)


def sign_blinded(blinded: int, keypair: SigningKeyPair) -> int:
    if not 0 <= blinded < keypair.modulus:
        raise ValueError("blinded value out of range")
    return pow(blinded, keypair.private_exponent, keypair.modulus)


def unblind(signed_blinded: int, unblinder: int, modulus: int) -> int:
    if not (0 <= signed_blinded < modulus and 0 <= unblinder < modulus):
        raise ValueError("inputs out of range")
    return (signed_blinded * unblinder) % modulus


class ReportCredential(NamedTuple):
    m: int
    sigma: int


def credential_to_bytes(cred: ReportCredential, modulus: int) -> bytes:
    size = modulus.bit_length() // 8
    return cred.m.to_bytes(size, "big") + cred.sigma.to_bytes(size, "big")


def credential_from_bytes(raw: bytes, modulus: int) -> ReportCredential:
    size = modulus.bit_length() // 8
    if len(raw) != 2 * size:
        raise ValueError(f"credential must be {2 * size} bytes, got {len(raw)}")
    return ReportCredential(
        int.from_bytes(raw[:size], "big"), int.from_bytes(raw[size:], "big")
    )


class ReplayLedger:
    """Accepted credential bodies; single writer, safe concurrent reads."""

    def __init__(self):
        self._seen: set[int] = set()
        self._lock = threading.Lock()

    def seen(self, m: int) -> bool:
        return m in self._seen

    def record(self, m: int) -> bool:
        """Record m; False means it was already there (a replay)."""
        with self._lock:
            if m in self._seen:
                return False
            self._seen.add(m)
            return True


class VerifyResult(NamedTuple):
    accepted: bool
    reason: Optional[str]  # None | bad_structure | bad_signature | replay


def verify_report(
    cred: ReportCredential,
    public: tuple[int, int],
    ledger: Optional[ReplayLedger] = None,
) -> VerifyResult:
    """Check structure (m = a || sha256(a)), signature, and replay, in that order."""
    e, n = public
    if not 0 <= cred.m < n:
        return VerifyResult(False, "bad_structure")
    a_len = random_part_len(n)
    a = (cred.m >> _DIGEST_BITS).to_bytes(a_len, "big")
    digest = (cred.m & ((1 << _DIGEST_BITS) - 1)).to_bytes(_DIGEST_BITS // 8, "big")
    if hashlib.sha256(a).digest() != digest:
        return VerifyResult(False, "bad_structure")
    if not 0 <= cred.sigma < n or pow(cred.sigma, e, n) != cred.m:
        return VerifyResult(False, "bad_signature")
    if ledger is not None and not ledger.record(cred.m):
        return VerifyResult(False, "replay")
    return VerifyResult(True, None)


# ---------------------------------------------------------------------------
# Sealed envelopes
# ---------------------------------------------------------------------------

class HybridEnvelope:
    """Sealed-box construction: ephemeral X25519 + HKDF-SHA256 + AES-256-GCM.

    Each seal draws a fresh ephemeral keypair, so two seals of the same
    payload never match, and GCM authentication makes tampering fail loudly.
    """

    name = "hybrid"
    insecure = False

    _INFO = b"celltrace report envelope v1"

    def keypair(self) -> tuple[bytes, bytes]:
        from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey

        priv = X25519PrivateKey.generate()
        return priv.public_key().public_bytes_raw(), priv.private_bytes_raw()

    def _derive(self, shared: bytes) -> bytes:
        from cryptography.hazmat.primitives import hashes
        from cryptography.hazmat.primitives.kdf.hkdf import HKDF

        return HKDF(
            algorithm=hashes.SHA256(), length=32, salt=None, info=self._INFO
        ).derive(shared)

    def seal(self, payload: bytes, public_key: bytes) -> bytes:
        from cryptography.hazmat.primitives.asymmetric.x25519 import (
            X25519PrivateKey,
            X25519PublicKey,
        )
        from cryptography.hazmat.primitives.ciphers.aead import AESGCM

        eph = X25519PrivateKey.generate()
        key = self._derive(eph.exchange(X25519PublicKey.from_public_bytes(public_key)))
        nonce = os.urandom(12)
        ct = AESGCM(key).encrypt(nonce, payload, None)
        return eph.public_key().public_bytes_raw() + nonce + ct

    def open(self, envelope: bytes, private_key: bytes) -> bytes:
        from cryptography.exceptions import InvalidTag
        from cryptography.hazmat.primitives.asymmetric.x25519 import (
            X25519PrivateKey,
            X25519PublicKey,
        )
        from cryptography.hazmat.primitives.ciphers.aead import AESGCM

        if len(envelope) < 32 + 12 + 16:
            raise EnvelopeError("envelope too short")
        try:
            shared = X25519PrivateKey.from_private_bytes(private_key).exchange(
                X25519PublicKey.from_public_bytes(envelope[:32])
            )
            key = self._derive(shared)
            return AESGCM(key).decrypt(envelope[32:44], envelope[44:], None)
        except (InvalidTag, ValueError) as exc:
            raise EnvelopeError("envelope failed to open") from exc


class TransparentEnvelope:
    """Plaintext test transport: payload in the clear plus an integrity tag.

    Flagged insecure; scenarios select it only to take public-key work out of
    the hot path. The digest still catches accidental corruption.
    """

    name = "transparent"
    insecure = True

    def keypair(self) -> tuple[bytes, bytes]:
        return b"transparent", b"transparent"

    def seal(self, payload: bytes, public_key: bytes) -> bytes:
        return b"T" + hashlib.sha256(payload).digest()[:16] + payload

    def open(self, envelope: bytes, private_key: bytes) -> bytes:
        if len(envelope) < 17 or envelope[:1] != b"T":
            raise EnvelopeError("not a transparent envelope")
        payload = envelope[17:]
        if hashlib.sha256(payload).digest()[:16] != envelope[1:17]:
            raise EnvelopeError("integrity tag mismatch")
        return payload


ENVELOPE_SCHEMES = {
    "hybrid": HybridEnvelope(),
    "transparent": TransparentEnvelope(),
}
