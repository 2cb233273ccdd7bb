"""Hashing, signatures, and authenticated symmetric encryption.

Algorithms are fixed: SHA-256 for digests, Ed25519 for signatures,
AES-256-GCM for symmetric encryption. Key material is held in small
dataclasses; key files at rest use the versioned JSON envelope
``{version, scheme, key_id, secret, public}`` (see README appendix).
"""

from __future__ import annotations

import base64
import hashlib
import json
import secrets
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .encoding import canonical_json
from .errors import AuthenticationFailure

DIGEST_SIZE = 32
SYM_KEY_SIZE = 32
NONCE_SIZE = 12

# n random bytes; defaults to the OS CSPRNG, tests may inject
# random.Random(seed).randbytes for determinism.
RandomSource = Callable[[int], bytes]


def system_rng(n: int) -> bytes:
    return secrets.token_bytes(n)


@dataclass(frozen=True)
class Digest:
    """A 32-byte SHA-256 value."""

    data: bytes

    def __post_init__(self):
        if len(self.data) != DIGEST_SIZE:
            raise ValueError(f"digest must be {DIGEST_SIZE} bytes, got {len(self.data)}")

    @property
    def hex(self) -> str:
        return self.data.hex()

    @classmethod
    def from_hex(cls, h: str) -> "Digest":
        return cls(bytes.fromhex(h))

    def __bytes__(self) -> bytes:
        return self.data


def hash_data(data: bytes) -> Digest:
    """SHA-256 of an arbitrary byte string (empty input allowed)."""
    return Digest(hashlib.sha256(data).digest())


@dataclass(frozen=True)
class Signature:
    data: bytes

    @property
    def hex(self) -> str:
        return self.data.hex()

    @classmethod
    def from_hex(cls, h: str) -> "Signature":
        return cls(bytes.fromhex(h))


@dataclass(frozen=True)
class SignKeyPair:
    """Ed25519 signing pair; key_id is the digest of the public key."""

    secret: bytes  # 32-byte private seed
    public: bytes  # 32-byte public key

    @property
    def key_id(self) -> Digest:
        return hash_data(self.public)


def keygen_sign(rng: RandomSource = system_rng) -> SignKeyPair:
    seed = rng(32)
    priv = Ed25519PrivateKey.from_private_bytes(seed)
    pub = priv.public_key().public_bytes_raw()
    return SignKeyPair(secret=seed, public=pub)


def sign(secret: bytes, message: bytes) -> Signature:
    priv = Ed25519PrivateKey.from_private_bytes(secret)
    return Signature(priv.sign(message))


def verify(public: bytes, message: bytes, signature: Union[Signature, bytes]) -> bool:
    """True iff ``signature`` was produced by the secret matching ``public``
    over exactly ``message``. Malformed inputs yield False, never raise."""
    sig = signature.data if isinstance(signature, Signature) else signature
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(sig, message)
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


@dataclass(frozen=True)
class SymKey:
    """32-byte AES-256-GCM key. Never serialized into on-chain or
    gateway-visible structures."""

    data: bytes

    def __post_init__(self):
        if len(self.data) != SYM_KEY_SIZE:
            raise ValueError(f"symmetric key must be {SYM_KEY_SIZE} bytes")


def keygen_sym(rng: RandomSource = system_rng) -> SymKey:
    return SymKey(rng(SYM_KEY_SIZE))


def sym_encrypt(key: SymKey, plaintext: bytes, nonce: bytes) -> bytes:
    """AES-256-GCM; nonce must be unique per (key, message). The nonce is
    prepended so the ciphertext is self-contained."""
    if len(nonce) != NONCE_SIZE:
        raise ValueError(f"nonce must be {NONCE_SIZE} bytes")
    ct = AESGCM(key.data).encrypt(nonce, plaintext, None)
    return nonce + ct


def sym_decrypt(key: SymKey, blob: bytes) -> bytes:
    """Inverse of sym_encrypt. Raises AuthenticationFailure on tamper or
    wrong key."""
    if len(blob) < NONCE_SIZE + 16:
        raise AuthenticationFailure("ciphertext too short")
    nonce, ct = blob[:NONCE_SIZE], blob[NONCE_SIZE:]
    try:
        return AESGCM(key.data).decrypt(nonce, ct, None)
    except InvalidTag as e:
        raise AuthenticationFailure("ciphertext failed authentication") from e


def hmac_sha256(key: bytes, message: bytes) -> bytes:
    import hmac as _hmac

    return _hmac.new(key, message, hashlib.sha256).digest()


# -- key files at rest -------------------------------------------------------

def key_envelope(scheme: str, key_id: str, secret: bytes, public: bytes, **extra: str) -> dict:
    env = {
        "version": 1,
        "scheme": scheme,
        "key_id": key_id,
        "secret": base64.b64encode(secret).decode("ascii"),
        "public": base64.b64encode(public).decode("ascii"),
    }
    env.update(extra)
    return env


def open_envelope(env: dict) -> tuple[str, bytes, bytes]:
    """Returns (scheme, secret, public) from a version-1 envelope."""
    if env.get("version") != 1:
        raise ValueError(f"unsupported key envelope version {env.get('version')!r}")
    return (
        env["scheme"],
        base64.b64decode(env["secret"]),
        base64.b64decode(env["public"]),
    )


def save_sign_keypair(path: Union[str, Path], pair: SignKeyPair) -> None:
    env = key_envelope("ed25519", pair.key_id.hex, pair.secret, pair.public)
    Path(path).write_bytes(canonical_json(env))


def load_sign_keypair(path: Union[str, Path]) -> SignKeyPair:
    env = json.loads(Path(path).read_bytes())
    scheme, secret, public = open_envelope(env)
    if scheme != "ed25519":
        raise ValueError(f"expected ed25519 envelope, got {scheme!r}")
    return SignKeyPair(secret=secret, public=public)
