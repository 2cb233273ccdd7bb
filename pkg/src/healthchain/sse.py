"""Single-keyword searchable symmetric encryption.

Static inverted-index construction with deterministic keyed trapdoors:
the trapdoor for a keyword is HMAC-SHA256(k_prf, keyword) after NFC
normalization and lowercasing. The stored index maps a one-way label
derived from the trapdoor to the encrypted, padded posting list; the
per-list encryption key is also derived from the trapdoor, so the
holder of the index alone can read nothing, while a single trapdoor
unlocks exactly one posting list and search needs no long-term secret.

Posting lists are padded to the next power of two of their length
before encryption. Access-pattern and result-size leakage are inherent
to this scheme class and accepted. Updates are rebuild-on-change; the
gateway versions indexes per owner.
"""

from __future__ import annotations

import base64
import hashlib
import json
import unicodedata
from dataclasses import dataclass

from .crypto import (
    Digest,
    RandomSource,
    SymKey,
    hmac_sha256,
    sym_decrypt,
    sym_encrypt,
    system_rng,
)
from .encoding import canonical_json
from .errors import AuthenticationFailure, DuplicateDocId, EmptyKeyword

_LABEL_PREFIX = b"sse/label|"
_KEY_PREFIX = b"sse/key|"
_NONCE_PREFIX = b"sse/nonce|"


@dataclass(frozen=True)
class SseKey:
    """Owner-held key material: k_prf derives trapdoors, k_enc keys the
    deterministic nonce derivation for posting-list encryption."""

    k_prf: bytes
    k_enc: bytes

    def __post_init__(self):
        if len(self.k_prf) != 32 or len(self.k_enc) != 32:
            raise ValueError("SSE key components must be 32 bytes")


def keygen(rng: RandomSource = system_rng) -> SseKey:
    return SseKey(k_prf=rng(32), k_enc=rng(32))


@dataclass(frozen=True)
class Trapdoor:
    """Deterministic per (key, keyword); reveals nothing without k_prf."""

    tag: Digest

    @property
    def hex(self) -> str:
        return self.tag.hex

    @classmethod
    def from_hex(cls, h: str) -> "Trapdoor":
        return cls(tag=Digest.from_hex(h))


def normalize_keyword(keyword: str) -> str:
    """NFC + lowercase; no stemming."""
    return unicodedata.normalize("NFC", keyword).lower()


def trapdoor(key: SseKey, keyword: str) -> Trapdoor:
    norm = normalize_keyword(keyword)
    if not norm.strip():
        raise EmptyKeyword("keyword is empty after normalization")
    return Trapdoor(tag=Digest(hmac_sha256(key.k_prf, norm.encode("utf-8"))))


def _entry_label(tag: Digest) -> str:
    return hashlib.sha256(_LABEL_PREFIX + tag.data).hexdigest()


def _entry_key(tag: Digest) -> SymKey:
    return SymKey(hashlib.sha256(_KEY_PREFIX + tag.data).digest())


def _next_pow2(n: int) -> int:
    return 1 if n <= 1 else 1 << (n - 1).bit_length()


class EncryptedIndex:
    """Map from stored tag (hex) to encrypted posting blob; iteration
    order is sorted by tag so serialization is canonical."""

    def __init__(self, entries: dict[str, bytes]):
        self.entries = dict(sorted(entries.items()))

    def to_wire(self) -> dict:
        return {
            "version": 1,
            "entries": [
                {"tag": tag, "blob": base64.b64encode(blob).decode("ascii")}
                for tag, blob in sorted(self.entries.items())
            ],
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "EncryptedIndex":
        if obj.get("version") != 1:
            raise ValueError(f"unsupported index version {obj.get('version')!r}")
        return cls(
            {e["tag"]: base64.b64decode(e["blob"]) for e in obj["entries"]}
        )

    def serialize(self) -> bytes:
        return canonical_json(self.to_wire())


def build_index(key: SseKey, docs: list[tuple[str, set[str]]]) -> EncryptedIndex:
    """Index (doc_id, keyword set) pairs; every keyword is normalized
    before insertion. Doc ids must be unique."""
    seen: set[str] = set()
    postings: dict[str, set[str]] = {}
    for doc_id, keywords in docs:
        if doc_id in seen:
            raise DuplicateDocId(f"doc id {doc_id!r} appears twice")
        seen.add(doc_id)
        for kw in keywords:
            norm = normalize_keyword(kw)
            if not norm.strip():
                raise EmptyKeyword(f"empty keyword in doc {doc_id!r}")
            postings.setdefault(norm, set()).add(doc_id)

    entries: dict[str, bytes] = {}
    for norm, ids in postings.items():
        tag = trapdoor(key, norm).tag
        padded: list = sorted(ids)
        padded += [None] * (_next_pow2(len(padded)) - len(padded))
        plain = canonical_json(padded)
        nonce = hmac_sha256(key.k_enc, _NONCE_PREFIX + tag.data + plain)[:12]
        entries[_entry_label(tag)] = sym_encrypt(_entry_key(tag), plain, nonce)
    return EncryptedIndex(entries)


def search(index: EncryptedIndex, td: Trapdoor) -> set[str]:
    """Posting set for the trapdoor's keyword; empty set when the keyword
    was not indexed. Requires no key material beyond the trapdoor."""
    blob = index.entries.get(_entry_label(td.tag))
    if blob is None:
        return set()
    try:
        padded = json.loads(sym_decrypt(_entry_key(td.tag), blob))
    except (AuthenticationFailure, ValueError):
        return set()
    return {doc_id for doc_id in padded if doc_id is not None}
