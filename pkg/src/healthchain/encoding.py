"""Canonical byte encodings.

Two encodings are used throughout:

* length-prefixed binary (``enc_bytes``/``enc_str``/...) for ledger
  structures whose hashes must be stable across implementations:
  fields are concatenated in declaration order, each byte string
  prefixed with its u32 big-endian length;
* canonical JSON (sorted keys, compact separators, UTF-8) for documents
  that are signed or exchanged with clients (grants, key envelopes,
  index wire form).
"""

from __future__ import annotations

import json
import struct
from typing import Any


def enc_bytes(b: bytes) -> bytes:
    return struct.pack(">I", len(b)) + b


def enc_str(s: str) -> bytes:
    return enc_bytes(s.encode("utf-8"))


def enc_u32(n: int) -> bytes:
    return struct.pack(">I", n)


def enc_u64(n: int) -> bytes:
    return struct.pack(">Q", n)


def canonical_json(obj: Any) -> bytes:
    """Deterministic JSON rendering: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def int_to_bytes(n: int, width: int) -> bytes:
    return n.to_bytes(width, "big")


def int_from_bytes(b: bytes) -> int:
    return int.from_bytes(b, "big")
