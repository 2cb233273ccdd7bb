"""Health-record smart contract: add, update, latest-query, history
query, and private-dataset digest anchoring.

Ops are addressed by name with positional string args (the invocation
convention of chaincode) and run under the ledger's simulation
snapshot; they are deterministic functions of (snapshot, args), so the
record's own updated_at travels inside the record JSON rather than
being read from a clock.

Public records live under "rec/<entity_id>"; private-dataset anchors
(Merkle root + monotone index version) under "anchor/<entity_id>".
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from typing import Optional

from .encoding import canonical_json
from .errors import (
    BadArity,
    DuplicateEntity,
    MalformedRecord,
    NotFound,
    StaleVersion,
    UnknownEntity,
)
from .ledger import ContractResponse, SimulationContext

REC_PREFIX = "rec/"
ANCHOR_PREFIX = "anchor/"

HEALTH_CODES = ("green", "yellow", "red")
NUCLEIC_RESULTS = ("negative", "positive", "pending")

ARITY_MSG = "The number of given parameters does not meet the requirements"
DESERIALIZE_MSG = "An error occurred during information deserialization"
DUPLICATE_MSG = "The ID number to be added already exists"
UNKNOWN_MSG = "An error occurred while querying information according to the ID number"
NOT_FOUND_MSG = (
    "No relevant information was found according to the specified certificate number and name"
)


@dataclass(frozen=True)
class HealthRecord:
    """On-chain public health record, keyed by national ID."""

    entity_id: str
    name: str
    birth_day: str  # ISO-8601 date
    cert_no: str
    phone: str
    health_code: str  # green | yellow | red
    nucleic_acid_result: str  # negative | positive | pending
    owner_pub: str  # hex reference to the owner's verification key
    updated_at: str  # ISO-8601 UTC
    doc_type: str = "health"

    def validate(self) -> "HealthRecord":
        for field_name in ("entity_id", "name", "birth_day", "cert_no", "phone", "updated_at"):
            if not getattr(self, field_name):
                raise MalformedRecord(f"{field_name} must be non-empty")
        if self.doc_type != "health":
            raise MalformedRecord(f"doc_type must be 'health', got {self.doc_type!r}")
        if self.health_code not in HEALTH_CODES:
            raise MalformedRecord(f"health_code must be one of {HEALTH_CODES}")
        if self.nucleic_acid_result not in NUCLEIC_RESULTS:
            raise MalformedRecord(f"nucleic_acid_result must be one of {NUCLEIC_RESULTS}")
        try:
            bytes.fromhex(self.owner_pub)
        except ValueError:
            raise MalformedRecord("owner_pub must be hex") from None
        if not self.owner_pub:
            raise MalformedRecord("owner_pub must be non-empty")
        return self

    def to_doc(self) -> dict:
        return asdict(self)

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_doc())

    @classmethod
    def from_doc(cls, doc: dict) -> "HealthRecord":
        if not isinstance(doc, dict):
            raise MalformedRecord(DESERIALIZE_MSG)
        known = {f: doc[f] for f in cls.__dataclass_fields__ if f in doc}
        extra = set(doc) - set(cls.__dataclass_fields__)
        if extra:
            raise MalformedRecord(f"unknown record fields {sorted(extra)}")
        try:
            rec = cls(**known)
        except TypeError:
            raise MalformedRecord(DESERIALIZE_MSG) from None
        if not all(isinstance(getattr(rec, f), str) for f in cls.__dataclass_fields__):
            raise MalformedRecord(DESERIALIZE_MSG)
        return rec.validate()

    @classmethod
    def from_json(cls, raw: str) -> "HealthRecord":
        try:
            doc = json.loads(raw)
        except (json.JSONDecodeError, TypeError):
            raise MalformedRecord(DESERIALIZE_MSG) from None
        return cls.from_doc(doc)


@dataclass(frozen=True)
class PrivateAnchor:
    """On-chain digest of an entity's off-chain encrypted dataset.

    updated_at is not stored in the contract value (ops must be
    deterministic in their args); readers take it from the committing
    transaction's timestamp.
    """

    entity_id: str
    merkle_root: str  # hex digest
    index_version: int
    doc_type: str = "anchor"

    def to_bytes(self) -> bytes:
        return canonical_json(asdict(self))

    @classmethod
    def from_bytes(cls, raw: bytes) -> "PrivateAnchor":
        doc = json.loads(raw)
        return cls(
            entity_id=doc["entity_id"],
            merkle_root=doc["merkle_root"],
            index_version=int(doc["index_version"]),
            doc_type=doc.get("doc_type", "anchor"),
        )


def _require_arity(args: list[str], n: int) -> None:
    if len(args) != n:
        raise BadArity(ARITY_MSG)


def record_key(entity_id: str) -> str:
    return REC_PREFIX + entity_id


def anchor_key(entity_id: str) -> str:
    return ANCHOR_PREFIX + entity_id


def add_record(ctx: SimulationContext, args: list[str]) -> ContractResponse:
    """args: [record_json, event_label]. Stores a fresh record under its
    entity_id; the id must not already exist."""
    _require_arity(args, 2)
    record = HealthRecord.from_json(args[0])
    if ctx.get(record_key(record.entity_id)) is not None:
        raise DuplicateEntity(DUPLICATE_MSG)
    ctx.put(record_key(record.entity_id), record.to_bytes())
    return ContractResponse(payload=record.to_bytes(), event=args[1])


def update_record(ctx: SimulationContext, args: list[str]) -> ContractResponse:
    """args: [record_json, event_label]. Replaces the mutable fields of
    an existing record; entity_id selects the record and cannot change."""
    _require_arity(args, 2)
    incoming = HealthRecord.from_json(args[0])
    stored_raw = ctx.get(record_key(incoming.entity_id))
    if stored_raw is None:
        raise UnknownEntity(UNKNOWN_MSG)
    stored = HealthRecord.from_doc(json.loads(stored_raw))
    updated = replace(
        stored,
        name=incoming.name,
        birth_day=incoming.birth_day,
        cert_no=incoming.cert_no,
        phone=incoming.phone,
        health_code=incoming.health_code,
        nucleic_acid_result=incoming.nucleic_acid_result,
        owner_pub=incoming.owner_pub,
        updated_at=incoming.updated_at,
    )
    ctx.put(record_key(updated.entity_id), updated.to_bytes())
    return ContractResponse(payload=updated.to_bytes(), event=args[1])


def query_latest(ctx: SimulationContext, args: list[str]) -> ContractResponse:
    """args: [cert_no, name]. Conjunctive selector over current records;
    deterministic scan in entity_id order, first match wins."""
    _require_arity(args, 2)
    cert_no, name = args
    for _, raw in ctx.scan(REC_PREFIX):
        doc = json.loads(raw)
        if doc.get("doc_type") == "health" and doc.get("cert_no") == cert_no and doc.get("name") == name:
            return ContractResponse(payload=canonical_json(doc))
    raise NotFound(NOT_FOUND_MSG)


def query_history(ctx: SimulationContext, args: list[str]) -> ContractResponse:
    """args: [entity_id]. All committed versions ascending by
    (block, tx index); unknown ids yield an empty list."""
    _require_arity(args, 1)
    (entity_id,) = args
    entries = []
    for h in ctx.get_history(record_key(entity_id)):
        entries.append(
            {
                "tx_id": h.tx_id,
                "record": json.loads(h.value) if h.value else None,
                "block": h.block,
                "tx_index": h.tx_index,
                "timestamp": h.timestamp,
            }
        )
    return ContractResponse(payload=canonical_json(entries))


def anchor_private(ctx: SimulationContext, args: list[str]) -> ContractResponse:
    """args: [entity_id, merkle_root_hex, index_version]. Upserts the
    entity's dataset anchor; versions must strictly increase."""
    _require_arity(args, 3)
    entity_id, root_hex, version_str = args
    if not entity_id:
        raise MalformedRecord("entity_id must be non-empty")
    try:
        root = bytes.fromhex(root_hex)
    except ValueError:
        raise MalformedRecord("merkle_root must be hex") from None
    if len(root) != 32:
        raise MalformedRecord("merkle_root must be a 32-byte digest")
    try:
        version = int(version_str)
    except ValueError:
        raise MalformedRecord("index_version must be an integer") from None
    if version < 1:
        raise StaleVersion("index_version must be >= 1")
    current = read_anchor(ctx, entity_id)
    if current is not None and version <= current.index_version:
        raise StaleVersion(
            f"index_version {version} does not advance past {current.index_version}"
        )
    anchor = PrivateAnchor(entity_id=entity_id, merkle_root=root_hex, index_version=version)
    ctx.put(anchor_key(entity_id), anchor.to_bytes())
    return ContractResponse(payload=anchor.to_bytes())


def read_anchor(ctx, entity_id: str) -> Optional[PrivateAnchor]:
    raw = ctx.get(anchor_key(entity_id))
    return PrivateAnchor.from_bytes(raw) if raw is not None else None


CONTRACT_REGISTRY = {
    "add_record": add_record,
    "update_record": update_record,
    "query_latest": query_latest,
    "query_history": query_history,
    "anchor_private": anchor_private,
}
