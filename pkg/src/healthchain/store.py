"""Off-chain digest-addressed store: encrypted chunk blobs under a
two-level hex fan-out, chunk-digest objects, and per-entity dataset
manifests whose Merkle root is anchored on-chain.

The store holds only ciphertext; tamper detection is the verifier's
job via Merkle proofs, so reads return bytes as stored.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import merkle
from .crypto import Digest, hash_data
from .errors import IndexOutOfRange, UnknownObject


class BlobStore:
    """Content-addressed blob files: blobs/<d0d1>/<d2d3>/<digest>."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, digest_hex: str) -> Path:
        return self.root / digest_hex[:2] / digest_hex[2:4] / digest_hex

    def put(self, data: bytes) -> str:
        """Idempotent by content address; returns the digest hex."""
        digest_hex = hash_data(data).hex
        path = self._path(digest_hex)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
            try:
                with os.fdopen(fd, "wb") as f:
                    f.write(data)
                os.replace(tmp, path)
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)
        return digest_hex

    def get(self, digest_hex: str) -> bytes:
        path = self._path(digest_hex)
        if not path.exists():
            raise UnknownObject(f"no blob {digest_hex}")
        return path.read_bytes()

    def exists(self, digest_hex: str) -> bool:
        return self._path(digest_hex).exists()


@dataclass(frozen=True)
class OffchainObject:
    """An ordered list of encrypted chunks addressed by content.

    object_id = hash of the concatenated chunk digests; merkle_root is
    the root over the chunk digests (each digest is one leaf payload).
    """

    object_id: str
    chunk_digests: tuple[str, ...]
    merkle_root: str
    created_at: str

    @classmethod
    def from_chunks(cls, chunks: list[bytes], created_at: str) -> "OffchainObject":
        digests = [hash_data(c) for c in chunks]
        return cls(
            object_id=hash_data(b"".join(d.data for d in digests)).hex,
            chunk_digests=tuple(d.hex for d in digests),
            merkle_root=merkle.build([d.data for d in digests]).root.hex,
            created_at=created_at,
        )

    def to_doc(self) -> dict:
        return {
            "object_id": self.object_id,
            "chunk_digests": list(self.chunk_digests),
            "merkle_root": self.merkle_root,
            "created_at": self.created_at,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "OffchainObject":
        return cls(
            object_id=doc["object_id"],
            chunk_digests=tuple(doc["chunk_digests"]),
            merkle_root=doc["merkle_root"],
            created_at=doc["created_at"],
        )


@dataclass
class DatasetDoc:
    """One private document: an owner-encrypted copy, a share copy whose
    symmetric key is wrapped to the owner's re-encryptable public key,
    and the wrap itself."""

    doc_id: str
    owner_object: OffchainObject
    share_object: OffchainObject
    key_wrap: dict  # PreCiphertext wire form

    def to_doc(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "owner_object": self.owner_object.to_doc(),
            "share_object": self.share_object.to_doc(),
            "key_wrap": self.key_wrap,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "DatasetDoc":
        return cls(
            doc_id=doc["doc_id"],
            owner_object=OffchainObject.from_doc(doc["owner_object"]),
            share_object=OffchainObject.from_doc(doc["share_object"]),
            key_wrap=doc["key_wrap"],
        )


@dataclass
class DatasetManifest:
    """Per-entity private dataset: doc objects, the encrypted-index blob,
    and the anchored Merkle root over every payload chunk digest.

    Leaf order is canonical: docs ascending by doc_id, owner-copy chunks
    before share-copy chunks. The encrypted index blob is referenced but
    not a Merkle leaf; the anchor covers payload chunks only.
    """

    entity_id: str
    owner_pub: str
    owner_phone: str
    params_id: str
    index_version: int
    merkle_root: str
    anchor_tx_id: str
    index_blob: str  # digest hex of the serialized encrypted index
    docs: list[DatasetDoc] = field(default_factory=list)

    def ordered_docs(self) -> list[DatasetDoc]:
        return sorted(self.docs, key=lambda d: d.doc_id)

    def leaf_digests(self) -> list[str]:
        leaves = []
        for doc in self.ordered_docs():
            leaves.extend(doc.owner_object.chunk_digests)
            leaves.extend(doc.share_object.chunk_digests)
        return leaves

    def leaf_offset(self, object_id: str) -> int:
        """First leaf index of the given object's chunks."""
        offset = 0
        for doc in self.ordered_docs():
            for obj in (doc.owner_object, doc.share_object):
                if obj.object_id == object_id:
                    return offset
                offset += len(obj.chunk_digests)
        raise UnknownObject(f"object {object_id} is not in this dataset")

    def find_object(self, object_id: str) -> tuple[DatasetDoc, OffchainObject, str]:
        for doc in self.docs:
            if doc.owner_object.object_id == object_id:
                return doc, doc.owner_object, "owner"
            if doc.share_object.object_id == object_id:
                return doc, doc.share_object, "share"
        raise UnknownObject(f"object {object_id} is not in this dataset")

    def build_tree(self) -> merkle.MerkleTree:
        return merkle.build([bytes.fromhex(d) for d in self.leaf_digests()])

    def prove_chunk(self, object_id: str, chunk_index: int) -> merkle.MerkleProof:
        _, obj, _ = self.find_object(object_id)
        if not 0 <= chunk_index < len(obj.chunk_digests):
            raise IndexOutOfRange(
                f"chunk {chunk_index} out of range for object with {len(obj.chunk_digests)} chunks"
            )
        return merkle.prove(self.build_tree(), self.leaf_offset(object_id) + chunk_index)

    def to_doc(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "owner_pub": self.owner_pub,
            "owner_phone": self.owner_phone,
            "params_id": self.params_id,
            "index_version": self.index_version,
            "merkle_root": self.merkle_root,
            "anchor_tx_id": self.anchor_tx_id,
            "index_blob": self.index_blob,
            "docs": [d.to_doc() for d in self.docs],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "DatasetManifest":
        return cls(
            entity_id=doc["entity_id"],
            owner_pub=doc["owner_pub"],
            owner_phone=doc["owner_phone"],
            params_id=doc["params_id"],
            index_version=int(doc["index_version"]),
            merkle_root=doc["merkle_root"],
            anchor_tx_id=doc["anchor_tx_id"],
            index_blob=doc["index_blob"],
            docs=[DatasetDoc.from_doc(d) for d in doc.get("docs", [])],
        )


def dataset_root(docs: list[DatasetDoc]) -> Digest:
    """Merkle root over all payload chunk digests in canonical order."""
    leaves: list[bytes] = []
    for doc in sorted(docs, key=lambda d: d.doc_id):
        for obj in (doc.owner_object, doc.share_object):
            leaves.extend(bytes.fromhex(h) for h in obj.chunk_digests)
    return merkle.build(leaves).root


def chunk_leaf_digest(chunk: bytes) -> Digest:
    """Leaf digest a verifier recomputes from a fetched chunk: the tree
    hashes chunk-digest payloads, so the leaf is hash(hash(chunk))."""
    return hash_data(hash_data(chunk).data)


def atomic_write_json(path, doc) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=1, sort_keys=True)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def read_json(path) -> Optional[dict]:
    path = Path(path)
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))
