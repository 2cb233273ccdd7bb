"""Merkle trees over byte-string leaves, with inclusion proofs.

Leaves are hashed payloads (never raw payloads); an odd node at any
level is paired with a copy of itself (Bitcoin convention). A one-node
level is the root and is never self-paired, so the root of a single
leaf L is simply hash(L).

Known limitation: no domain separation between leaf and interior
hashing in this version.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .crypto import Digest, hash_data
from .errors import EmptyInput, IndexOutOfRange

SIDE_LEFT = "L"
SIDE_RIGHT = "R"


@dataclass(frozen=True)
class MerkleProof:
    """Sibling path from a leaf to the root.

    ``siblings`` lists (digest, side) pairs bottom-up; ``side`` says on
    which side the sibling sits when recomputing the parent.
    """

    leaf_index: int
    siblings: tuple[tuple[Digest, str], ...]

    def to_wire(self) -> dict:
        return {
            "leaf_index": self.leaf_index,
            "siblings": [{"digest": d.hex, "side": s} for d, s in self.siblings],
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "MerkleProof":
        return cls(
            leaf_index=int(obj["leaf_index"]),
            siblings=tuple(
                (Digest.from_hex(s["digest"]), s["side"]) for s in obj["siblings"]
            ),
        )


class MerkleTree:
    """Immutable after construction; levels[0] holds the leaf digests and
    the top level holds exactly the root."""

    def __init__(self, levels: Sequence[Sequence[Digest]]):
        self.levels = [list(level) for level in levels]

    @property
    def leaves(self) -> list[Digest]:
        return self.levels[0]

    @property
    def root(self) -> Digest:
        return self.levels[-1][0]

    @property
    def height(self) -> int:
        return len(self.levels)


def _parent(left: Digest, right: Digest) -> Digest:
    return hash_data(left.data + right.data)


def build(leaf_payloads: Iterable[bytes]) -> MerkleTree:
    """Build a tree over the SHA-256 digests of the given payloads."""
    leaves = [hash_data(p) for p in leaf_payloads]
    if not leaves:
        raise EmptyInput("merkle tree needs at least one leaf")
    return build_from_digests(leaves)


def build_from_digests(leaves: Sequence[Digest]) -> MerkleTree:
    if not leaves:
        raise EmptyInput("merkle tree needs at least one leaf")
    levels = [list(leaves)]
    while len(levels[-1]) > 1:
        cur = levels[-1]
        nxt = []
        for i in range(0, len(cur), 2):
            left = cur[i]
            right = cur[i + 1] if i + 1 < len(cur) else cur[i]
            nxt.append(_parent(left, right))
        levels.append(nxt)
    return MerkleTree(levels)


def prove(tree: MerkleTree, leaf_index: int) -> MerkleProof:
    n = len(tree.leaves)
    if not 0 <= leaf_index < n:
        raise IndexOutOfRange(f"leaf index {leaf_index} out of range for {n} leaves")
    siblings = []
    idx = leaf_index
    for level in tree.levels[:-1]:
        if idx % 2 == 0:
            sib = level[idx + 1] if idx + 1 < len(level) else level[idx]
            siblings.append((sib, SIDE_RIGHT))
        else:
            siblings.append((level[idx - 1], SIDE_LEFT))
        idx //= 2
    return MerkleProof(leaf_index=leaf_index, siblings=tuple(siblings))


def verify(root: Digest, leaf_digest: Digest, proof: MerkleProof) -> bool:
    """Fold the leaf digest through the proof siblings; True iff the
    replayed value equals ``root``. Malformed proofs return False."""
    try:
        acc = leaf_digest
        for sib, side in proof.siblings:
            if side == SIDE_LEFT:
                acc = _parent(sib, acc)
            elif side == SIDE_RIGHT:
                acc = _parent(acc, sib)
            else:
                return False
        return acc.data == root.data
    except (ValueError, TypeError, AttributeError):
        return False
