// Merkle verification and dataset-root construction. Trees hash
// chunk-digest payloads: leaf = H(H(chunk)), parents = H(left || right),
// odd nodes pair with themselves, a single node is the root unpaired.

import { bytesEqual, concatBytes, hexToBytes } from "./bytes.js";
import { sha256 } from "./hashing.js";

export interface ProofWire {
  leaf_index: number;
  siblings: { digest: string; side: string }[];
}

async function parent(left: Uint8Array, right: Uint8Array): Promise<Uint8Array> {
  return sha256(concatBytes(left, right));
}

export async function rootFromLeafPayloads(payloads: Uint8Array[]): Promise<Uint8Array> {
  if (payloads.length === 0) throw new Error("merkle tree needs at least one leaf");
  let level = await Promise.all(payloads.map((p) => sha256(p)));
  while (level.length > 1) {
    const next: Uint8Array[] = [];
    for (let i = 0; i < level.length; i += 2) {
      next.push(await parent(level[i], level[i + 1] ?? level[i]));
    }
    level = next;
  }
  return level[0];
}

export async function chunkLeafDigest(chunk: Uint8Array): Promise<Uint8Array> {
  return sha256(await sha256(chunk));
}

export async function verifyProof(
  rootHex: string,
  leafDigest: Uint8Array,
  proof: ProofWire,
): Promise<boolean> {
  try {
    let acc = leafDigest;
    for (const { digest, side } of proof.siblings) {
      const sib = hexToBytes(digest);
      if (sib.length !== 32) return false;
      if (side === "L") acc = await parent(sib, acc);
      else if (side === "R") acc = await parent(acc, sib);
      else return false;
    }
    return bytesEqual(acc, hexToBytes(rootHex));
  } catch {
    return false;
  }
}

// Root over every payload chunk digest of a private dataset, in canonical
// order: docs ascending by doc id, owner-copy chunks before share-copy
// chunks. Digests arrive hex-encoded; each digest is one leaf payload.
export async function datasetRootHex(
  docs: { docId: string; ownerChunkDigests: string[]; shareChunkDigests: string[] }[],
): Promise<string> {
  const leaves: Uint8Array[] = [];
  const ordered = [...docs].sort((a, b) => (a.docId < b.docId ? -1 : a.docId > b.docId ? 1 : 0));
  for (const doc of ordered) {
    for (const h of doc.ownerChunkDigests) leaves.push(hexToBytes(h));
    for (const h of doc.shareChunkDigests) leaves.push(hexToBytes(h));
  }
  const root = await rootFromLeafPayloads(leaves);
  return Array.from(root, (b) => b.toString(16).padStart(2, "0")).join("");
}
