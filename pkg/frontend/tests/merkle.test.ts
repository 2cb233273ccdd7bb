import { describe, expect, it } from "vitest";
import { bytesToHex, hexToBytes } from "../src/bytes.js";
import { sha256 } from "../src/hashing.js";
import {
  chunkLeafDigest,
  datasetRootHex,
  rootFromLeafPayloads,
  verifyProof,
} from "../src/merkle.js";
import { loadVectors } from "./helpers.js";

describe("merkle verification", () => {
  it("rebuilds the gateway's root from chunk digests", async () => {
    const v = loadVectors().merkle;
    const digestPayloads = await Promise.all(
      v.chunks.map(async (hex) => sha256(hexToBytes(hex))),
    );
    expect(bytesToHex(await rootFromLeafPayloads(digestPayloads))).toBe(v.root);
  });

  it("accepts the gateway's inclusion proof", async () => {
    const v = loadVectors().merkle;
    const leaf = await chunkLeafDigest(hexToBytes(v.chunks[v.leaf_index]));
    expect(bytesToHex(leaf)).toBe(v.leaf_digest);
    expect(await verifyProof(v.root, leaf, v.proof)).toBe(true);
  });

  it("rejects the proof for a mutated chunk", async () => {
    const v = loadVectors().merkle;
    const bad = hexToBytes(v.chunks[v.leaf_index]);
    bad[0] ^= 0x01;
    expect(await verifyProof(v.root, await chunkLeafDigest(bad), v.proof)).toBe(false);
  });

  it("rejects proofs with an unknown side marker or truncated path", async () => {
    const v = loadVectors().merkle;
    const leaf = await chunkLeafDigest(hexToBytes(v.chunks[v.leaf_index]));
    const twisted = {
      ...v.proof,
      siblings: v.proof.siblings.map((s) => ({ ...s, side: "X" })),
    };
    expect(await verifyProof(v.root, leaf, twisted)).toBe(false);
    const truncated = { ...v.proof, siblings: v.proof.siblings.slice(1) };
    expect(await verifyProof(v.root, leaf, truncated)).toBe(false);
  });

  it("dataset root does not depend on doc insertion order", async () => {
    const docs = [
      { docId: "b", ownerChunkDigests: ["11".repeat(32)], shareChunkDigests: ["22".repeat(32)] },
      { docId: "a", ownerChunkDigests: ["33".repeat(32)], shareChunkDigests: ["44".repeat(32)] },
    ];
    const forward = await datasetRootHex(docs);
    const reversed = await datasetRootHex([...docs].reverse());
    expect(forward).toBe(reversed);
  });
});
