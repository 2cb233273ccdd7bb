// Searchable-index client side: trapdoor derivation and index
// construction. The stored index maps a one-way label derived from the
// trapdoor to an encrypted, pow2-padded posting list; the per-list key
// and nonce are derived from the trapdoor and the owner's k_enc, so the
// construction is fully deterministic and the gateway can resolve a
// search from the trapdoor alone without holding any long-term secret.

import { aesGcmSeal } from "./aead.js";
import { bytesToBase64, bytesToHex, concatBytes, utf8Encode } from "./bytes.js";
import { canonicalJson } from "./canonical.js";
import { hmacSha256, sha256 } from "./hashing.js";

export interface SseKey {
  kPrf: Uint8Array; // trapdoor PRF key
  kEnc: Uint8Array; // posting-list nonce derivation key
}

export function normalizeKeyword(keyword: string): string {
  return keyword.normalize("NFC").toLowerCase();
}

export async function trapdoorTag(key: SseKey, keyword: string): Promise<Uint8Array> {
  const norm = normalizeKeyword(keyword);
  if (!norm.trim()) throw new Error("keyword is empty after normalization");
  return hmacSha256(key.kPrf, utf8Encode(norm));
}

export async function trapdoorHex(key: SseKey, keyword: string): Promise<string> {
  return bytesToHex(await trapdoorTag(key, keyword));
}

const LABEL_PREFIX = utf8Encode("sse/label|");
const KEY_PREFIX = utf8Encode("sse/key|");
const NONCE_PREFIX = utf8Encode("sse/nonce|");

async function entryLabel(tag: Uint8Array): Promise<string> {
  return bytesToHex(await sha256(concatBytes(LABEL_PREFIX, tag)));
}

async function entryKey(tag: Uint8Array): Promise<Uint8Array> {
  return sha256(concatBytes(KEY_PREFIX, tag));
}

function nextPow2(n: number): number {
  if (n <= 1) return 1;
  return 2 ** Math.ceil(Math.log2(n));
}

export interface IndexWire {
  version: 1;
  entries: { tag: string; blob: string }[];
}

export async function buildIndexWire(
  key: SseKey,
  docs: [docId: string, keywords: Iterable<string>][],
): Promise<IndexWire> {
  const seen = new Set<string>();
  const postings = new Map<string, Set<string>>();
  for (const [docId, keywords] of docs) {
    if (seen.has(docId)) throw new Error(`doc id ${docId} appears twice`);
    seen.add(docId);
    for (const kw of keywords) {
      const norm = normalizeKeyword(kw);
      if (!norm.trim()) throw new Error(`empty keyword in doc ${docId}`);
      if (!postings.has(norm)) postings.set(norm, new Set());
      postings.get(norm)!.add(docId);
    }
  }

  const entries: { tag: string; blob: string }[] = [];
  for (const [norm, ids] of postings) {
    const tag = await trapdoorTag(key, norm);
    const padded: (string | null)[] = [...ids].sort();
    while (padded.length < nextPow2(ids.size)) padded.push(null);
    const plain = canonicalJson(padded);
    const nonce = (await hmacSha256(key.kEnc, concatBytes(NONCE_PREFIX, tag, plain))).slice(0, 12);
    const blob = await aesGcmSeal(await entryKey(tag), plain, nonce);
    entries.push({ tag: await entryLabel(tag), blob: bytesToBase64(blob) });
  }
  entries.sort((a, b) => (a.tag < b.tag ? -1 : a.tag > b.tag ? 1 : 0));
  return { version: 1, entries };
}
