// Shared test utilities: vector loading, webcrypto under jsdom, and a
// deterministic byte source for reproducible key material.

import { createHash } from "node:crypto";
import { webcrypto } from "node:crypto";
import { readFileSync } from "node:fs";
import { inject } from "vitest";
import type { RandomSource } from "../src/hashing.js";

// jsdom's window.crypto lacks subtle; point the global at Node's.
export function ensureWebCrypto(): void {
  const c = globalThis.crypto as Crypto | undefined;
  if (!c || !c.subtle) {
    Object.defineProperty(globalThis, "crypto", { value: webcrypto, configurable: true });
  }
}

export interface Vectors {
  canonical: { value: unknown; encoded: string };
  aead: { key: string; nonce: string; plaintext: string; blob: string };
  sse: {
    k_prf: string;
    k_enc: string;
    keyword: string;
    tag: string;
    docs: [string, string[]][];
    index_json: string;
  };
  merkle: {
    chunks: string[];
    root: string;
    leaf_index: number;
    leaf_digest: string;
    proof: { leaf_index: number; siblings: { digest: string; side: string }[] };
  };
  ed25519: { seed: string; public: string; message: string; signature: string };
  pre: Record<
    string,
    {
      a: string;
      b: string;
      pub_a: string;
      wrap: { c1: string; c2: string; params_id: string };
      key: string;
      transformed: { c1: string; c2: string; params_id: string };
    }
  >;
  grant: { doc: Record<string, unknown>; serial: string; body: string };
  user_keys: { doc: Record<string, unknown>; trapdoor_covid: string };
}

export function loadVectors(): Vectors {
  return JSON.parse(readFileSync(inject("vectorsPath"), "utf-8")) as Vectors;
}

export function apiBase(): string {
  return inject("apiBase");
}

export function gatewayDataDir(): string {
  return inject("dataDir");
}

// SHA-256 counter stream: deterministic, uniform-looking bytes.
export function seededRng(seed: string): RandomSource {
  let counter = 0;
  let pool = new Uint8Array(0);
  return (n: number) => {
    while (pool.length < n) {
      const block = createHash("sha256").update(`${seed}:${counter++}`).digest();
      const next = new Uint8Array(pool.length + block.length);
      next.set(pool, 0);
      next.set(block, pool.length);
      pool = next;
    }
    const out = pool.slice(0, n);
    pool = pool.slice(n);
    return out;
  };
}

let phoneCounter = 0;

// Unique 11-digit phone numbers per test run.
export function freshPhone(prefix: string): string {
  phoneCounter += 1;
  return prefix + String(phoneCounter).padStart(11 - prefix.length, "0");
}
