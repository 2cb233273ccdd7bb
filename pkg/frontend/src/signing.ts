// Ed25519 over the Web Crypto API. Private keys are carried as 32-byte
// seeds (the same at-rest format the key files use); Web Crypto wants
// PKCS#8, so the fixed DER prefix for an Ed25519 seed is prepended on
// import. Deriving the public key from a seed needs node:crypto and is
// only used when generating keys deterministically in tests; in the
// browser, fresh pairs come from subtle.generateKey.

import { concatBytes, hexToBytes } from "./bytes.js";
import type { RandomSource } from "./hashing.js";

const PKCS8_ED25519_PREFIX = hexToBytes("302e020100300506032b657004220420");

function subtle(): SubtleCrypto {
  return globalThis.crypto.subtle;
}

export interface SignKeyPair {
  secret: Uint8Array; // 32-byte seed
  public: Uint8Array; // 32-byte public key
}

async function importSeed(seed: Uint8Array): Promise<CryptoKey> {
  if (seed.length !== 32) throw new Error("ed25519 seed must be 32 bytes");
  return subtle().importKey(
    "pkcs8",
    concatBytes(PKCS8_ED25519_PREFIX, seed) as BufferSource,
    "Ed25519",
    false,
    ["sign"],
  );
}

export async function sign(seed: Uint8Array, message: Uint8Array): Promise<Uint8Array> {
  const key = await importSeed(seed);
  return new Uint8Array(await subtle().sign("Ed25519", key, message as BufferSource));
}

export async function verify(
  publicKey: Uint8Array,
  message: Uint8Array,
  signature: Uint8Array,
): Promise<boolean> {
  try {
    const key = await subtle().importKey("raw", publicKey as BufferSource, "Ed25519", false, [
      "verify",
    ]);
    return await subtle().verify("Ed25519", key, signature as BufferSource, message as BufferSource);
  } catch {
    return false;
  }
}

async function publicFromSeedNode(seed: Uint8Array): Promise<Uint8Array> {
  const { createPrivateKey, createPublicKey } = await import("node:crypto");
  const priv = createPrivateKey({
    key: Buffer.from(concatBytes(PKCS8_ED25519_PREFIX, seed)),
    format: "der",
    type: "pkcs8",
  });
  const spki = createPublicKey(priv).export({ format: "der", type: "spki" });
  return new Uint8Array(spki.subarray(spki.length - 32));
}

export async function generateSignPair(rng?: RandomSource): Promise<SignKeyPair> {
  if (rng) {
    const seed = rng(32);
    return { secret: seed, public: await publicFromSeedNode(seed) };
  }
  const pair = (await subtle().generateKey("Ed25519", true, ["sign", "verify"])) as CryptoKeyPair;
  const pkcs8 = new Uint8Array(await subtle().exportKey("pkcs8", pair.privateKey));
  const raw = new Uint8Array(await subtle().exportKey("raw", pair.publicKey));
  return { secret: pkcs8.slice(pkcs8.length - 32), public: raw };
}
