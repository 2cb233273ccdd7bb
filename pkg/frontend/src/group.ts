// Re-encryptable key wraps over a prime-order subgroup of Z_p*, in
// bigint arithmetic. The client side needs: key generation, hybrid key
// wrap/unwrap (m = g^k, payload key = SHA-256 of m's fixed-width
// encoding), and the three moves of the blinded delegation exchange
// (x = v*a^-1, y = x*b, rk = y*v^-1, all mod q). Re-encryption itself
// runs on the gateway; the client only ever sees first-hop or
// transformed ciphertexts.

import { bytesToHex, hexToBytes } from "./bytes.js";
import { sha256, type RandomSource, systemRng } from "./hashing.js";

export interface GroupParams {
  paramsId: string;
  p: bigint;
  q: bigint;
  g: bigint;
}

export const DESK_PARAMS: GroupParams = {
  paramsId: "desk-p23",
  p: 23n,
  q: 11n,
  g: 2n,
};

const MODP_2048_P = BigInt(
  "0x" +
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74" +
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437" +
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED" +
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05" +
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB" +
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B" +
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718" +
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
);

export const MODP_2048_PARAMS: GroupParams = {
  paramsId: "modp-2048",
  p: MODP_2048_P,
  q: (MODP_2048_P - 1n) / 2n,
  g: 4n,
};

const REGISTRY: Record<string, GroupParams> = {
  [DESK_PARAMS.paramsId]: DESK_PARAMS,
  [MODP_2048_PARAMS.paramsId]: MODP_2048_PARAMS,
};

export function getParams(paramsId: string): GroupParams {
  const params = REGISTRY[paramsId];
  if (!params) throw new Error(`unknown group profile ${paramsId}`);
  return params;
}

export function modPow(base: bigint, exp: bigint, mod: bigint): bigint {
  if (mod <= 0n) throw new Error("modulus must be positive");
  let b = ((base % mod) + mod) % mod;
  let e = exp;
  let acc = 1n;
  while (e > 0n) {
    if (e & 1n) acc = (acc * b) % mod;
    b = (b * b) % mod;
    e >>= 1n;
  }
  return acc;
}

export function modInv(a: bigint, mod: bigint): bigint {
  // Extended Euclid; throws when gcd(a, mod) != 1.
  let [old_r, r] = [((a % mod) + mod) % mod, mod];
  let [old_s, s] = [1n, 0n];
  while (r !== 0n) {
    const q = old_r / r;
    [old_r, r] = [r, old_r - q * r];
    [old_s, s] = [s, old_s - q * s];
  }
  if (old_r !== 1n) throw new Error("value is not invertible");
  return ((old_s % mod) + mod) % mod;
}

export function bitLength(n: bigint): number {
  return n === 0n ? 0 : n.toString(2).length;
}

export function byteLen(params: GroupParams): number {
  return Math.ceil(bitLength(params.p) / 8);
}

export function bytesToBigInt(b: Uint8Array): bigint {
  let acc = 0n;
  for (const byte of b) acc = (acc << 8n) | BigInt(byte);
  return acc;
}

export function bigIntToBytes(n: bigint, width: number): Uint8Array {
  const out = new Uint8Array(width);
  let v = n;
  for (let i = width - 1; i >= 0; i--) {
    out[i] = Number(v & 0xffn);
    v >>= 8n;
  }
  if (v !== 0n) throw new Error("integer does not fit the requested width");
  return out;
}

export function encodeElement(params: GroupParams, x: bigint): Uint8Array {
  return bigIntToBytes(x, byteLen(params));
}

export function inGroup(params: GroupParams, x: bigint): boolean {
  return 1n <= x && x < params.p && modPow(x, params.q, params.p) === 1n;
}

// Uniform in [1, q-1] by rejection sampling over bit-masked draws.
export function randExponent(params: GroupParams, rng: RandomSource = systemRng): bigint {
  const bits = bitLength(params.q);
  const nbytes = Math.ceil(bits / 8);
  const mask = (1n << BigInt(bits)) - 1n;
  for (;;) {
    const candidate = bytesToBigInt(rng(nbytes)) & mask;
    if (1n <= candidate && candidate <= params.q - 1n) return candidate;
  }
}

export interface PreKeyPair {
  paramsId: string;
  secret: bigint;
  public: bigint;
}

export function keygenPre(params: GroupParams, rng: RandomSource = systemRng): PreKeyPair {
  const a = randExponent(params, rng);
  return { paramsId: params.paramsId, secret: a, public: modPow(params.g, a, params.p) };
}

// Wire form of a key wrap: fixed-width lowercase hex components.
export interface PreCiphertextWire {
  c1: string;
  c2: string;
  params_id: string;
}

export function preEncrypt(
  params: GroupParams,
  publicKey: bigint,
  m: bigint,
  rng: RandomSource = systemRng,
): PreCiphertextWire {
  if (!inGroup(params, m)) throw new Error("message is not in the order-q subgroup");
  if (!inGroup(params, publicKey)) throw new Error("public key is not in the order-q subgroup");
  const r = randExponent(params, rng);
  const c1 = (m * modPow(params.g, r, params.p)) % params.p;
  const c2 = modPow(publicKey, r, params.p);
  return {
    c1: bytesToHex(encodeElement(params, c1)),
    c2: bytesToHex(encodeElement(params, c2)),
    params_id: params.paramsId,
  };
}

export function preDecrypt(secret: bigint, wire: PreCiphertextWire): bigint {
  const params = getParams(wire.params_id);
  const c1 = bytesToBigInt(hexToBytes(wire.c1));
  const c2 = bytesToBigInt(hexToBytes(wire.c2));
  if (!(0n < c1 && c1 < params.p && 0n < c2 && c2 < params.p)) {
    throw new Error("ciphertext components out of range");
  }
  const shared = modPow(c2, modInv(secret, params.q), params.p);
  return (c1 * modInv(shared, params.p)) % params.p;
}

export async function derivePayloadKey(params: GroupParams, m: bigint): Promise<Uint8Array> {
  return sha256(encodeElement(params, m));
}

export async function wrapNewKey(
  params: GroupParams,
  publicKey: bigint,
  rng: RandomSource = systemRng,
): Promise<{ wire: PreCiphertextWire; key: Uint8Array }> {
  const k = randExponent(params, rng);
  const m = modPow(params.g, k, params.p);
  return { wire: preEncrypt(params, publicKey, m, rng), key: await derivePayloadKey(params, m) };
}

export async function unwrapKey(secret: bigint, wire: PreCiphertextWire): Promise<Uint8Array> {
  const params = getParams(wire.params_id);
  return derivePayloadKey(params, preDecrypt(secret, wire));
}

// Blinded delegation exchange. Exponents travel as minimal lowercase hex.

export function exponentToHex(x: bigint): string {
  return x.toString(16);
}

export function exponentFromHex(h: string): bigint {
  if (!/^[0-9a-fA-F]+$/.test(h)) throw new Error("not a hex exponent");
  return BigInt("0x" + h);
}

export function exchangeInit(
  params: GroupParams,
  secret: bigint,
  rng: RandomSource = systemRng,
): { v: bigint; x: bigint } {
  let v = randExponent(params, rng);
  while (v === 1n) v = randExponent(params, rng); // v=1 would send a^-1 unblinded
  const x = (v * modInv(secret, params.q)) % params.q;
  if (x === 0n) throw new Error("degenerate exchange value");
  return { v, x };
}

export function exchangeBlind(params: GroupParams, secret: bigint, x: bigint): bigint {
  if (x % params.q === 0n) throw new Error("exchange value must be nonzero mod q");
  return (x * secret) % params.q;
}

export function exchangeFinish(params: GroupParams, v: bigint, y: bigint): bigint {
  if (y % params.q === 0n) throw new Error("exchange response must be nonzero mod q");
  return (y * modInv(v, params.q)) % params.q;
}
