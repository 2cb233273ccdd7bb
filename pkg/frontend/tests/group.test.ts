import { describe, expect, it } from "vitest";
import { bytesToHex, hexToBytes } from "../src/bytes.js";
import {
  DESK_PARAMS,
  MODP_2048_PARAMS,
  exchangeBlind,
  exchangeFinish,
  exchangeInit,
  exponentFromHex,
  inGroup,
  keygenPre,
  modInv,
  modPow,
  preDecrypt,
  preEncrypt,
  randExponent,
  unwrapKey,
  wrapNewKey,
} from "../src/group.js";
import { systemRng } from "../src/hashing.js";
import { loadVectors, seededRng } from "./helpers.js";

// Byte source that emits a fixed script of exponent draws (one byte per
// draw suffices for the desk group, where q = 11).
function scriptedRng(values: number[]): (n: number) => Uint8Array {
  const queue = [...values];
  return (n: number) => {
    const v = queue.shift();
    if (v === undefined) throw new Error("rng script exhausted");
    const out = new Uint8Array(n);
    out[n - 1] = v;
    return out;
  };
}

describe("modular arithmetic", () => {
  it("modPow matches known small cases", () => {
    expect(modPow(2n, 10n, 1000n)).toBe(24n);
    expect(modPow(8n, 4n, 23n)).toBe(2n);
  });

  it("modInv inverts everything in a prime field", () => {
    for (let a = 1n; a < 23n; a++) {
      expect((a * modInv(a, 23n)) % 23n).toBe(1n);
    }
    expect(() => modInv(0n, 23n)).toThrow(/invertible/);
  });
});

describe("desk-scale worked instance", () => {
  it("walks encrypt -> re-encrypt -> decrypt with pinned exponents", () => {
    const p = DESK_PARAMS;
    const a = 3n;
    const b = 5n;
    const pubA = modPow(p.g, a, p.p);
    expect(pubA).toBe(8n);

    // encrypt m = 4 with r = 4 (first scripted draw)
    const wire = preEncrypt(p, pubA, 4n, scriptedRng([4]));
    expect(exponentFromHex(wire.c1)).toBe(18n);
    expect(exponentFromHex(wire.c2)).toBe(2n);

    // delegation key rk = b * a^-1 mod q = 9; transformed c2 = 2^9 mod 23 = 6
    const rk = (b * modInv(a, p.q)) % p.q;
    expect(rk).toBe(9n);
    const c2t = modPow(2n, rk, p.p);
    expect(c2t).toBe(6n);

    // the grantee decrypts the transformed ciphertext back to m = 4
    expect(preDecrypt(b, { c1: wire.c1, c2: "06", params_id: p.paramsId })).toBe(4n);
  });
});

describe("blinded delegation exchange", () => {
  it("reconstructs rk = b * a^-1 without either secret crossing the wire", () => {
    for (let i = 0; i < 200; i++) {
      const a = randExponent(DESK_PARAMS);
      const b = randExponent(DESK_PARAMS);
      const { v, x } = exchangeInit(DESK_PARAMS, a);
      const y = exchangeBlind(DESK_PARAMS, b, x);
      const rk = exchangeFinish(DESK_PARAMS, v, y);
      expect(rk).toBe((b * modInv(a, DESK_PARAMS.q)) % DESK_PARAMS.q);
    }
  });

  it("refuses degenerate zero values", () => {
    expect(() => exchangeBlind(DESK_PARAMS, 3n, 11n)).toThrow(/nonzero/);
    expect(() => exchangeFinish(DESK_PARAMS, 3n, 0n)).toThrow(/nonzero/);
  });
});

describe("hybrid key wrap", () => {
  it("unwraps the gateway's first-hop wrap (desk group)", async () => {
    const v = loadVectors().pre["desk-p23"];
    const key = await unwrapKey(exponentFromHex(v.a), v.wrap);
    expect(bytesToHex(key)).toBe(v.key);
  });

  it("unwraps the gateway's transformed wrap with the grantee secret (desk group)", async () => {
    const v = loadVectors().pre["desk-p23"];
    const key = await unwrapKey(exponentFromHex(v.b), v.transformed);
    expect(bytesToHex(key)).toBe(v.key);
  });

  it("unwraps both hops in the production-size group", async () => {
    const v = loadVectors().pre["modp-2048"];
    expect(bytesToHex(await unwrapKey(exponentFromHex(v.a), v.wrap))).toBe(v.key);
    expect(bytesToHex(await unwrapKey(exponentFromHex(v.b), v.transformed))).toBe(v.key);
  });

  it("round-trips locally generated wraps", async () => {
    const rng = seededRng("wrap-roundtrip");
    const pair = keygenPre(DESK_PARAMS, rng);
    const { wire, key } = await wrapNewKey(DESK_PARAMS, pair.public, rng);
    expect(bytesToHex(await unwrapKey(pair.secret, wire))).toBe(bytesToHex(key));
  });

  it("generates keys in the production-size group", async () => {
    const pair = keygenPre(MODP_2048_PARAMS, systemRng);
    expect(inGroup(MODP_2048_PARAMS, pair.public)).toBe(true);
    const { wire, key } = await wrapNewKey(MODP_2048_PARAMS, pair.public, systemRng);
    expect(bytesToHex(await unwrapKey(pair.secret, wire))).toBe(bytesToHex(key));
  });

  it("wire elements are fixed-width hex", () => {
    const v = loadVectors().pre["modp-2048"];
    expect(v.wrap.c1.length).toBe(512);
    expect(hexToBytes(v.wrap.c1).length).toBe(256);
  });
});
