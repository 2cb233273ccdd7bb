// Locally held user secrets and their at-rest JSON document. The format
// matches the CLI's key files, so a key file written by either client
// loads in the other: signing seeds as hex, group exponents as minimal
// lowercase hex, symmetric material as base64.

import { base64ToBytes, bytesToBase64, bytesToHex, hexToBytes } from "./bytes.js";
import {
  exponentFromHex,
  exponentToHex,
  getParams,
  keygenPre,
  type PreKeyPair,
} from "./group.js";
import type { RandomSource } from "./hashing.js";
import { systemRng } from "./hashing.js";
import { generateSignPair, type SignKeyPair } from "./signing.js";
import type { SseKey } from "./sse.js";

export interface UserKeys {
  sign: SignKeyPair;
  pre: PreKeyPair;
  ownerSym?: Uint8Array; // owners only: key for their private copies
  sse?: SseKey; // owners only: index construction + trapdoors
}

export async function generateUserKeys(
  opts: { rng?: RandomSource; paramsId?: string; owner?: boolean } = {},
): Promise<UserKeys> {
  const rng = opts.rng ?? systemRng;
  const params = getParams(opts.paramsId ?? "modp-2048");
  const keys: UserKeys = {
    sign: await generateSignPair(opts.rng),
    pre: keygenPre(params, rng),
  };
  if (opts.owner ?? true) {
    keys.ownerSym = rng(32);
    keys.sse = { kPrf: rng(32), kEnc: rng(32) };
  }
  return keys;
}

export interface UserKeysDoc {
  version: 1;
  sign: { secret: string; public: string };
  pre: { params_id: string; secret: string; public: string };
  owner_sym?: string;
  sse?: { k_prf: string; k_enc: string };
}

export function userKeysToDoc(keys: UserKeys): UserKeysDoc {
  const doc: UserKeysDoc = {
    version: 1,
    sign: { secret: bytesToHex(keys.sign.secret), public: bytesToHex(keys.sign.public) },
    pre: {
      params_id: keys.pre.paramsId,
      secret: exponentToHex(keys.pre.secret),
      public: exponentToHex(keys.pre.public),
    },
  };
  if (keys.ownerSym) doc.owner_sym = bytesToBase64(keys.ownerSym);
  if (keys.sse) doc.sse = { k_prf: bytesToBase64(keys.sse.kPrf), k_enc: bytesToBase64(keys.sse.kEnc) };
  return doc;
}

export function userKeysFromDoc(doc: UserKeysDoc): UserKeys {
  const keys: UserKeys = {
    sign: { secret: hexToBytes(doc.sign.secret), public: hexToBytes(doc.sign.public) },
    pre: {
      paramsId: doc.pre.params_id,
      secret: exponentFromHex(doc.pre.secret),
      public: exponentFromHex(doc.pre.public),
    },
  };
  if (doc.owner_sym) keys.ownerSym = base64ToBytes(doc.owner_sym);
  if (doc.sse) keys.sse = { kPrf: base64ToBytes(doc.sse.k_prf), kEnc: base64ToBytes(doc.sse.k_enc) };
  return keys;
}
