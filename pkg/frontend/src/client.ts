// One authenticated user driving the gateway API with locally held keys.
// The gateway only ever receives public keys, ciphertexts, blinded
// exponents, and signed documents; everything secret stays in this
// process. Mirrors the CLI client's wire formats exactly.

import { aesGcmOpen, aesGcmSeal, NONCE_SIZE } from "./aead.js";
import { ApiClient, ApiError, type Json } from "./api.js";
import {
  base64ToBytes,
  bytesToBase64,
  bytesToHex,
  concatBytes,
  utf8Encode,
} from "./bytes.js";
import { canonicalJson, type Json as CanonicalJson } from "./canonical.js";
import {
  exchangeBlind,
  exchangeFinish,
  exchangeInit,
  exponentFromHex,
  exponentToHex,
  getParams,
  unwrapKey,
  wrapNewKey,
  type PreCiphertextWire,
} from "./group.js";
import { sha256, systemRng, type RandomSource } from "./hashing.js";
import type { UserKeys } from "./keys.js";
import { chunkLeafDigest, datasetRootHex, verifyProof, type ProofWire } from "./merkle.js";
import { sign } from "./signing.js";
import { buildIndexWire, trapdoorHex } from "./sse.js";

export const DEFAULT_CHUNK_SIZE = 4096;

export function splitChunks(payload: Uint8Array, chunkSize = DEFAULT_CHUNK_SIZE): Uint8Array[] {
  if (payload.length === 0) return [new Uint8Array(0)];
  const out: Uint8Array[] = [];
  for (let i = 0; i < payload.length; i += chunkSize) {
    out.push(payload.slice(i, i + chunkSize));
  }
  return out;
}

export async function encryptChunks(
  key: Uint8Array,
  chunks: Uint8Array[],
  rng: RandomSource,
): Promise<Uint8Array[]> {
  const out: Uint8Array[] = [];
  for (const c of chunks) out.push(await aesGcmSeal(key, c, rng(NONCE_SIZE)));
  return out;
}

export async function decryptChunks(key: Uint8Array, blobs: Uint8Array[]): Promise<Uint8Array> {
  const parts: Uint8Array[] = [];
  for (const b of blobs) parts.push(await aesGcmOpen(key, b));
  return concatBytes(...parts);
}

function sortedByCodePoint(items: string[]): string[] {
  return [...items].sort((a, b) => {
    const pa = Array.from(a, (c) => c.codePointAt(0)!);
    const pb = Array.from(b, (c) => c.codePointAt(0)!);
    for (let i = 0; i < Math.min(pa.length, pb.length); i++) {
      if (pa[i] !== pb[i]) return pa[i] - pb[i];
    }
    return pa.length - pb.length;
  });
}

export interface Scope {
  record_ids?: string[];
  trapdoors?: string[];
}

export function normalizeScope(scope: Scope): { record_ids: string[]; trapdoors: string[] } {
  return {
    record_ids: sortedByCodePoint([...new Set(scope.record_ids ?? [])]),
    trapdoors: sortedByCodePoint([...new Set(scope.trapdoors ?? [])]),
  };
}

export interface GrantDoc {
  grantor_pub: string;
  grantee_pub: string;
  scope: { record_ids: string[]; trapdoors: string[] };
  start: number;
  end: number;
  rekey_ref?: string;
  sig: string;
}

export async function buildDatasetBody(
  keys: UserKeys,
  docs: Record<string, Uint8Array>,
  keywords: Record<string, string[]>,
  rng: RandomSource,
  chunkSize = DEFAULT_CHUNK_SIZE,
  indexVersion?: number,
): Promise<Json> {
  if (!keys.ownerSym || !keys.sse) {
    throw new Error("building a dataset requires owner keys");
  }
  const params = getParams(keys.pre.paramsId);
  const built: { docId: string; ownerChunkDigests: string[]; shareChunkDigests: string[] }[] = [];
  const wireDocs: Json[] = [];
  for (const docId of sortedByCodePoint(Object.keys(docs))) {
    const plainChunks = splitChunks(docs[docId], chunkSize);
    const ownerChunks = await encryptChunks(keys.ownerSym, plainChunks, rng);
    const { wire: wrap, key: shareKey } = await wrapNewKey(params, keys.pre.public, rng);
    const shareChunks = await encryptChunks(shareKey, plainChunks, rng);
    built.push({
      docId,
      ownerChunkDigests: await Promise.all(ownerChunks.map(async (c) => bytesToHex(await sha256(c)))),
      shareChunkDigests: await Promise.all(shareChunks.map(async (c) => bytesToHex(await sha256(c)))),
    });
    wireDocs.push({
      doc_id: docId,
      owner_chunks: ownerChunks.map(bytesToBase64),
      share_chunks: shareChunks.map(bytesToBase64),
      key_wrap: wrap,
    });
  }
  const index = await buildIndexWire(
    keys.sse,
    sortedByCodePoint(Object.keys(keywords)).map((docId) => [docId, keywords[docId]]),
  );
  const body: Json = {
    params_id: keys.pre.paramsId,
    index,
    docs: wireDocs,
    merkle_root: await datasetRootHex(built),
  };
  if (indexVersion !== undefined) body.index_version = indexVersion;
  return body;
}

export class UserClient {
  readonly api: ApiClient;
  readonly keys: UserKeys;
  readonly rng: RandomSource;
  token: string | null = null;
  private readonly blinds = new Map<string, bigint>(); // exchange_id -> v, never sent

  constructor(api: ApiClient, keys: UserKeys, rng: RandomSource = systemRng) {
    this.api = api;
    this.keys = keys;
    this.rng = rng;
  }

  // -- accounts --------------------------------------------------------------

  async register(form: {
    role: string;
    phone: string;
    name: string;
    password: string;
    institutionCode?: string;
  }): Promise<Json> {
    const body: Json = {
      role: form.role,
      phone: form.phone,
      name: form.name,
      password: form.password,
      custody: "local",
      sign_public: bytesToHex(this.keys.sign.public),
      pre_public: exponentToHex(this.keys.pre.public),
    };
    if (form.institutionCode) body.institution_code = form.institutionCode;
    return this.api.post("/register", { body });
  }

  async login(phone: string, password: string): Promise<Json> {
    const doc = await this.api.post("/login", { body: { phone, password } });
    this.token = String(doc.token);
    return doc;
  }

  // -- public records ----------------------------------------------------------

  uploadRecord(record: Json, mode = "auto"): Promise<Json> {
    return this.api.post("/records", {
      token: this.token ?? undefined,
      body: { record, mode },
    });
  }

  queryLatest(certNo: string, name: string): Promise<Json> {
    return this.api.get("/records/latest", {
      token: this.token ?? undefined,
      params: { cert_no: certNo, name },
    });
  }

  queryHistory(entityId: string): Promise<Json> {
    return this.api.get(`/records/${entityId}/history`, { token: this.token ?? undefined });
  }

  // -- private datasets ----------------------------------------------------------

  async uploadDataset(
    entityId: string,
    docs: Record<string, Uint8Array>,
    keywords: Record<string, string[]>,
    chunkSize = DEFAULT_CHUNK_SIZE,
    indexVersion?: number,
  ): Promise<Json> {
    const body = await buildDatasetBody(this.keys, docs, keywords, this.rng, chunkSize, indexVersion);
    return this.api.post(`/private/${entityId}/dataset`, {
      token: this.token ?? undefined,
      body,
    });
  }

  async trapdoorFor(keyword: string): Promise<string> {
    if (!this.keys.sse) throw new Error("only the index owner derives trapdoors");
    return trapdoorHex(this.keys.sse, keyword);
  }

  search(entityId: string, trapdoor: string): Promise<Json> {
    return this.api.post(`/private/${entityId}/search`, {
      token: this.token ?? undefined,
      body: { trapdoor },
    });
  }

  // -- share flow -----------------------------------------------------------------

  requestShare(entityId: string, scope: Scope, start: number, end: number): Promise<Json> {
    return this.api.post("/share/requests", {
      token: this.token ?? undefined,
      body: { entity_id: entityId, scope, start, end },
    });
  }

  listRequests(): Promise<Json> {
    return this.api.get("/share/requests", { token: this.token ?? undefined });
  }

  denyRequest(requestId: string): Promise<Json> {
    return this.api.post(`/share/requests/${requestId}/deny`, { token: this.token ?? undefined });
  }

  async startExchange(requestId: string): Promise<string> {
    const params = getParams(this.keys.pre.paramsId);
    const { v, x } = exchangeInit(params, this.keys.pre.secret, this.rng);
    const doc = await this.api.post("/share/exchange", {
      token: this.token ?? undefined,
      body: { request_id: requestId, params_id: params.paramsId, x: exponentToHex(x) },
    });
    const exchangeId = String(doc.exchange_id);
    this.blinds.set(exchangeId, v);
    return exchangeId;
  }

  listExchanges(): Promise<Json> {
    return this.api.get("/share/exchange", { token: this.token ?? undefined });
  }

  async answerExchange(exchangeId: string): Promise<Json> {
    const exchange = await this.api.get(`/share/exchange/${exchangeId}`, {
      token: this.token ?? undefined,
    });
    const params = getParams(String(exchange.params_id));
    const y = exchangeBlind(params, this.keys.pre.secret, exponentFromHex(String(exchange.x)));
    return this.api.post(`/share/exchange/${exchangeId}/respond`, {
      token: this.token ?? undefined,
      body: { y: exponentToHex(y) },
    });
  }

  // Answer every exchange waiting on this user as grantee; returns how
  // many were answered. This is what a data user's dashboard does on poll.
  async answerPendingExchanges(): Promise<number> {
    const mine = bytesToHex(this.keys.sign.public);
    const doc = await this.listExchanges();
    let answered = 0;
    for (const ex of (doc.exchanges ?? []) as Json[]) {
      if (ex.state === "awaiting-grantee" && ex.grantee_pub === mine) {
        await this.answerExchange(String(ex.exchange_id));
        answered += 1;
      }
    }
    return answered;
  }

  async finishExchange(exchangeId: string): Promise<string> {
    const exchange = await this.api.get(`/share/exchange/${exchangeId}`, {
      token: this.token ?? undefined,
    });
    if (exchange.y == null) {
      throw new ApiError("UnknownExchange", "grantee has not answered yet", 409);
    }
    const params = getParams(String(exchange.params_id));
    const v = this.blinds.get(exchangeId);
    if (v === undefined) throw new Error("no blind retained for this exchange");
    this.blinds.delete(exchangeId);
    const rk = exchangeFinish(params, v, exponentFromHex(String(exchange.y)));
    const doc = await this.api.post("/share/rekeys", {
      token: this.token ?? undefined,
      body: {
        params_id: params.paramsId,
        rk: exponentToHex(rk),
        grantor_pub: exchange.grantor_pub,
        grantee_pub: exchange.grantee_pub,
      },
    });
    return String(doc.rekey_ref);
  }

  async signGrant(
    granteePub: string,
    scope: Scope,
    start: number,
    end: number,
    rekeyRef?: string,
  ): Promise<GrantDoc> {
    if (start >= end) throw new Error("start_time must precede end_time");
    const body: Record<string, CanonicalJson> = {
      grantor_pub: bytesToHex(this.keys.sign.public),
      grantee_pub: granteePub,
      scope: normalizeScope(scope),
      start,
      end,
    };
    if (rekeyRef !== undefined) body.rekey_ref = rekeyRef;
    const sig = await sign(this.keys.sign.secret, canonicalJson(body));
    return { ...(body as unknown as Omit<GrantDoc, "sig">), sig: bytesToHex(sig) };
  }

  async registerGrant(grant: GrantDoc, requestId?: string): Promise<Json> {
    const body: Json = { grant };
    if (requestId !== undefined) body.request_id = requestId;
    return this.api.post("/share/grants", { token: this.token ?? undefined, body });
  }

  // Owner-side approval: run the blinded exchange against the live
  // grantee (who answers from their own session, typically on a poll),
  // then register the delegation key and the signed grant.
  async approveRequest(
    request: Json,
    opts: { keywords?: string[]; pollMs?: number; maxPolls?: number } = {},
  ): Promise<{ grantSerial: string; rekeyRef: string; scope: Scope }> {
    const requestId = String(request.request_id);
    const exchangeId = await this.startExchange(requestId);
    const pollMs = opts.pollMs ?? 250;
    const maxPolls = opts.maxPolls ?? 120;
    let answered = false;
    for (let i = 0; i < maxPolls; i++) {
      const ex = await this.api.get(`/share/exchange/${exchangeId}`, {
        token: this.token ?? undefined,
      });
      if (ex.y != null) {
        answered = true;
        break;
      }
      await new Promise((resolve) => setTimeout(resolve, pollMs));
    }
    if (!answered) throw new Error("grantee did not answer the key exchange in time");
    const rekeyRef = await this.finishExchange(exchangeId);

    const baseScope = (request.scope ?? {}) as Scope;
    const trapdoors = new Set(baseScope.trapdoors ?? []);
    for (const kw of opts.keywords ?? []) trapdoors.add(await this.trapdoorFor(kw));
    const scope: Scope = {
      record_ids: baseScope.record_ids ?? [],
      trapdoors: [...trapdoors],
    };
    const grant = await this.signGrant(
      String(request.requester_pub),
      scope,
      Number(request.start),
      Number(request.end),
      rekeyRef,
    );
    const result = await this.registerGrant(grant, requestId);
    return { grantSerial: String(result.serial), rekeyRef, scope };
  }

  // -- fetch + verify -----------------------------------------------------------

  fetchObject(objectId: string, grantSerial?: string): Promise<Json> {
    const body: Json = { object_id: objectId };
    if (grantSerial !== undefined) body.grant_serial = grantSerial;
    return this.api.post("/share/fetch", { token: this.token ?? undefined, body });
  }

  async fetchPlaintext(objectId: string, grantSerial?: string): Promise<Uint8Array> {
    const doc = await this.fetchObject(objectId, grantSerial);
    const blobs = (doc.chunks as string[]).map(base64ToBytes);
    if (doc.copy === "owner") {
      if (!this.keys.ownerSym) throw new Error("owner copy requires the owner symmetric key");
      return decryptChunks(this.keys.ownerSym, blobs);
    }
    const wrap = doc.key_wrap as unknown as PreCiphertextWire;
    const shareKey = await unwrapKey(this.keys.pre.secret, wrap);
    return decryptChunks(shareKey, blobs);
  }

  async verifyChunk(objectId: string, chunkIndex: number, chunk: Uint8Array): Promise<boolean> {
    const doc = await this.api.get(`/objects/${objectId}/proof`, {
      token: this.token ?? undefined,
      params: { chunk: String(chunkIndex) },
    });
    const rootHex = String(doc.anchored_root ?? doc.merkle_root);
    return verifyProof(rootHex, await chunkLeafDigest(chunk), doc.proof as unknown as ProofWire);
  }
}

// Convenience used across UI code: UTF-8 text documents as payloads.
export function textPayload(text: string): Uint8Array {
  return utf8Encode(text);
}
