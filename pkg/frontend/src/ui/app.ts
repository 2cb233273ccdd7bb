// Single-page dashboard controller. All state transitions are driven by
// API responses; the app holds the user's keys in memory (and mirrors
// them to localStorage under local custody) and re-renders after every
// action. Handlers run through track() so tests can await settle().

import { ApiClient, ApiError, type Json } from "../api.js";
import { base64ToBytes, bytesToHex, utf8Decode } from "../bytes.js";
import { AuthenticationFailure } from "../aead.js";
import { decryptChunks, UserClient } from "../client.js";
import { unwrapKey, type PreCiphertextWire } from "../group.js";
import type { RandomSource } from "../hashing.js";
import {
  generateUserKeys,
  userKeysFromDoc,
  userKeysToDoc,
  type UserKeysDoc,
} from "../keys.js";
import { clear, inputValue } from "./dom.js";
import { renderBanner, renderDashboard, renderLogin, renderRegister } from "./views.js";

export interface AppOptions {
  baseUrl: string;
  fetchImpl?: typeof fetch;
  rng?: RandomSource;
  paramsId?: string; // group profile for newly generated keys
  chunkSize?: number;
  approvePollMs?: number;
  approveMaxPolls?: number;
}

export interface SessionView {
  role: string;
  name: string;
  phone: string;
  custody: string;
}

export interface FetchedView {
  objectId: string;
  docId: string;
  copy: string;
  chunkStatus: ("verified" | "tampered")[];
  plaintext: string | null;
}

export interface AppState {
  screen: "login" | "register" | "dashboard";
  banner: string | null;
  session: SessionView | null;
  records: Json[] | null;
  recordsTitle: string | null;
  lastTx: string | null;
  privateStatus: string | null;
  inbox: Json[];
  outbox: Json[];
  searchResults: { entityId: string; docIds: string[]; objectIds: string[] } | null;
  fetched: FetchedView | null;
}

const KEYS_PREFIX = "healthchain.keys.";

export class DashboardApp {
  readonly root: HTMLElement;
  readonly opts: AppOptions;
  readonly state: AppState;
  client: UserClient | null = null;
  private readonly pending = new Set<Promise<unknown>>();
  private readonly keyDocs = new Map<string, UserKeysDoc>();

  constructor(root: HTMLElement, opts: AppOptions) {
    this.root = root;
    this.opts = opts;
    this.state = {
      screen: "login",
      banner: null,
      session: null,
      records: null,
      recordsTitle: null,
      lastTx: null,
      privateStatus: null,
      inbox: [],
      outbox: [],
      searchResults: null,
      fetched: null,
    };
    this.render();
  }

  nowSec(): number {
    return Math.floor(Date.now() / 1000);
  }

  // -- plumbing ---------------------------------------------------------------

  render(): void {
    clear(this.root);
    const banner = renderBanner(this);
    if (banner) this.root.append(banner);
    if (this.state.screen === "login") this.root.append(renderLogin(this));
    else if (this.state.screen === "register") this.root.append(renderRegister(this));
    else this.root.append(renderDashboard(this));
  }

  // Runs an async action, funneling API failures into the banner.
  track<T>(action: () => Promise<T>): Promise<T | undefined> {
    const p = (async () => {
      try {
        this.state.banner = null; // a new action supersedes the old notice
        return await action();
      } catch (err) {
        if (err instanceof ApiError) {
          this.state.banner = `[${err.code}] ${err.message}`;
          return undefined;
        }
        throw err;
      } finally {
        this.render();
      }
    })();
    this.pending.add(p);
    void p.finally(() => this.pending.delete(p));
    return p;
  }

  // Awaits every in-flight action (including ones those actions start).
  async settle(): Promise<void> {
    while (this.pending.size > 0) {
      await Promise.allSettled([...this.pending]);
    }
  }

  private storeKeys(phone: string, doc: UserKeysDoc): void {
    this.keyDocs.set(phone, doc);
    try {
      if (typeof localStorage !== "undefined") {
        localStorage.setItem(KEYS_PREFIX + phone, JSON.stringify(doc));
      }
    } catch {
      // storage is an optimization; in-memory copy is authoritative
    }
  }

  private loadKeys(phone: string): UserKeysDoc | null {
    const cached = this.keyDocs.get(phone);
    if (cached) return cached;
    try {
      if (typeof localStorage !== "undefined") {
        const raw = localStorage.getItem(KEYS_PREFIX + phone);
        if (raw) return JSON.parse(raw) as UserKeysDoc;
      }
    } catch {
      // fall through
    }
    return null;
  }

  // -- navigation -------------------------------------------------------------

  gotoRegister(): void {
    this.state.screen = "register";
    this.state.banner = null;
    this.render();
  }

  gotoLogin(): void {
    this.state.screen = "login";
    this.state.banner = null;
    this.render();
  }

  logout(): void {
    this.client = null;
    this.state.session = null;
    this.state.screen = "login";
    this.state.banner = null;
    this.state.records = null;
    this.state.inbox = [];
    this.state.outbox = [];
    this.state.searchResults = null;
    this.state.fetched = null;
    this.render();
  }

  // -- accounts ---------------------------------------------------------------

  submitRegister(form: HTMLFormElement): Promise<unknown> {
    const role = (form.querySelector("[name=role]") as HTMLSelectElement).value;
    const name = inputValue(form, "[name=name]");
    const phone = inputValue(form, "[name=phone]");
    const password = inputValue(form, "[name=password]");
    const institution = inputValue(form, "[name=institution]");
    if (!name || !phone || !password) {
      this.state.banner = "name, phone, and password are required";
      this.render();
      return Promise.resolve();
    }
    if (role === "DU" && !institution) {
      // client-side block: doctors register with their institution code
      this.state.banner = "institution code is required for doctors";
      this.render();
      return Promise.resolve();
    }
    return this.track(async () => {
      const keys = await generateUserKeys({
        rng: this.opts.rng,
        paramsId: this.opts.paramsId,
        owner: role === "DO",
      });
      this.storeKeys(phone, userKeysToDoc(keys));
      const api = new ApiClient(this.opts.baseUrl, this.opts.fetchImpl);
      const client = new UserClient(api, keys, this.opts.rng);
      await client.register({ role, phone, name, password, institutionCode: institution || undefined });
      await this.completeLogin(client, phone, password);
    });
  }

  submitLogin(form: HTMLFormElement): Promise<unknown> {
    const phone = inputValue(form, "[name=phone]");
    const password = inputValue(form, "[name=password]");
    return this.track(async () => {
      const stored = this.loadKeys(phone);
      const keys = stored
        ? userKeysFromDoc(stored)
        : await generateUserKeys({ rng: this.opts.rng, paramsId: this.opts.paramsId, owner: false });
      if (!stored) {
        this.state.banner =
          "no local keys found for this phone; private documents will be unreadable";
      }
      const api = new ApiClient(this.opts.baseUrl, this.opts.fetchImpl);
      const client = new UserClient(api, keys, this.opts.rng);
      await this.completeLogin(client, phone, password);
    });
  }

  private async completeLogin(client: UserClient, phone: string, password: string): Promise<void> {
    const doc = await client.login(phone, password);
    this.client = client;
    this.state.session = {
      role: String(doc.role),
      name: String(doc.name),
      phone: String(doc.phone),
      custody: String(doc.custody ?? "local"),
    };
    this.state.screen = "dashboard";
    await this.refreshShares();
  }

  // -- public records ------------------------------------------------------------

  submitRecord(form: HTMLFormElement): Promise<unknown> {
    const record = {
      entity_id: inputValue(form, "[name=entity]"),
      name: inputValue(form, "[name=rname]"),
      birth_day: inputValue(form, "[name=birth_day]"),
      cert_no: inputValue(form, "[name=cert_no]"),
      phone: this.state.session?.phone ?? "",
      health_code: (form.querySelector("[name=health_code]") as HTMLSelectElement).value,
      nucleic_acid_result: (form.querySelector("[name=nucleic_acid_result]") as HTMLSelectElement)
        .value,
      owner_pub: this.client ? bytesToHex(this.client.keys.sign.public) : "",
      updated_at: new Date().toISOString(),
    };
    return this.track(async () => {
      const doc = await this.client!.uploadRecord(record);
      this.state.lastTx = `tx ${doc.tx_id} committed in block ${doc.block} (${doc.op})`;
    });
  }

  queryLatest(form: HTMLFormElement): Promise<unknown> {
    const certNo = inputValue(form, "[name=cert_no]");
    const name = inputValue(form, "[name=qname]");
    return this.track(async () => {
      const doc = await this.client!.queryLatest(certNo, name);
      this.state.records = [doc.record as Json];
      this.state.recordsTitle = "Latest record";
    });
  }

  queryHistory(form: HTMLFormElement): Promise<unknown> {
    const entityId = inputValue(form, "[name=entity]");
    return this.track(async () => {
      const doc = await this.client!.queryHistory(entityId);
      const entries = (doc.entries ?? []) as Json[];
      this.state.records = entries.map((e) => ({
        ...(e.record as Json),
        block: e.block,
      }));
      this.state.recordsTitle = `History (${entries.length} versions, oldest first)`;
    });
  }

  // -- private documents -----------------------------------------------------------

  submitPrivate(form: HTMLFormElement): Promise<unknown> {
    const entityId = inputValue(form, "[name=entity]");
    const docId = inputValue(form, "[name=doc_id]");
    const content = (form.querySelector("[name=content]") as HTMLTextAreaElement).value;
    const keywords = inputValue(form, "[name=keywords]")
      .split(",")
      .map((k) => k.trim())
      .filter(Boolean);
    return this.track(async () => {
      const doc = await this.client!.uploadDataset(
        entityId,
        { [docId]: new TextEncoder().encode(content) },
        { [docId]: keywords },
        this.opts.chunkSize,
      );
      this.state.privateStatus =
        `dataset version ${doc.index_version} anchored: root ${String(doc.merkle_root).slice(0, 16)}…` +
        ` (tx ${doc.anchor_tx_id})`;
    });
  }

  searchDocs(form: HTMLFormElement): Promise<unknown> {
    const entityId = inputValue(form, "[name=entity]");
    const term = inputValue(form, "[name=term]");
    return this.track(async () => {
      const tag = this.client!.keys.sse ? await this.client!.trapdoorFor(term) : term;
      const doc = await this.client!.search(entityId, tag);
      this.state.searchResults = {
        entityId,
        docIds: (doc.doc_ids ?? []) as string[],
        objectIds: (doc.object_ids ?? []) as string[],
      };
    });
  }

  fetchDoc(objectId: string): Promise<unknown> {
    return this.track(async () => {
      const doc = await this.client!.fetchObject(objectId);
      const blobs = ((doc.chunks ?? []) as string[]).map(base64ToBytes);
      const chunkStatus: ("verified" | "tampered")[] = [];
      for (let i = 0; i < blobs.length; i++) {
        const ok = await this.client!.verifyChunk(objectId, i, blobs[i]);
        chunkStatus.push(ok ? "verified" : "tampered");
      }
      let plaintext: string | null = null;
      try {
        let plain: Uint8Array;
        if (doc.copy === "owner") {
          if (!this.client!.keys.ownerSym) throw new AuthenticationFailure("no owner key");
          plain = await decryptChunks(this.client!.keys.ownerSym, blobs);
        } else {
          const key = await unwrapKey(
            this.client!.keys.pre.secret,
            doc.key_wrap as unknown as PreCiphertextWire,
          );
          plain = await decryptChunks(key, blobs);
        }
        plaintext = utf8Decode(plain);
      } catch (err) {
        if (!(err instanceof AuthenticationFailure)) throw err;
        plaintext = null;
      }
      this.state.fetched = {
        objectId,
        docId: String(doc.doc_id),
        copy: String(doc.copy),
        chunkStatus,
        plaintext,
      };
    });
  }

  // -- sharing ---------------------------------------------------------------------

  submitRequest(form: HTMLFormElement): Promise<unknown> {
    const entityId = inputValue(form, "[name=entity]");
    const start = Number(inputValue(form, "[name=start]"));
    const end = Number(inputValue(form, "[name=end]"));
    if (!Number.isFinite(start) || !Number.isFinite(end) || start >= end) {
      this.state.banner = "the access window must start before it ends";
      this.render();
      return Promise.resolve();
    }
    return this.track(async () => {
      await this.client!.requestShare(entityId, { record_ids: [entityId] }, start, end);
      await this.refreshShares();
    });
  }

  approve(requestId: string, row: Element): Promise<unknown> {
    const keywords = (row.querySelector(".approve-keywords") as HTMLInputElement).value
      .split(",")
      .map((k) => k.trim())
      .filter(Boolean);
    const start = Number((row.querySelector(".approve-start") as HTMLInputElement).value);
    const end = Number((row.querySelector(".approve-end") as HTMLInputElement).value);
    if (!Number.isFinite(start) || !Number.isFinite(end) || start >= end) {
      // client-side block: a window that never opens is always a mistake
      this.state.banner = "the access window must start before it ends";
      this.render();
      return Promise.resolve();
    }
    const request = this.state.inbox.find((r) => String(r.request_id) === requestId);
    if (!request) return Promise.resolve();
    const patched = { ...request, start, end };
    return this.track(async () => {
      await this.client!.approveRequest(patched, {
        keywords,
        pollMs: this.opts.approvePollMs,
        maxPolls: this.opts.approveMaxPolls,
      });
      await this.refreshShares();
    });
  }

  deny(requestId: string): Promise<unknown> {
    return this.track(async () => {
      await this.client!.denyRequest(requestId);
      await this.refreshShares();
    });
  }

  poll(): Promise<unknown> {
    return this.track(() => this.refreshShares());
  }

  private async refreshShares(): Promise<void> {
    if (!this.client) return;
    const doc = await this.client.listRequests();
    this.state.inbox = (doc.inbox ?? []) as Json[];
    this.state.outbox = (doc.outbox ?? []) as Json[];
    // A data user answers pending key exchanges as part of the poll: the
    // blinded response needs their secret, so it cannot happen server-side.
    await this.client.answerPendingExchanges();
  }
}
