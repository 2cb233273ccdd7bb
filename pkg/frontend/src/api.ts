// Thin JSON wrapper over fetch. Every non-2xx response carries the
// gateway's stable error envelope {code, message}, surfaced as ApiError
// so flows can branch on the code.

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(code: string, message: string, status: number) {
    super(`${code}: ${message}`);
    this.code = code;
    this.status = status;
  }
}

export type Json = Record<string, unknown>;

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchImpl: typeof fetch;

  constructor(baseUrl: string, fetchImpl?: typeof fetch) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl ?? globalThis.fetch.bind(globalThis);
  }

  async call(
    method: string,
    path: string,
    opts: { token?: string; body?: unknown; params?: Record<string, string> } = {},
  ): Promise<Json> {
    const url = new URL(this.baseUrl + path);
    for (const [k, v] of Object.entries(opts.params ?? {})) url.searchParams.set(k, v);
    const headers: Record<string, string> = {};
    if (opts.token) headers["Authorization"] = `Bearer ${opts.token}`;
    if (opts.body !== undefined) headers["Content-Type"] = "application/json";
    const resp = await this.fetchImpl(url.toString(), {
      method,
      headers,
      body: opts.body === undefined ? undefined : JSON.stringify(opts.body),
    });
    let doc: Json;
    try {
      doc = (await resp.json()) as Json;
    } catch {
      doc = {};
    }
    if (resp.status >= 400) {
      throw new ApiError(
        String(doc.code ?? "Error"),
        String(doc.message ?? resp.statusText),
        resp.status,
      );
    }
    return doc;
  }

  get(path: string, opts: { token?: string; params?: Record<string, string> } = {}): Promise<Json> {
    return this.call("GET", path, opts);
  }

  post(path: string, opts: { token?: string; body?: unknown } = {}): Promise<Json> {
    return this.call("POST", path, opts);
  }
}
