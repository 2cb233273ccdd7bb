// Render functions: pure state -> DOM, with handlers delegated to the
// app controller. Test hooks ride on data-testid attributes.

import type { Json } from "../api.js";
import { h, type Child } from "./dom.js";
import type { DashboardApp } from "./app.js";

function section(title: string, ...children: Child[]): HTMLElement {
  return h("section", { class: "panel" }, h("h2", {}, title), ...children);
}

function field(name: string, label: string, attrs: Record<string, string> = {}): HTMLElement {
  return h(
    "label",
    { class: "field" },
    label,
    h("input", { name, ...attrs }),
  );
}

export function badge(status: "verified" | "tampered", testId: string): HTMLElement {
  return h("span", { class: `badge badge--${status}`, "data-testid": testId }, status);
}

export function renderBanner(app: DashboardApp): HTMLElement | null {
  if (!app.state.banner) return null;
  return h("div", { class: "banner", "data-testid": "banner" }, app.state.banner);
}

export function renderLogin(app: DashboardApp): HTMLElement {
  return h(
    "div",
    { class: "screen screen--login" },
    h("h1", {}, "Health records"),
    h(
      "form",
      {
        class: "login-form",
        onsubmit: ((e: Event) => {
          e.preventDefault();
          app.submitLogin(e.currentTarget as HTMLFormElement);
        }) as EventListener,
      },
      field("phone", "Phone number"),
      field("password", "Password", { type: "password" }),
      h("button", { class: "login-submit", type: "submit" }, "Sign in"),
    ),
    h(
      "button",
      { class: "goto-register", onclick: (() => app.gotoRegister()) as EventListener },
      "Create an account",
    ),
  );
}

export function renderRegister(app: DashboardApp): HTMLElement {
  return h(
    "div",
    { class: "screen screen--register" },
    h("h1", {}, "Create an account"),
    h(
      "form",
      {
        class: "register-form",
        onsubmit: ((e: Event) => {
          e.preventDefault();
          app.submitRegister(e.currentTarget as HTMLFormElement);
        }) as EventListener,
      },
      h(
        "label",
        { class: "field" },
        "Role",
        h(
          "select",
          { name: "role" },
          h("option", { value: "DO" }, "Patient (data owner)"),
          h("option", { value: "DU" }, "Doctor (data user)"),
        ),
      ),
      field("name", "Real name"),
      field("phone", "Phone number"),
      field("password", "Password", { type: "password" }),
      field("institution", "Institution code (doctors only)"),
      h("button", { class: "register-submit", type: "submit" }, "Register"),
    ),
    h(
      "button",
      { class: "goto-login", onclick: (() => app.gotoLogin()) as EventListener },
      "Back to sign-in",
    ),
  );
}

function sectionRecords(app: DashboardApp): HTMLElement {
  const rows = (app.state.records ?? []).map((r) =>
    h(
      "tr",
      { "data-testid": "record-row" },
      h("td", {}, String(r.entity_id ?? "")),
      h("td", {}, String(r.name ?? "")),
      h("td", {}, String(r.health_code ?? "")),
      h("td", {}, String(r.nucleic_acid_result ?? "")),
      h("td", {}, String(r.updated_at ?? "")),
      h("td", {}, r.block != null ? `block ${r.block}` : ""),
    ),
  );
  return section(
    "Query records",
    h(
      "form",
      {
        class: "query-form",
        onsubmit: ((e: Event) => {
          e.preventDefault();
          app.queryLatest(e.currentTarget as HTMLFormElement);
        }) as EventListener,
      },
      field("cert_no", "Certificate no."),
      field("qname", "Name"),
      h("button", { class: "query-latest", type: "submit" }, "Latest"),
    ),
    h(
      "form",
      {
        class: "history-form",
        onsubmit: ((e: Event) => {
          e.preventDefault();
          app.queryHistory(e.currentTarget as HTMLFormElement);
        }) as EventListener,
      },
      field("entity", "Entity id"),
      h("button", { class: "query-history", type: "submit" }, "History"),
    ),
    app.state.recordsTitle ? h("h3", {}, app.state.recordsTitle) : null,
    h(
      "table",
      { "data-testid": "records" },
      h(
        "thead",
        {},
        h(
          "tr",
          {},
          h("th", {}, "Entity"),
          h("th", {}, "Name"),
          h("th", {}, "Health code"),
          h("th", {}, "Nucleic acid"),
          h("th", {}, "Updated"),
          h("th", {}, "Where"),
        ),
      ),
      h("tbody", {}, ...rows),
    ),
  );
}

function sectionRecordUpload(app: DashboardApp): HTMLElement {
  return section(
    "Upload a public record",
    h(
      "form",
      {
        class: "record-form",
        onsubmit: ((e: Event) => {
          e.preventDefault();
          app.submitRecord(e.currentTarget as HTMLFormElement);
        }) as EventListener,
      },
      field("entity", "Entity id (national ID)"),
      field("cert_no", "Certificate no."),
      field("rname", "Name", { value: app.state.session?.name ?? "" }),
      field("birth_day", "Birth date", { value: "1990-01-01" }),
      h(
        "label",
        { class: "field" },
        "Health code",
        h(
          "select",
          { name: "health_code" },
          h("option", { value: "green" }, "green"),
          h("option", { value: "yellow" }, "yellow"),
          h("option", { value: "red" }, "red"),
        ),
      ),
      h(
        "label",
        { class: "field" },
        "Nucleic acid result",
        h(
          "select",
          { name: "nucleic_acid_result" },
          h("option", { value: "negative" }, "negative"),
          h("option", { value: "positive" }, "positive"),
          h("option", { value: "pending" }, "pending"),
        ),
      ),
      h("button", { class: "record-submit", type: "submit" }, "Add / update"),
    ),
    app.state.lastTx
      ? h("p", { "data-testid": "record-status" }, app.state.lastTx)
      : null,
  );
}

function sectionPrivateUpload(app: DashboardApp): HTMLElement {
  return section(
    "Upload private documents",
    h("p", {}, "Documents are encrypted in this window before anything leaves it."),
    h(
      "form",
      {
        class: "private-form",
        onsubmit: ((e: Event) => {
          e.preventDefault();
          app.submitPrivate(e.currentTarget as HTMLFormElement);
        }) as EventListener,
      },
      field("entity", "Entity id"),
      field("doc_id", "Document id"),
      h(
        "label",
        { class: "field" },
        "Content",
        h("textarea", { name: "content", rows: "4" }),
      ),
      field("keywords", "Keywords (comma-separated)"),
      h("button", { class: "private-submit", type: "submit" }, "Encrypt and upload"),
    ),
    app.state.privateStatus
      ? h("p", { "data-testid": "private-status" }, app.state.privateStatus)
      : null,
  );
}

function requestRow(app: DashboardApp, r: Json, mine: boolean): HTMLElement {
  const status = String(r.status);
  const cells: Child[] = [
    h("span", { class: "req-entity" }, String(r.entity_id)),
    h("span", { class: "req-phone" }, mine ? "" : `from ${r.requester_phone}`),
    h("span", { class: "req-window" }, `${r.start} .. ${r.end}`),
    h("span", { class: "req-status", "data-status": status }, status),
  ];
  if (mine && status === "granted" && r.granted_scope) {
    const scope = r.granted_scope as { trapdoors?: string[] };
    for (const tag of scope.trapdoors ?? []) {
      cells.push(h("code", { class: "granted-tag", "data-testid": "granted-tag" }, tag));
    }
  }
  if (!mine && status === "pending") {
    cells.push(
      h("input", { class: "approve-keywords", placeholder: "keywords to allow" }),
      h("input", { class: "approve-start", value: String(r.start) }),
      h("input", { class: "approve-end", value: String(r.end) }),
      h(
        "button",
        {
          class: "approve-btn",
          onclick: ((e: Event) =>
            app.approve(String(r.request_id), (e.currentTarget as HTMLElement).closest(".request-row")!)) as EventListener,
        },
        "Approve",
      ),
      h(
        "button",
        {
          class: "deny-btn",
          onclick: (() => app.deny(String(r.request_id))) as EventListener,
        },
        "Deny",
      ),
    );
  }
  return h(
    "div",
    { class: "request-row", "data-request": String(r.request_id), "data-testid": mine ? "outbox-row" : "inbox-row" },
    ...cells,
  );
}

function sectionInbox(app: DashboardApp): HTMLElement {
  const rows = app.state.inbox.map((r) => requestRow(app, r, false));
  return section(
    "Share requests",
    h(
      "button",
      { class: "poll-btn", onclick: (() => app.poll()) as EventListener },
      "Refresh",
    ),
    h("div", { "data-testid": "inbox" }, ...(rows.length ? rows : [h("p", {}, "No requests.")])),
  );
}

function sectionOutbox(app: DashboardApp): HTMLElement {
  const rows = app.state.outbox.map((r) => requestRow(app, r, true));
  return section(
    "My access requests",
    h(
      "form",
      {
        class: "request-form",
        onsubmit: ((e: Event) => {
          e.preventDefault();
          app.submitRequest(e.currentTarget as HTMLFormElement);
        }) as EventListener,
      },
      field("entity", "Entity id"),
      field("start", "Window start (epoch s)", { value: String(app.nowSec()) }),
      field("end", "Window end (epoch s)", { value: String(app.nowSec() + 3600) }),
      h("button", { class: "request-submit", type: "submit" }, "Request access"),
    ),
    h(
      "button",
      { class: "poll-btn", onclick: (() => app.poll()) as EventListener },
      "Refresh",
    ),
    h("div", { "data-testid": "outbox" }, ...(rows.length ? rows : [h("p", {}, "No requests yet.")])),
  );
}

function sectionDocuments(app: DashboardApp): HTMLElement {
  const owner = Boolean(app.client?.keys.sse);
  const results: HTMLElement[] = [];
  const sr = app.state.searchResults;
  if (sr) {
    for (let i = 0; i < sr.docIds.length; i++) {
      const objectId = sr.objectIds[i];
      results.push(
        h(
          "div",
          { class: "search-result", "data-testid": "search-result", "data-object": objectId },
          h("span", {}, sr.docIds[i]),
          h("code", {}, objectId),
          h(
            "button",
            { class: "fetch-btn", onclick: (() => app.fetchDoc(objectId)) as EventListener },
            "Fetch and verify",
          ),
        ),
      );
    }
    if (!sr.docIds.length) results.push(h("p", { "data-testid": "search-empty" }, "No matches."));
  }
  return section(
    owner ? "Search my documents" : "Search shared documents",
    h(
      "form",
      {
        class: "search-form",
        onsubmit: ((e: Event) => {
          e.preventDefault();
          app.searchDocs(e.currentTarget as HTMLFormElement);
        }) as EventListener,
      },
      field("entity", "Entity id"),
      field("term", owner ? "Keyword" : "Search tag (from the granted request)"),
      h("button", { class: "search-submit", type: "submit" }, "Search"),
    ),
    ...results,
  );
}

function sectionFetched(app: DashboardApp): HTMLElement | null {
  const f = app.state.fetched;
  if (!f) return null;
  const allVerified = f.chunkStatus.every((s) => s === "verified");
  return section(
    `Document ${f.docId}`,
    h(
      "div",
      { class: "proof-line" },
      "Integrity: ",
      badge(allVerified ? "verified" : "tampered", "badge-overall"),
      ...f.chunkStatus.map((s, i) => badge(s, `badge-chunk-${i}`)),
    ),
    h(
      "pre",
      { "data-testid": "plaintext" },
      f.plaintext ?? "(decryption failed: stored data did not authenticate)",
    ),
    h(
      "button",
      { class: "reverify-btn", onclick: (() => app.fetchDoc(f.objectId)) as EventListener },
      "Re-fetch and verify",
    ),
  );
}

export function renderDashboard(app: DashboardApp): HTMLElement {
  const session = app.state.session!;
  const isOwner = session.role === "DO";
  const sections: (HTMLElement | null)[] = [
    h(
      "header",
      {},
      h("span", { "data-testid": "whoami" }, `${session.name} · ${session.role}`),
      h("button", { class: "logout", onclick: (() => app.logout()) as EventListener }, "Sign out"),
    ),
    sectionRecords(app),
  ];
  if (isOwner) {
    sections.push(sectionRecordUpload(app), sectionPrivateUpload(app), sectionInbox(app));
  } else {
    sections.push(sectionOutbox(app));
  }
  sections.push(sectionDocuments(app), sectionFetched(app));
  return h("div", { class: `screen screen--dashboard role-${session.role}` }, ...sections);
}
