// Browser entry point. Serve the repository's index.html next to the
// compiled dist/ tree, run the gateway with --cors-origin for this
// page's origin, and pass the API address as ?api=http://host:port.

import { DashboardApp } from "./app.js";

function apiBase(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  return fromQuery ?? "http://127.0.0.1:9000";
}

const root = document.getElementById("app");
if (root) {
  const app = new DashboardApp(root, { baseUrl: apiBase() });
  // Poll the share inbox/outbox; there is no server push channel.
  setInterval(() => {
    if (app.state.screen === "dashboard") void app.poll();
  }, 4000);
}
