import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    globalSetup: ["./tests/globalSetup.ts"],
    environment: "node",
    testTimeout: 60_000,
    hookTimeout: 120_000,
    // The integration suites share one spawned gateway; run files serially
    // so flows do not interleave on the same accounts.
    fileParallelism: false,
  },
});
