import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    testTimeout: 60_000,
    hookTimeout: 120_000,
    // e2e drives a live service; keep files sequential so only one server runs
    fileParallelism: false,
  },
});
