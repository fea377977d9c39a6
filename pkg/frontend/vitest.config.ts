import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    testTimeout: 120_000,
    hookTimeout: 60_000,
    // the solve test talks to a real server process; keep files serial
    fileParallelism: false,
  },
});
