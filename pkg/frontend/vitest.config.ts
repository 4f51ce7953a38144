import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the e2e suite boots the real orchestrator + simulated fleet
    testTimeout: 30_000,
    hookTimeout: 90_000,
  },
});
