import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the loop test boots a real segmentation server
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
