import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    globalSetup: ["tests/setup/service.ts"],
    // the spawned review service is shared; keep integration tests serial
    fileParallelism: false,
    testTimeout: 30000,
  },
});
