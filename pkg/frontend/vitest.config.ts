import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    globals: true,
    include: ["tests/**/*.test.ts"],
    // 1 CPU sandbox: threads only add overhead
    pool: "forks",
    poolOptions: { forks: { singleFork: true } },
  },
});
