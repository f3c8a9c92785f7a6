import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    include: ['test/**/*.test.ts'],
    // the contract suite boots the real backend process once per run
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
