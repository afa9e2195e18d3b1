// Spawns the Python review service over a throwaway copy of the fixture
// state directory, so integration tests hit the real HTTP surface.

import { spawn, type ChildProcess } from "node:child_process";
import { cpSync, mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import type { TestProject } from "vitest/node";

const here = dirname(fileURLToPath(import.meta.url));
const fixtureState = join(here, "..", "..", "..", "tests", "fixtures", "service_state");

async function waitUntilReady(base: string, child: ChildProcess): Promise<void> {
  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      const response = await fetch(`${base}/api/v1/incidents`);
      if (response.ok) return;
    } catch {
      // not listening yet
    }
    if (child.exitCode !== null) throw new Error(`service exited with ${child.exitCode}`);
    if (Date.now() > deadline) throw new Error("service did not become ready");
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
}

export default async function setup(project: TestProject): Promise<() => void> {
  const stateDir = mkdtempSync(join(tmpdir(), "form57-review-"));
  cpSync(fixtureState, stateDir, { recursive: true });
  const port = 8730 + Math.floor(Math.random() * 500);
  const child = spawn(
    "python3",
    ["-m", "form57.cli", "serve", "--state", stateDir, "--port", String(port)],
    { stdio: "ignore" },
  );
  const base = `http://127.0.0.1:${port}`;
  try {
    await waitUntilReady(base, child);
  } catch (err) {
    child.kill();
    rmSync(stateDir, { recursive: true, force: true });
    throw err;
  }
  project.provide("baseUrl", base);
  return () => {
    child.kill();
    rmSync(stateDir, { recursive: true, force: true });
  };
}

declare module "vitest" {
  export interface ProvidedContext {
    baseUrl: string;
  }
}
