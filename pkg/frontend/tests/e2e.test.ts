/**
 * End-to-end: spawn the real assessment service, create a two-topic toy
 * session, and drive the actual DOM console through a full judge flow —
 * one topic to Finished, a revision reflected in the R counter, and a
 * qrels export identical to the service's own.
 */

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { AssessApi } from "../src/api.js";
import { initApp, type App } from "../src/app.js";

const REPO_ROOT = path.resolve(path.dirname(fileURLToPath(import.meta.url)), "../..");
const PORT = 8900 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

// grades the "assessor" will give, per topic (everything else is 0)
const GRADES: Record<string, Record<string, number>> = {
  "1": { D01: 1, D02: 1, D03: 2, D04: 1 },
  "2": { D11: 1, D12: 1, D13: 2 },
};

let server: ChildProcess | null = null;
let workDir: string;
let fixture: Record<string, string>;

async function waitFor<T>(probe: () => T | Promise<T>, what: string,
                          timeoutMs = 15000): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const value = await probe();
      if (value) return value;
    } catch (err) {
      lastError = err;
    }
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
  throw new Error(`timed out waiting for ${what}: ${lastError ?? "condition stayed false"}`);
}

beforeAll(async () => {
  workDir = mkdtempSync(path.join(tmpdir(), "poolkit-e2e-"));
  const fixtureJson = execFileSync(
    "python3",
    ["-c",
     "import json, sys\n" +
     "from tests.synthcol import make_service_fixture\n" +
     "paths = make_service_fixture(sys.argv[1])\n" +
     "print(json.dumps({k: v for k, v in paths.items() if k != 'grades'}))",
     path.join(workDir, "fixture")],
    { cwd: REPO_ROOT, encoding: "utf-8" },
  );
  fixture = JSON.parse(fixtureJson.trim());
  server = spawn(
    "python3",
    ["-m", "poolkit.cli", "serve", "--port", String(PORT),
     "--data-dir", path.join(workDir, "data")],
    { cwd: REPO_ROOT, stdio: "ignore" },
  );
  await waitFor(async () => (await fetch(`${BASE}/sessions`)).ok, "service startup", 30000);
});

afterAll(() => {
  server?.kill();
  rmSync(workDir, { recursive: true, force: true });
});

async function createSession(): Promise<string> {
  const resp = await fetch(`${BASE}/sessions`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({
      task: "document",
      corpus: fixture.corpus,
      runs: [fixture.runA, fixture.runB],
      topics: fixture.topics,
      sparse_qrels: fixture.sparse,
      config: { first_batch: 5 },
      seed: 3,
    }),
  });
  expect(resp.ok).toBe(true);
  const payload = (await resp.json()) as { session_id: string; topics: unknown[] };
  expect(payload.topics).toHaveLength(2);
  return payload.session_id;
}

function mountApp(): { app: App; root: HTMLElement } {
  const root = document.createElement("div");
  root.id = "app";
  document.body.appendChild(root);
  const app = initApp(root, new AssessApi(BASE));
  return { app, root };
}

function counterOf(root: HTMLElement, topic: string, name: string): number {
  const row = root.querySelector(`li[data-topic="${topic}"]`);
  const cell = row?.querySelector(`[data-counter="${name}"]`);
  return Number(cell?.textContent);
}

describe("assessor console against a live service", () => {
  it("judges a topic to Finished, revises, and exports matching qrels", async () => {
    const sessionId = await createSession();
    const { app, root } = mountApp();
    await app.attach(sessionId);
    await waitFor(() => root.querySelector("#current-doc"), "first issued document");

    // judge topic 1 until the service declares it Finished
    const grades = GRADES["1"]!;
    for (let i = 0; i < 40; i++) {
      const current = root.querySelector("#current-doc")?.textContent;
      if (!current || app.flow.topic("1")?.phase === "Finished") break;
      const grade = grades[current] ?? 0;
      if (i === 1) {
        // exercise the keyboard shortcut path once
        document.dispatchEvent(new KeyboardEvent("keydown", { key: String(grade) }));
      } else {
        const button = root.querySelector<HTMLElement>(
          `[data-action="grade"][data-grade="${grade}"]`);
        expect(button).toBeTruthy();
        button!.click();
      }
      await waitFor(
        () => root.querySelector("#current-doc")?.textContent !== current
          || app.flow.topic("1")?.phase === "Finished",
        `judgment ${i} to land`);
    }
    await waitFor(() => app.flow.topic("1")?.phase === "Finished", "topic 1 Finished");
    await waitFor(() => root.querySelector("#banner:not(.hidden)"), "finish banner");
    expect(root.querySelector("#banner")?.textContent).toContain("Finished");

    // counters shown come from the service: pool 8 + batch 5 + extension 4
    await waitFor(() => counterOf(root, "1", "judged") === 17, "J counter at 17");
    expect(counterOf(root, "1", "relevant")).toBe(4);

    // auto-advance moved the assessor to topic 2 and issued its first doc
    await waitFor(() => app.flow.state.activeTopic === "2", "auto-advance to topic 2");
    const issuedForTopic2 = await waitFor(
      () => root.querySelector("#current-doc")?.textContent, "topic 2 document");

    // a reconnect resumes on the same issued document (service idempotence)
    const reconnect = mountApp();
    await reconnect.app.attach(sessionId);
    await reconnect.app.flow.selectTopic("2");
    await waitFor(() => reconnect.root.querySelector("#current-doc"), "reconnect issue");
    expect(reconnect.root.querySelector("#current-doc")?.textContent).toBe(issuedForTopic2);

    // back on topic 1: revise D04 from 1 to 0; R drops 4 -> 3 (J unchanged)
    root.querySelector<HTMLElement>(`li[data-topic="1"]`)!.click();
    await waitFor(() => root.querySelector(`tr[data-doc="D04"]`), "history row for D04");
    root.querySelector<HTMLElement>(
      `[data-action="revise"][data-doc="D04"][data-grade="0"]`)!.click();
    await waitFor(() => counterOf(root, "1", "relevant") === 3, "R counter drop");
    expect(counterOf(root, "1", "judged")).toBe(17);
    const d04 = app.flow.state.history.find((j) => j.doc_id === "D04");
    expect(d04?.grade).toBe(0);
    expect(d04?.revisions.map((r) => r.grade)).toEqual([1, 0]);

    // the export box matches the service's own qrels bytes exactly
    await app.exportQrels();
    const box = root.querySelector<HTMLTextAreaElement>("#export-box")!;
    const direct = await fetch(`${BASE}/sessions/${sessionId}/qrels`);
    expect(box.value).toBe(await direct.text());
    expect(box.dataset.partial).toBe("true"); // topic 2 is still live
    const lines = box.value.trim().split("\n");
    expect(lines).toHaveLength(17);
    expect(lines.every((line) => line.startsWith("1 0 "))).toBe(true);
    expect(lines).toContain("1 0 D04 0"); // the revision is in the export
    expect(lines).toContain("1 0 D03 2");
  }, 60000);

  it("shows grade buttons labeled from the service scale", async () => {
    const sessionId = await createSession();
    const { app, root } = mountApp();
    await app.attach(sessionId);
    await waitFor(() => root.querySelector('[data-action="grade"]'), "grade buttons");
    const labels = Array.from(
      root.querySelectorAll<HTMLElement>('[data-action="grade"]'),
    ).map((b) => b.textContent?.trim().replace(/^\d+\s*/, ""));
    expect(labels).toEqual([
      "Perfectly relevant", "Highly relevant", "Relevant", "Irrelevant",
    ]);
  }, 30000);
});
