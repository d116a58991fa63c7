/**
 * End-to-end acceptance: a scripted browser session (synthetic key events)
 * against the real Python service.
 *
 * Verifies that the session completes, the exported CSV has an exact 50 ms
 * cadence, offline evaluation of that CSV reproduces the live score card,
 * and every message the UI emitted was schema-valid.
 */
import { spawn, spawnSync, ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync, mkdirSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { ControlLoop } from "../src/control.js";
import { csvSampleTimes, expectedCsvRows } from "../src/csv.js";
import { KeyState } from "../src/input.js";
import { outgoingIssues } from "../src/protocol.js";
import { TeleopSession } from "../src/session.js";
import { Connection, SocketLike } from "../src/wire.js";

const REPO_ROOT = join(__dirname, "..", "..");
const PYTHON = process.env.NAVBENCH_PYTHON ?? "python3";

function py(args: string[], timeoutMs = 240_000) {
  const result = spawnSync(PYTHON, ["-m", "navbench.cli", ...args], {
    cwd: REPO_ROOT,
    encoding: "utf-8",
    timeout: timeoutMs,
  });
  if (result.status !== 0) {
    throw new Error(
      `navbench ${args[0]} failed (${result.status}): ${result.stderr}\n${result.stdout}`,
    );
  }
  return result.stdout;
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const server = createServer();
    server.listen(0, "127.0.0.1", () => {
      const address = server.address();
      if (typeof address === "object" && address) {
        const port = address.port;
        server.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

function wsFactory(url: string): SocketLike {
  const socket = new WebSocket(url);
  const like: SocketLike = {
    send: (data) => socket.send(data),
    close: () => socket.close(),
    onmessage: null,
    onopen: null,
    onclose: null,
    onerror: null,
  };
  socket.on("open", () => like.onopen?.());
  socket.on("message", (data) => like.onmessage?.({ data: data.toString() }));
  socket.on("close", () => like.onclose?.());
  socket.on("error", (err) => like.onerror?.(err));
  return like;
}

function waitFor(child: ChildProcess, marker: string, timeoutMs = 60_000): Promise<void> {
  return new Promise((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(
      () => reject(new Error(`timed out waiting for ${marker}; got: ${buffer}`)),
      timeoutMs,
    );
    child.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      if (buffer.includes(marker)) {
        clearTimeout(timer);
        resolve();
      }
    });
    child.on("exit", (code) => {
      if (!buffer.includes(marker)) {
        clearTimeout(timer);
        reject(new Error(`service exited early (${code}): ${buffer}`));
      }
    });
  });
}

const delay = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

describe("scripted teleop session against the real service", () => {
  let work: string;
  let scenesDir: string;
  let datasetDir: string;
  let sessionDir: string;
  let episodeId: string;
  let wsPort: number;
  let service: ChildProcess | null = null;

  beforeAll(async () => {
    work = mkdtempSync(join(tmpdir(), "teleop-e2e-"));
    scenesDir = join(work, "scenes");
    datasetDir = join(work, "dataset");
    sessionDir = join(work, "session");
    py(["gen-scenes", "--count", "3", "--seed", "800", "--out", scenesDir]);
    py([
      "gen-episodes", "--scenes", scenesDir, "--seed", "4",
      "--per-scene", "1", "--out", datasetDir,
    ]);
    const manifest = JSON.parse(readFileSync(join(datasetDir, "manifest.json"), "utf-8"));
    const testEpisodes: string[] = manifest.splits.test.episodes;
    episodeId = testEpisodes.find((id) => id.includes(":goal:")) ?? testEpisodes[0];
    wsPort = await freePort();
    const tcpPort = await freePort();
    service = spawn(
      PYTHON,
      [
        "-m", "navbench.cli", "human-session",
        "--dataset", datasetDir, "--scenes", scenesDir,
        "--episode", episodeId, "--mode", "telhop",
        "--listen", `127.0.0.1:${tcpPort}`,
        "--ws-listen", `127.0.0.1:${wsPort}`,
        "--out", sessionDir, "--timeout", "240",
      ],
      { cwd: REPO_ROOT },
    );
    service.stderr!.on("data", () => undefined);
    await waitFor(service, "websocket on ");
  }, 240_000);

  afterAll(() => {
    service?.kill();
  });

  it("completes an episode and the exported CSV scores identically offline", async () => {
    const conn = new Connection(wsFactory);
    const session = new TeleopSession(conn);
    const keys = new KeyState();
    const loop = new ControlLoop(session, keys);

    const connected = await session.connect(`ws://127.0.0.1:${wsPort}`, episodeId);
    expect(connected).toBe(true);
    expect(session.view.phase).toBe("instruction");
    expect(session.view.scene?.rooms.length).toBeGreaterThan(0);
    session.beginDriving();

    // synthetic key events: rotate until the forward ray is open, drive
    // 1 s, then repeat a few wander cycles and stop.
    const forwardRange = () => {
      const scan = session.view.observation!.range_scan;
      return scan.find(([bearing]) => bearing === 0)![1];
    };
    for (let cycle = 0; cycle < 4 && session.view.phase === "driving"; cycle++) {
      let spins = 0;
      while (forwardRange() < 1.6 && spins < 24 && session.view.phase === "driving") {
        keys.keyDown("KeyA");
        await loop.tick();
        keys.keyUp("KeyA");
        spins += 1;
      }
      const before = session.view.observation!.pose;
      keys.keyDown("KeyW");
      for (let i = 0; i < 10 && session.view.phase === "driving"; i++) {
        await loop.tick();
        await delay(5);
      }
      keys.keyUp("KeyW");
      const after = session.view.observation!.pose;
      if (cycle === 0 && forwardRange() > 1.2) {
        // kinematic sanity: ~max_linear_speed x 1 s of open-space driving
        const moved = Math.hypot(after[0] - before[0], after[1] - before[1]);
        expect(moved).toBeGreaterThan(0.5);
        expect(moved).toBeLessThan(1.05);
      }
    }
    keys.keyDown("Space");
    await loop.tick();

    expect(session.view.phase).toBe("done");
    expect(session.view.doneReason).toBe("stopped");
    const card = session.view.scoreCard!;
    expect(card).not.toBeNull();

    // exact 50 ms cadence and the documented row count
    const csv = session.view.trajectoryCsv!;
    const times = csvSampleTimes(csv);
    for (let i = 1; i < times.length; i++) {
      expect(Math.abs(times[i] - times[i - 1] - 0.05)).toBeLessThan(1e-9);
    }
    expect(times.length).toBe(expectedCsvRows(times[times.length - 1]));

    // the UI only ever emitted schema-valid messages
    expect(conn.sentLog.length).toBeGreaterThan(10);
    for (const msg of conn.sentLog) {
      expect(outgoingIssues(msg)).toEqual([]);
    }

    // the service-side log matches the exported CSV byte for byte
    const stem = episodeId.replace(/[^A-Za-z0-9._-]/g, "_");
    const serverCsv = readFileSync(join(sessionDir, `${stem}.csv`), "utf-8");
    expect(serverCsv).toBe(csv);

    // offline eval of the exported CSV equals the live score card
    const trajDir = join(work, "trajs");
    mkdirSync(trajDir, { recursive: true });
    writeFileSync(join(trajDir, `${stem}.csv`), csv);
    const reportPath = join(work, "offline.json");
    py([
      "eval", "--dataset", datasetDir, "--scenes", scenesDir,
      "--trajectories", trajDir, "--report", reportPath,
    ]);
    const report = JSON.parse(readFileSync(reportPath, "utf-8"));
    const entry = report.per_episode.find(
      (e: { episode_id: string }) => e.episode_id === episodeId,
    );
    expect(entry).toBeDefined();
    for (const key of ["SR", "OSR", "SPL", "NE", "nDTW", "TL"] as const) {
      expect(entry[key]).toBe(card[key]);
    }
    conn.close();
  }, 240_000);
});
