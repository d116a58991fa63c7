/**
 * In-memory fake service for unit tests: speaks the wire protocol over a
 * FakeSocket pair and integrates a toy collision-free world so control
 * kinematics are observable.
 */
import { EpisodeHeader, SceneDoc } from "../src/protocol.js";
import { SocketLike } from "../src/wire.js";

export const FAKE_SCENE: SceneDoc = {
  scene_id: "fake-scene",
  bounds: { min: [0, 0], max: [10, 8] },
  rooms: [
    {
      room_id: "r0",
      label: "kitchen",
      footprint: { min: [0, 0], max: [10, 8] },
      doors: [],
    },
  ],
  objects: [
    {
      object_id: "table_1",
      label: "table",
      footprint: { kind: "rect", min: [6, 3], max: [7.2, 4] },
      is_obstacle: true,
      base_height: 0,
      top_height: 0.75,
      room_id: "r0",
    },
    {
      object_id: "cup_1",
      label: "cup",
      footprint: { kind: "disc", center: [6.6, 3.5], radius: 0.05 },
      is_obstacle: false,
      base_height: 0.75,
      top_height: 0.85,
      room_id: "r0",
    },
  ],
};

export function fakeHeader(taskType = "coarse", oracle = false): EpisodeHeader {
  return {
    episode_id: "fake-ep",
    scene_id: "fake-scene",
    task_type: taskType,
    instruction_bundle: {
      oracle_enabled: oracle,
      coarse: {
        formal: "Proceed to the kitchen and locate the cup on the table.",
        natural: "Please head to the kitchen and find the cup on the table.",
        casual: "The cup on the table, over in the kitchen -- go find it.",
      },
    },
    success_thresh: 3.0,
    max_steps: 200,
    mode: "telhop",
    agent: {
      radius: 0.3,
      height: 1.5,
      max_linear_speed: 1.0,
      max_angular_speed: Math.PI / 2,
    },
    reference_path: [
      [1, 1],
      [3, 1],
      [5, 2],
    ],
  };
}

interface FakeState {
  x: number;
  y: number;
  yaw: number;
  t: number;
  steps: number;
  samples: [number, number, number, number][];
}

export class FakeServer {
  seq = 0;
  state: FakeState | null = null;
  readonly receivedLines: string[] = [];
  readonly knownEpisodes = new Set(["fake-ep", "fake-dialogue"]);

  handleLine(line: string): string {
    this.receivedLines.push(line);
    let msg: Record<string, unknown>;
    try {
      msg = JSON.parse(line);
    } catch {
      return this.error("malformed_json", "bad json");
    }
    const kind = msg.kind;
    const payload = (msg.payload ?? {}) as Record<string, unknown>;
    if (kind === "hello") {
      return this.reply("hello", { server: "fake", version: "1", episodes: 2 });
    }
    if (kind === "reset") {
      const id = payload.episode_id as string;
      if (!this.knownEpisodes.has(id)) {
        return this.error("unknown_episode", `episode ${id}`);
      }
      this.state = { x: 1, y: 1, yaw: 0, t: 0, steps: 0, samples: [[0, 1, 1, 0]] };
      return this.reply("observation", {
        episode: { ...fakeHeader("coarse", id === "fake-dialogue"), episode_id: id },
        scene: FAKE_SCENE,
        observation: this.observation(),
      });
    }
    if (kind === "action") {
      if (!this.state) return this.error("no_episode", "reset first");
      const action = payload.action as Record<string, unknown>;
      if (action.type === "discrete" && action.primitive === "STOP") {
        return this.done("stopped");
      }
      if (action.type === "continuous") {
        this.integrate(
          action.v as number,
          action.omega as number,
          action.dt as number,
        );
        this.state.steps += 1;
        if (this.state.steps >= 200) return this.done("step_limit");
        return this.reply("observation", { observation: this.observation() });
      }
      return this.error("bad_action", `unsupported ${String(action.type)}`);
    }
    if (kind === "oracle_query") {
      if (!this.state) return this.error("no_episode", "reset first");
      return this.reply("oracle_answer", {
        text: "The cup is on the table.",
        facts_used: ["cup_1|ON|table_1"],
        hint: { bearing_to_goal: 0.2, geodesic_remaining: 4.5 },
      });
    }
    return this.error("bad_kind", `unknown kind ${String(kind)}`);
  }

  private integrate(v: number, omega: number, dt: number): void {
    const s = this.state!;
    const n = Math.max(1, Math.round(dt / 0.05));
    for (let i = 0; i < n; i++) {
      s.yaw += omega * 0.05;
      s.x += v * 0.05 * Math.cos(s.yaw);
      s.y += v * 0.05 * Math.sin(s.yaw);
      s.t += 0.05;
      s.samples.push([s.t, s.x, s.y, s.yaw]);
    }
  }

  private observation() {
    const s = this.state!;
    const scan: [number, number][] = [];
    for (let k = 0; k < 12; k++) {
      let bearing = (k * Math.PI) / 6;
      if (bearing >= Math.PI) bearing -= 2 * Math.PI;
      scan.push([bearing, 10.0]);
    }
    return {
      pose: [s.x, s.y, s.yaw],
      range_scan: scan,
      detections: [],
      step_index: s.steps,
      collided_last_step: false,
    };
  }

  private done(reason: string): string {
    const s = this.state!;
    const csv =
      "t,x,y,yaw\n" +
      s.samples
        .map((row) => row.map((value) => value.toFixed(6)).join(","))
        .join("\n") +
      "\n";
    return this.reply("done", {
      reason,
      observation: this.observation(),
      result: {
        episode_id: "fake-ep",
        metrics: { TL: 1, NE: 0.5, SR: 1, OSR: 1, SPL: 0.98, nDTW: 0.97, CR: 0 },
        per_goal_reached: [true],
        stop_pose: [s.x, s.y, s.yaw],
        num_actions: s.steps + 1,
        num_collisions: 0,
        trajectory_csv: csv,
      },
    });
  }

  private reply(kind: string, payload: Record<string, unknown>): string {
    return JSON.stringify({
      kind,
      session_id: "fake",
      seq: ++this.seq,
      re: null,
      payload,
    });
  }

  private error(code: string, detail: string): string {
    return this.reply("error", { code, detail, offending_seq: null });
  }
}

/** SocketLike wired straight to a FakeServer (async delivery). */
export class FakeSocket implements SocketLike {
  onmessage: ((event: { data: unknown }) => void) | null = null;
  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: ((err: unknown) => void) | null = null;

  constructor(private readonly server: FakeServer) {
    queueMicrotask(() => this.onopen?.());
  }

  send(data: string): void {
    const reply = this.server.handleLine(data);
    queueMicrotask(() => this.onmessage?.({ data: reply }));
  }

  close(): void {
    queueMicrotask(() => this.onclose?.());
  }
}
