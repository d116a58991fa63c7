/**
 * Wire protocol types and validation.
 *
 * The service speaks one JSON envelope per line (TCP/stdio) or per text
 * frame (WebSocket): {kind, session_id, seq, re, payload}. Client seq
 * values must increase strictly and every request receives exactly one
 * reply. The validators here mirror the service's action schema so the
 * client can reject an illegal message before it ever reaches the wire.
 */

export type ClientKind = "hello" | "reset" | "action" | "oracle_query";
export type ServerKind = "hello" | "observation" | "done" | "oracle_answer" | "error";

export const PRIMITIVES = ["FORWARD", "TURN_LEFT", "TURN_RIGHT", "STOP"] as const;
export type Primitive = (typeof PRIMITIVES)[number];

export interface DiscreteAction {
  type: "discrete";
  primitive: Primitive;
}

export interface ContinuousAction {
  type: "continuous";
  v: number;
  omega: number;
  dt: number;
}

export interface HopAction {
  type: "hop";
  target: [number, number];
}

export type WireAction = DiscreteAction | ContinuousAction | HopAction;

export interface ClientEnvelope {
  kind: ClientKind;
  seq: number;
  payload: Record<string, unknown>;
}

export interface ServerEnvelope {
  kind: ServerKind;
  session_id: string;
  seq: number;
  re: number | null;
  payload: Record<string, unknown>;
}

export interface ObservationPayload {
  pose: [number, number, number];
  range_scan: [number, number][];
  detections: { object_id: string; label: string; bearing: number; range: number }[];
  step_index: number;
  collided_last_step: boolean;
}

export interface AgentLimits {
  radius: number;
  height: number;
  max_linear_speed: number;
  max_angular_speed: number;
}

export interface EpisodeHeader {
  episode_id: string;
  scene_id: string;
  task_type: string;
  instruction_bundle: {
    oracle_enabled: boolean;
    fine?: string;
    coarse?: { formal: string; natural: string; casual: string };
    sub_instructions?: string[];
  };
  success_thresh: number;
  max_steps: number;
  mode: string;
  agent: AgentLimits;
  reference_path: [number, number][];
}

export interface SceneDoc {
  scene_id: string;
  bounds: { min: [number, number]; max: [number, number] };
  rooms: {
    room_id: string;
    label: string;
    footprint: { min: [number, number]; max: [number, number] };
    doors: [[number, number], [number, number]][];
  }[];
  objects: {
    object_id: string;
    label: string;
    footprint:
      | { kind: "rect"; min: [number, number]; max: [number, number] }
      | { kind: "disc"; center: [number, number]; radius: number };
    is_obstacle: boolean;
    base_height: number;
    top_height: number;
    room_id: string;
  }[];
}

export interface ScoreCard {
  SR: number;
  OSR: number;
  SPL: number;
  NE: number;
  nDTW: number;
  TL: number;
  CR: number;
}

const isFiniteNumber = (v: unknown): v is number =>
  typeof v === "number" && Number.isFinite(v);

/** Problems with an action object; empty means legal. */
export function actionIssues(action: unknown): string[] {
  if (typeof action !== "object" || action === null) {
    return ["action must be an object"];
  }
  const a = action as Record<string, unknown>;
  if (a.type === "discrete") {
    return (PRIMITIVES as readonly string[]).includes(a.primitive as string)
      ? []
      : [`unknown primitive ${String(a.primitive)}`];
  }
  if (a.type === "continuous") {
    const issues: string[] = [];
    if (!isFiniteNumber(a.v)) issues.push("v must be a finite number");
    if (!isFiniteNumber(a.omega)) issues.push("omega must be a finite number");
    if (!isFiniteNumber(a.dt) || (a.dt as number) <= 0 || (a.dt as number) > 1) {
      issues.push("dt must be in (0, 1]");
    }
    return issues;
  }
  if (a.type === "hop") {
    const t = a.target;
    if (!Array.isArray(t) || t.length !== 2 || !t.every(isFiniteNumber)) {
      return ["hop target must be [x, y]"];
    }
    return [];
  }
  return [`unknown action type ${String(a.type)}`];
}

/** Problems with an outgoing envelope; empty means legal to send. */
export function outgoingIssues(msg: unknown): string[] {
  if (typeof msg !== "object" || msg === null) {
    return ["message must be an object"];
  }
  const m = msg as Record<string, unknown>;
  const issues: string[] = [];
  if (!["hello", "reset", "action", "oracle_query"].includes(m.kind as string)) {
    issues.push(`unknown client kind ${String(m.kind)}`);
  }
  if (!Number.isInteger(m.seq)) {
    issues.push("seq must be an integer");
  }
  const payload = m.payload;
  if (typeof payload !== "object" || payload === null) {
    issues.push("payload must be an object");
    return issues;
  }
  const p = payload as Record<string, unknown>;
  if (m.kind === "reset" && typeof p.episode_id !== "string") {
    issues.push("reset payload needs episode_id");
  }
  if (m.kind === "action") {
    issues.push(...actionIssues(p.action));
  }
  if (m.kind === "oracle_query" && typeof p.text !== "string") {
    issues.push("oracle_query payload needs text");
  }
  return issues;
}

/** Parse and shape-check a server reply; throws on malformed input. */
export function parseServerMessage(text: string): ServerEnvelope {
  const doc = JSON.parse(text) as Record<string, unknown>;
  const kinds: ServerKind[] = ["hello", "observation", "done", "oracle_answer", "error"];
  if (!kinds.includes(doc.kind as ServerKind)) {
    throw new Error(`unexpected server kind ${String(doc.kind)}`);
  }
  if (!Number.isInteger(doc.seq) || typeof doc.payload !== "object" || doc.payload === null) {
    throw new Error("malformed server envelope");
  }
  return doc as unknown as ServerEnvelope;
}
