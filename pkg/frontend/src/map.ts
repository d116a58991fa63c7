/**
 * Top-down map renderer.
 *
 * A pure function of the session view: walls from room footprints with
 * door openings, object footprints with labels, the 12-ray range scan,
 * and the agent disc at the last received observation pose. The
 * reference-path overlay only draws when the debug toggle is on.
 *
 * Draws against a minimal 2D-context surface so tests can record and
 * replay the call stream without a real canvas.
 */
import { EpisodeHeader, ObservationPayload, SceneDoc } from "./protocol.js";

/** The slice of the session view the renderer reads. */
export interface SessionViewLike {
  scene: SceneDoc | null;
  episode: EpisodeHeader | null;
  observation: ObservationPayload | null;
  showReferencePath: boolean;
}

export interface Surface {
  fillStyle: string;
  strokeStyle: string;
  lineWidth: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
}

export const COLORS = {
  background: "#10141a",
  floor: "#1d2530",
  wall: "#8fa3bf",
  door: "#1d2530",
  object: "#3d5a80",
  objectOnTop: "#6d8fb5",
  label: "#c9d6e8",
  scan: "rgba(120, 220, 160, 0.35)",
  agent: "#78dca0",
  heading: "#10141a",
  referencePath: "#e3b341",
};

export interface MapTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
  height: number;
}

/** World meters to canvas pixels (y flipped so +y points up). */
export function fitTransform(
  scene: SceneDoc,
  width: number,
  height: number,
  margin = 12,
): MapTransform {
  const w = scene.bounds.max[0] - scene.bounds.min[0];
  const h = scene.bounds.max[1] - scene.bounds.min[1];
  const scale = Math.min((width - 2 * margin) / w, (height - 2 * margin) / h);
  return {
    scale,
    offsetX: margin - scene.bounds.min[0] * scale,
    offsetY: margin - scene.bounds.min[1] * scale,
    height,
  };
}

export function toPixel(t: MapTransform, x: number, y: number): [number, number] {
  return [x * t.scale + t.offsetX, t.height - (y * t.scale + t.offsetY)];
}

export function renderMap(
  view: SessionViewLike,
  ctx: Surface,
  width: number,
  height: number,
): void {
  ctx.fillStyle = COLORS.background;
  ctx.clearRect(0, 0, width, height);
  ctx.fillRect(0, 0, width, height);
  const scene = view.scene;
  if (!scene) {
    return;
  }
  const t = fitTransform(scene, width, height);

  // floors
  ctx.fillStyle = COLORS.floor;
  for (const room of scene.rooms) {
    const [x0, y0] = toPixel(t, room.footprint.min[0], room.footprint.max[1]);
    ctx.fillRect(
      x0,
      y0,
      (room.footprint.max[0] - room.footprint.min[0]) * t.scale,
      (room.footprint.max[1] - room.footprint.min[1]) * t.scale,
    );
  }
  // walls, then door openings drawn in floor color over them
  ctx.strokeStyle = COLORS.wall;
  ctx.lineWidth = 3;
  for (const room of scene.rooms) {
    const [x0, y0] = toPixel(t, room.footprint.min[0], room.footprint.max[1]);
    ctx.strokeRect(
      x0,
      y0,
      (room.footprint.max[0] - room.footprint.min[0]) * t.scale,
      (room.footprint.max[1] - room.footprint.min[1]) * t.scale,
    );
  }
  ctx.strokeStyle = COLORS.door;
  ctx.lineWidth = 5;
  for (const room of scene.rooms) {
    for (const [p0, p1] of room.doors) {
      ctx.beginPath();
      ctx.moveTo(...toPixel(t, p0[0], p0[1]));
      ctx.lineTo(...toPixel(t, p1[0], p1[1]));
      ctx.stroke();
    }
  }

  // objects with labels
  ctx.font = "10px sans-serif";
  for (const obj of scene.objects) {
    ctx.fillStyle = obj.is_obstacle ? COLORS.object : COLORS.objectOnTop;
    if (obj.footprint.kind === "rect") {
      const [x0, y0] = toPixel(t, obj.footprint.min[0], obj.footprint.max[1]);
      ctx.fillRect(
        x0,
        y0,
        (obj.footprint.max[0] - obj.footprint.min[0]) * t.scale,
        (obj.footprint.max[1] - obj.footprint.min[1]) * t.scale,
      );
      ctx.fillStyle = COLORS.label;
      ctx.fillText(obj.label, x0 + 2, y0 + 10);
    } else {
      const [cx, cy] = toPixel(t, obj.footprint.center[0], obj.footprint.center[1]);
      ctx.beginPath();
      ctx.arc(cx, cy, obj.footprint.radius * t.scale, 0, 2 * Math.PI);
      ctx.fill();
      ctx.fillStyle = COLORS.label;
      ctx.fillText(obj.label, cx + 3, cy - 3);
    }
  }

  // optional reference-path overlay (off by default: study fairness)
  if (view.showReferencePath && view.episode) {
    const path = view.episode.reference_path;
    if (path.length > 1) {
      ctx.strokeStyle = COLORS.referencePath;
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(...toPixel(t, path[0][0], path[0][1]));
      for (const [x, y] of path) {
        ctx.lineTo(...toPixel(t, x, y));
      }
      ctx.stroke();
    }
  }

  // range scan and the agent at the latest observation pose
  const obs = view.observation;
  if (!obs || !view.episode) {
    return;
  }
  const [ax, ay] = toPixel(t, obs.pose[0], obs.pose[1]);
  const yaw = obs.pose[2];
  ctx.strokeStyle = COLORS.scan;
  ctx.lineWidth = 1;
  for (const [bearing, range] of obs.range_scan) {
    const wx = obs.pose[0] + range * Math.cos(yaw + bearing);
    const wy = obs.pose[1] + range * Math.sin(yaw + bearing);
    ctx.beginPath();
    ctx.moveTo(ax, ay);
    ctx.lineTo(...toPixel(t, wx, wy));
    ctx.stroke();
  }
  ctx.fillStyle = COLORS.agent;
  ctx.beginPath();
  ctx.arc(ax, ay, view.episode.agent.radius * t.scale, 0, 2 * Math.PI);
  ctx.fill();
  ctx.strokeStyle = COLORS.heading;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(ax, ay);
  const hx = obs.pose[0] + view.episode.agent.radius * Math.cos(yaw);
  const hy = obs.pose[1] + view.episode.agent.radius * Math.sin(yaw);
  ctx.lineTo(...toPixel(t, hx, hy));
  ctx.stroke();
}
