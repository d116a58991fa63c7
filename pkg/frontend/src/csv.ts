/**
 * Session export: the service-produced 50 ms trajectory CSV plus a
 * per-episode score card.
 */
import { ScoreCard } from "./protocol.js";

export function scoreCardText(episodeId: string, reason: string, card: ScoreCard): string {
  const lines = [
    `episode_id: ${episodeId}`,
    `reason: ${reason}`,
    `SR: ${card.SR}`,
    `SPL: ${card.SPL.toFixed(6)}`,
    `NE: ${card.NE.toFixed(6)}`,
    `nDTW: ${card.nDTW.toFixed(6)}`,
    `TL: ${card.TL.toFixed(6)}`,
  ];
  return lines.join("\n") + "\n";
}

/** Count of trajectory rows a CSV should carry: duration/0.05 plus t=0. */
export function expectedCsvRows(durationSeconds: number): number {
  return Math.ceil(durationSeconds / 0.05) + 1;
}

export function csvSampleTimes(csv: string): number[] {
  const lines = csv.trim().split("\n");
  if (lines[0] !== "t,x,y,yaw") {
    throw new Error("unexpected CSV header");
  }
  return lines.slice(1).map((line) => Number(line.split(",")[0]));
}

/** Trigger a browser download; no-op outside the DOM. */
export function downloadTextFile(name: string, text: string): void {
  if (typeof document === "undefined") {
    return;
  }
  const blob = new Blob([text], { type: "text/plain" });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement("a");
  anchor.href = url;
  anchor.download = name;
  anchor.click();
  URL.revokeObjectURL(url);
}
