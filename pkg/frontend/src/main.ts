/**
 * Page wiring: connection form, instruction modal, canvas map, dialogue
 * box, and session export. Keyboard control runs at 10 Hz while driving.
 */
import { ControlLoop } from "./control.js";
import { csvSampleTimes, downloadTextFile, scoreCardText } from "./csv.js";
import { KeyState } from "./input.js";
import { renderMap, Surface } from "./map.js";
import { instructionText, TeleopSession } from "./session.js";
import { Connection, SocketLike } from "./wire.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function boot(): void {
  const canvas = el<HTMLCanvasElement>("map");
  const ctx = canvas.getContext("2d") as unknown as Surface;
  const status = el<HTMLDivElement>("status");
  const modal = el<HTMLDivElement>("modal");
  const modalText = el<HTMLDivElement>("modal-text");
  const scorePanel = el<HTMLPreElement>("score");
  const transcript = el<HTMLDivElement>("transcript");
  const oracleRow = el<HTMLDivElement>("oracle-row");
  const oracleInput = el<HTMLInputElement>("oracle-input");

  const conn = new Connection((url) => new WebSocket(url) as unknown as SocketLike);
  const session = new TeleopSession(conn);
  const keys = new KeyState();
  const loop = new ControlLoop(session, keys);

  session.onChange = (view) => {
    renderMap(view, ctx, canvas.width, canvas.height);
    status.textContent =
      view.error !== null
        ? `error: ${view.error} (you can retry)`
        : `${view.phase}${view.doneReason ? " (" + view.doneReason + ")" : ""}`;
    modal.style.display = view.phase === "instruction" ? "flex" : "none";
    if (view.episode && view.phase === "instruction") {
      modalText.textContent = instructionText(view.episode);
    }
    oracleRow.style.display = session.oracleEnabled ? "flex" : "none";
    transcript.innerHTML = "";
    for (const entry of view.transcript) {
      const line = document.createElement("div");
      line.textContent = `${entry.role}: ${entry.text}`;
      transcript.appendChild(line);
    }
    if (view.scoreCard && view.episode) {
      scorePanel.textContent = scoreCardText(
        view.episode.episode_id,
        view.doneReason ?? "",
        view.scoreCard,
      );
      if (view.trajectoryCsv) {
        const times = csvSampleTimes(view.trajectoryCsv);
        scorePanel.textContent += `samples: ${times.length} at 50 ms\n`;
      }
    }
  };

  el<HTMLButtonElement>("connect").addEventListener("click", () => {
    const url = el<HTMLInputElement>("url").value;
    const episodeId = el<HTMLInputElement>("episode").value;
    void session.connect(url, episodeId);
  });
  el<HTMLButtonElement>("start").addEventListener("click", () => {
    session.beginDriving();
    loop.start();
    canvas.focus();
  });
  el<HTMLButtonElement>("toggle-path").addEventListener("click", () => {
    session.toggleReferencePath();
  });
  el<HTMLButtonElement>("export").addEventListener("click", () => {
    const view = session.view;
    if (view.trajectoryCsv && view.scoreCard && view.episode) {
      const stem = view.episode.episode_id.replace(/[^A-Za-z0-9._-]/g, "_");
      downloadTextFile(`${stem}.csv`, view.trajectoryCsv);
      downloadTextFile(
        `${stem}.score.txt`,
        scoreCardText(view.episode.episode_id, view.doneReason ?? "", view.scoreCard),
      );
    }
  });
  el<HTMLButtonElement>("oracle-send").addEventListener("click", () => {
    const text = oracleInput.value.trim();
    if (text) {
      void session.askOracle(text);
      oracleInput.value = "";
    }
  });

  window.addEventListener("keydown", (event) => {
    if (document.activeElement === oracleInput) return;
    keys.keyDown(event.code);
    if (session.driving) event.preventDefault();
  });
  window.addEventListener("keyup", (event) => keys.keyUp(event.code));
  window.addEventListener("blur", () => keys.clear());
}

if (typeof document !== "undefined") {
  window.addEventListener("DOMContentLoaded", boot);
}
