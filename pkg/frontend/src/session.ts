/**
 * Teleop session state machine.
 *
 * connect() performs the hello/reset exchange and parks in the
 * "instruction" phase: the instruction is shown modally and controls stay
 * locked until beginDriving(). Motion commands and oracle queries are only
 * legal while driving; the final action flips the view to "done" with the
 * score card and the service-produced 50 ms trajectory CSV.
 *
 * The view object is a plain snapshot: rendering consumes it read-only and
 * the rendered agent pose always equals the last received observation.
 */
import {
  EpisodeHeader,
  ObservationPayload,
  SceneDoc,
  ScoreCard,
  ServerEnvelope,
} from "./protocol.js";
import { Connection } from "./wire.js";

export type Phase = "idle" | "connecting" | "instruction" | "driving" | "done";

export interface TranscriptEntry {
  role: "user" | "oracle";
  text: string;
}

export interface SessionView {
  phase: Phase;
  error: string | null;
  episode: EpisodeHeader | null;
  scene: SceneDoc | null;
  observation: ObservationPayload | null;
  transcript: TranscriptEntry[];
  scoreCard: ScoreCard | null;
  doneReason: string | null;
  trajectoryCsv: string | null;
  /** Debug overlay; hidden by default for human-study fairness. */
  showReferencePath: boolean;
}

export function instructionText(episode: EpisodeHeader): string {
  const b = episode.instruction_bundle;
  if (b.fine) return b.fine;
  if (b.sub_instructions) return b.sub_instructions.join(" ");
  if (b.coarse) return b.coarse.natural;
  return "(no instruction)";
}

export class TeleopSession {
  readonly view: SessionView = {
    phase: "idle",
    error: null,
    episode: null,
    scene: null,
    observation: null,
    transcript: [],
    scoreCard: null,
    doneReason: null,
    trajectoryCsv: null,
    showReferencePath: false,
  };
  onChange: ((view: SessionView) => void) | null = null;

  constructor(private readonly conn: Connection) {}

  private touch(): void {
    this.onChange?.(this.view);
  }

  private fail(message: string): void {
    // connection/protocol errors surface non-fatally; the page can retry
    this.view.error = message;
    if (this.view.phase === "connecting") this.view.phase = "idle";
    this.touch();
  }

  async connect(url: string, episodeId: string): Promise<boolean> {
    this.view.phase = "connecting";
    this.view.error = null;
    this.touch();
    try {
      if (!this.conn.isOpen) {
        await this.conn.open(url);
      }
      const hello = await this.conn.request("hello");
      if (hello.kind !== "hello") {
        this.fail(`unexpected reply ${hello.kind}`);
        return false;
      }
      const reply = await this.conn.request("reset", { episode_id: episodeId });
      if (reply.kind === "error") {
        this.fail(describeError(reply));
        return false;
      }
      const payload = reply.payload as unknown as {
        episode: EpisodeHeader;
        scene: SceneDoc;
        observation: ObservationPayload;
      };
      this.view.episode = payload.episode;
      this.view.scene = payload.scene;
      this.view.observation = payload.observation;
      this.view.transcript = [];
      this.view.scoreCard = null;
      this.view.doneReason = null;
      this.view.trajectoryCsv = null;
      this.view.phase = "instruction";
      this.touch();
      return true;
    } catch (err) {
      this.fail(String(err instanceof Error ? err.message : err));
      return false;
    }
  }

  /** Dismiss the instruction modal and unlock the controls. */
  beginDriving(): void {
    if (this.view.phase === "instruction") {
      this.view.phase = "driving";
      this.touch();
    }
  }

  get driving(): boolean {
    return this.view.phase === "driving";
  }

  get oracleEnabled(): boolean {
    return this.view.episode?.instruction_bundle.oracle_enabled ?? false;
  }

  toggleReferencePath(): void {
    this.view.showReferencePath = !this.view.showReferencePath;
    this.touch();
  }

  /** Send one velocity command (the 10 Hz control loop's dt is 0.1 s). */
  async sendCommand(v: number, omega: number, dt = 0.1): Promise<void> {
    if (!this.driving) return;
    await this.dispatch({ type: "continuous", v, omega, dt });
  }

  /** Issue STOP, ending the episode and collecting the score card. */
  async sendStop(): Promise<void> {
    if (!this.driving) return;
    await this.dispatch({ type: "discrete", primitive: "STOP" });
  }

  private async dispatch(action: Record<string, unknown>): Promise<void> {
    try {
      const reply = await this.conn.request("action", { action });
      this.applyReply(reply);
    } catch (err) {
      this.fail(String(err instanceof Error ? err.message : err));
    }
  }

  private applyReply(reply: ServerEnvelope): void {
    if (reply.kind === "error") {
      this.fail(describeError(reply));
      return;
    }
    const payload = reply.payload as Record<string, unknown>;
    if (payload.observation) {
      this.view.observation = payload.observation as ObservationPayload;
    }
    if (reply.kind === "done") {
      const result = payload.result as {
        metrics: ScoreCard;
        trajectory_csv: string;
      };
      this.view.scoreCard = result.metrics;
      this.view.trajectoryCsv = result.trajectory_csv;
      this.view.doneReason = String(payload.reason);
      this.view.phase = "done";
    }
    this.touch();
  }

  async askOracle(text: string): Promise<void> {
    if (!this.driving || !this.oracleEnabled) return;
    this.view.transcript.push({ role: "user", text });
    this.touch();
    try {
      const reply = await this.conn.request("oracle_query", { text });
      if (reply.kind === "error") {
        this.fail(describeError(reply));
        return;
      }
      this.view.transcript.push({
        role: "oracle",
        text: String((reply.payload as Record<string, unknown>).text),
      });
      this.touch();
    } catch (err) {
      this.fail(String(err instanceof Error ? err.message : err));
    }
  }
}

function describeError(reply: ServerEnvelope): string {
  const p = reply.payload as Record<string, unknown>;
  return `${String(p.code)}: ${String(p.detail)}`;
}
