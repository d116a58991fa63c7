/**
 * 10 Hz control loop: each tick turns the held-key state into one
 * Continuous{v, omega, dt = 0.1 s} action, or STOP when the stop key was
 * pressed. Idle keys send nothing. Ticks are skipped while a previous
 * action is still in flight so a slow link cannot build a backlog.
 */
import { KeyState } from "./input.js";
import { TeleopSession } from "./session.js";

export const CONTROL_HZ = 10;
export const CONTROL_DT = 1 / CONTROL_HZ;

export class ControlLoop {
  private timer: ReturnType<typeof setInterval> | null = null;
  private busy = false;

  constructor(
    private readonly session: TeleopSession,
    private readonly keys: KeyState,
  ) {}

  start(): void {
    if (this.timer === null) {
      this.timer = setInterval(() => void this.tick(), 1000 / CONTROL_HZ);
    }
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** One control tick; exposed for deterministic tests. */
  async tick(): Promise<void> {
    if (this.busy || !this.session.driving) {
      return;
    }
    const episode = this.session.view.episode;
    if (episode === null) {
      return;
    }
    this.busy = true;
    try {
      if (this.keys.consumeStop()) {
        await this.session.sendStop();
        return;
      }
      const cmd = this.keys.command(episode.agent);
      if (cmd !== null) {
        await this.session.sendCommand(cmd.v, cmd.omega, CONTROL_DT);
      }
    } finally {
      this.busy = false;
    }
  }
}
