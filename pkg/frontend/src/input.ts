/**
 * Keyboard state and the key-to-velocity mapping.
 *
 * Held forward/back keys command +/- max linear speed, left/right +/- max
 * angular speed; opposing keys cancel. The stop key latches until
 * consumed so a brief tap between control ticks still registers.
 */
import { AgentLimits } from "./protocol.js";

export const FORWARD_KEYS = ["KeyW", "ArrowUp"];
export const BACK_KEYS = ["KeyS", "ArrowDown"];
export const LEFT_KEYS = ["KeyA", "ArrowLeft"];
export const RIGHT_KEYS = ["KeyD", "ArrowRight"];
export const STOP_KEYS = ["Space", "Enter"];

export interface VelocityCommand {
  v: number;
  omega: number;
}

export class KeyState {
  private readonly down = new Set<string>();
  private stopLatched = false;

  keyDown(code: string): void {
    if (STOP_KEYS.includes(code)) {
      this.stopLatched = true;
      return;
    }
    this.down.add(code);
  }

  keyUp(code: string): void {
    this.down.delete(code);
  }

  clear(): void {
    this.down.clear();
    this.stopLatched = false;
  }

  /** True once per stop-key press. */
  consumeStop(): boolean {
    const latched = this.stopLatched;
    this.stopLatched = false;
    return latched;
  }

  private axis(positive: string[], negative: string[]): number {
    const pos = positive.some((k) => this.down.has(k)) ? 1 : 0;
    const neg = negative.some((k) => this.down.has(k)) ? 1 : 0;
    return pos - neg;
  }

  /** Current velocity command, or null when no motion key is held. */
  command(limits: AgentLimits): VelocityCommand | null {
    const forward = this.axis(FORWARD_KEYS, BACK_KEYS);
    const turn = this.axis(LEFT_KEYS, RIGHT_KEYS);
    if (forward === 0 && turn === 0) {
      return null;
    }
    return {
      v: forward * limits.max_linear_speed,
      omega: turn * limits.max_angular_speed,
    };
  }
}
