/**
 * Request/reply connection over a WebSocket-like transport.
 *
 * The service answers every request with exactly one reply, in order, so
 * replies resolve a FIFO of pending promises. Outgoing envelopes are
 * validated before they touch the wire; an illegal message rejects
 * locally instead of being sent.
 */
import {
  ClientEnvelope,
  ClientKind,
  ServerEnvelope,
  outgoingIssues,
  parseServerMessage,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((event: { data: unknown }) => void) | null;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: ((err: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export class Connection {
  private seq = 0;
  private socket: SocketLike | null = null;
  private pending: {
    resolve: (env: ServerEnvelope) => void;
    reject: (err: Error) => void;
  }[] = [];
  /** Every envelope actually sent, for protocol-conformance checks. */
  readonly sentLog: ClientEnvelope[] = [];
  onDrop: ((reason: string) => void) | null = null;

  constructor(private readonly factory: SocketFactory) {}

  get isOpen(): boolean {
    return this.socket !== null;
  }

  open(url: string): Promise<void> {
    return new Promise((resolve, reject) => {
      const socket = this.factory(url);
      socket.onopen = () => {
        this.socket = socket;
        resolve();
      };
      socket.onerror = (err) => {
        if (this.socket === null) {
          reject(new Error(`connection failed: ${String(err)}`));
        }
      };
      socket.onclose = () => {
        const wasOpen = this.socket !== null;
        this.socket = null;
        this.failPending("connection closed");
        if (wasOpen && this.onDrop) this.onDrop("connection closed");
      };
      socket.onmessage = (event) => this.handleMessage(String(event.data));
    });
  }

  close(): void {
    this.socket?.close();
    this.socket = null;
    this.failPending("closed by client");
  }

  request(kind: ClientKind, payload: Record<string, unknown> = {}): Promise<ServerEnvelope> {
    if (this.socket === null) {
      return Promise.reject(new Error("not connected"));
    }
    const envelope: ClientEnvelope = { kind, seq: ++this.seq, payload };
    const issues = outgoingIssues(envelope);
    if (issues.length > 0) {
      this.seq -= 1;
      return Promise.reject(new Error(`illegal message: ${issues.join("; ")}`));
    }
    this.sentLog.push(envelope);
    return new Promise((resolve, reject) => {
      this.pending.push({ resolve, reject });
      this.socket!.send(JSON.stringify(envelope));
    });
  }

  private handleMessage(text: string): void {
    let env: ServerEnvelope;
    try {
      env = parseServerMessage(text);
    } catch (err) {
      this.pending.shift()?.reject(err as Error);
      return;
    }
    this.pending.shift()?.resolve(env);
  }

  private failPending(reason: string): void {
    const waiting = this.pending.splice(0);
    for (const p of waiting) p.reject(new Error(reason));
  }
}
