/**
 * Cockpit view model: the single place incoming frames mutate state.
 *
 * Telemetry lands in a fixed-capacity ring buffer (the trail and the sigma
 * strip chart read it back in arrival order). Displayed values are always
 * the server's own numbers, never recomputed, so a replayed log renders
 * exactly what the live session showed. Frames that violate the blending
 * identity are counted and surfaced instead of being silently drawn.
 */

import {
  blendIdentityHolds,
  Hello,
  ServerMessage,
  Telemetry,
} from "./protocol";

export class RingBuffer<T> {
  private items: T[] = [];
  private start = 0;

  constructor(readonly capacity: number) {
    if (!Number.isInteger(capacity) || capacity < 1) {
      throw new RangeError(`capacity must be a positive integer, got ${capacity}`);
    }
  }

  push(item: T): void {
    if (this.items.length < this.capacity) {
      this.items.push(item);
    } else {
      this.items[this.start] = item;
      this.start = (this.start + 1) % this.capacity;
    }
  }

  get size(): number {
    return this.items.length;
  }

  /** Oldest to newest. */
  toArray(): T[] {
    return this.items.slice(this.start).concat(this.items.slice(0, this.start));
  }

  latest(): T | undefined {
    if (this.items.length === 0) return undefined;
    const last = (this.start + this.items.length - 1) % this.items.length;
    return this.items[last];
  }
}

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface ModelSnapshot {
  hello: Hello | null;
  latest: Telemetry | null;
  sessionRunning: boolean;
  connection: ConnectionStatus;
  framesSeen: number;
  identityViolations: number;
  lastError: string | null;
  leftCorridorCount: number;
}

export class CockpitModel {
  hello: Hello | null = null;
  readonly frames: RingBuffer<Telemetry>;
  sessionRunning = true; // the service ticks from boot unless told to stop
  connection: ConnectionStatus = "connecting";
  framesSeen = 0;
  identityViolations = 0;
  lastError: string | null = null;
  leftCorridorCount = 0;

  constructor(historyLength = 600) {
    this.frames = new RingBuffer<Telemetry>(historyLength);
  }

  apply(msg: ServerMessage): void {
    switch (msg.type) {
      case "hello":
        this.hello = msg;
        break;
      case "telemetry":
        this.framesSeen += 1;
        if (!blendIdentityHolds(msg)) {
          this.identityViolations += 1;
        }
        this.frames.push(msg);
        break;
      case "session":
        if (msg.event === "started") this.sessionRunning = true;
        else if (msg.event === "stopped") this.sessionRunning = false;
        else if (msg.event === "left_corridor") this.leftCorridorCount += 1;
        break;
      case "error":
        this.lastError = msg.message;
        break;
    }
  }

  setConnection(status: ConnectionStatus): void {
    this.connection = status;
  }

  latest(): Telemetry | null {
    return this.frames.latest() ?? null;
  }

  /** Sigma values oldest to newest, for the strip chart. */
  sigmaHistory(): number[] {
    return this.frames.toArray().map((f) => f.sigma);
  }

  trail(): Array<[number, number]> {
    return this.frames.toArray().map((f) => [f.x, f.y]);
  }

  snapshot(): ModelSnapshot {
    return {
      hello: this.hello,
      latest: this.latest(),
      sessionRunning: this.sessionRunning,
      connection: this.connection,
      framesSeen: this.framesSeen,
      identityViolations: this.identityViolations,
      lastError: this.lastError,
      leftCorridorCount: this.leftCorridorCount,
    };
  }
}
