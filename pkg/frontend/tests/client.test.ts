import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { CockpitClient, SocketLike } from "../src/client";
import { ServerMessage } from "../src/protocol";

type Listener = (event: { data: unknown }) => void;

class FakeSocket implements SocketLike {
  readyState = 0; // CONNECTING
  sent: string[] = [];
  private listeners = new Map<string, Listener[]>();

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.readyState = 3;
  }

  addEventListener(type: "open" | "close", listener: () => void): void;
  addEventListener(type: "message", listener: Listener): void;
  addEventListener(type: string, listener: Listener): void {
    const bucket = this.listeners.get(type) ?? [];
    bucket.push(listener);
    this.listeners.set(type, bucket);
  }

  emitOpen(): void {
    this.readyState = 1;
    for (const fn of this.listeners.get("open") ?? []) fn({ data: undefined });
  }

  emitClose(): void {
    this.readyState = 3;
    for (const fn of this.listeners.get("close") ?? []) fn({ data: undefined });
  }

  emitMessage(data: string): void {
    for (const fn of this.listeners.get("message") ?? []) fn({ data });
  }
}

describe("CockpitClient", () => {
  let sockets: FakeSocket[];
  let factory: (url: string) => SocketLike;

  beforeEach(() => {
    vi.useFakeTimers();
    sockets = [];
    factory = () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    };
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("drops sends until the socket opens, then delivers verbatim", () => {
    const seen: ServerMessage[] = [];
    const client = new CockpitClient("ws://test", { onMessage: (m) => seen.push(m) }, factory);
    expect(client.sendCommand(0.1)).toBe(false);
    sockets[0]!.emitOpen();
    expect(client.sendCommand(0.15)).toBe(true);
    expect(client.sendControl("start", { kappa: 2.0 })).toBe(true);
    expect(sockets[0]!.sent).toEqual([
      '{"type":"human_command","u":0.15}',
      '{"type":"session_control","action":"start","kappa":2}',
    ]);
    sockets[0]!.emitMessage('{"type":"session","event":"stopped"}');
    expect(seen).toEqual([{ type: "session", event: "stopped" }]);
    client.close();
  });

  it("reconnects with doubling backoff and resets it on success", () => {
    const statuses: string[] = [];
    const client = new CockpitClient("ws://test",
      { onMessage: () => {}, onStatus: (s) => statuses.push(s) }, factory);
    sockets[0]!.emitOpen();
    sockets[0]!.emitClose();
    expect(sockets).toHaveLength(1);
    vi.advanceTimersByTime(499);
    expect(sockets).toHaveLength(1);
    vi.advanceTimersByTime(1);
    expect(sockets).toHaveLength(2); // first retry after 500ms
    sockets[1]!.emitClose();
    vi.advanceTimersByTime(999);
    expect(sockets).toHaveLength(2);
    vi.advanceTimersByTime(1);
    expect(sockets).toHaveLength(3); // second retry after 1000ms
    sockets[2]!.emitOpen();
    sockets[2]!.emitClose();
    vi.advanceTimersByTime(500);
    expect(sockets).toHaveLength(4); // open reset the backoff to 500ms
    expect(statuses).toEqual([
      "connecting", "open", "closed", "connecting", "closed",
      "connecting", "open", "closed", "connecting",
    ]);
    client.close();
  });

  it("reports malformed frames without dropping the connection", () => {
    const seen: ServerMessage[] = [];
    const errors: Error[] = [];
    const client = new CockpitClient("ws://test",
      { onMessage: (m) => seen.push(m), onProtocolError: (e) => errors.push(e) }, factory);
    sockets[0]!.emitOpen();
    sockets[0]!.emitMessage("not json");
    sockets[0]!.emitMessage('{"type":"session","event":"reset"}');
    expect(errors).toHaveLength(1);
    expect(seen).toEqual([{ type: "session", event: "reset" }]);
    client.close();
  });

  it("stays closed after close(), even if a retry was pending", () => {
    const client = new CockpitClient("ws://test", { onMessage: () => {} }, factory);
    sockets[0]!.emitClose();
    client.close();
    vi.advanceTimersByTime(60000);
    expect(sockets).toHaveLength(1);
    expect(client.sendCommand(0.1)).toBe(false);
  });
});
