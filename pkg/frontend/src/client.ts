/**
 * Websocket client with automatic reconnect.
 *
 * The socket constructor is injectable so tests can drive the client with
 * the `ws` package or a fake. Sends while disconnected are dropped rather
 * than queued: a steering command from three seconds ago is worse than no
 * command, and the server clears its held command on disconnect anyway.
 */

import { ClientMessage, encodeClientMessage, parseServerMessage, ServerMessage } from "./protocol";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: "open" | "close", listener: () => void): void;
  addEventListener(type: "message", listener: (event: { data: unknown }) => void): void;
  readyState: number;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientHandlers {
  onMessage: (msg: ServerMessage) => void;
  onStatus?: (status: "connecting" | "open" | "closed") => void;
  onProtocolError?: (error: Error) => void;
}

const OPEN = 1;

export class CockpitClient {
  private socket: SocketLike | null = null;
  private closed = false;
  private retryMs = 500;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    readonly url: string,
    private readonly handlers: ClientHandlers,
    private readonly factory: SocketFactory = (u) => new WebSocket(u) as unknown as SocketLike,
  ) {
    this.connect();
  }

  private connect(): void {
    if (this.closed) return;
    this.handlers.onStatus?.("connecting");
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.addEventListener("open", () => {
      this.retryMs = 500;
      this.handlers.onStatus?.("open");
    });
    socket.addEventListener("message", (event) => {
      let msg: ServerMessage;
      try {
        msg = parseServerMessage(String(event.data));
      } catch (error) {
        this.handlers.onProtocolError?.(error as Error);
        return;
      }
      this.handlers.onMessage(msg);
    });
    socket.addEventListener("close", () => {
      if (this.socket !== socket) return; // superseded by a newer socket
      this.socket = null;
      this.handlers.onStatus?.("closed");
      this.scheduleReconnect();
    });
  }

  private scheduleReconnect(): void {
    if (this.closed || this.retryTimer !== null) return;
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      this.connect();
    }, this.retryMs);
    this.retryMs = Math.min(this.retryMs * 2, 8000);
  }

  /** True when the frame went out on an open socket. */
  send(msg: ClientMessage): boolean {
    if (this.socket === null || this.socket.readyState !== OPEN) return false;
    this.socket.send(encodeClientMessage(msg));
    return true;
  }

  sendCommand(u: number): boolean {
    return this.send({ type: "human_command", u });
  }

  sendControl(action: "start" | "stop" | "reset", overrides: { kappa?: number; passes?: number } = {}): boolean {
    return this.send({ type: "session_control", action, ...overrides });
  }

  close(): void {
    this.closed = true;
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    this.socket?.close();
    this.socket = null;
  }
}
