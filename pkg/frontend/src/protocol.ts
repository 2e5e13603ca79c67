/**
 * Wire protocol types and runtime guards.
 *
 * JSON text frames, one message per frame, `type` selects the variant.
 * Field names match the server exactly; parsing never coerces, so a frame
 * either satisfies its interface or `parseServerMessage` throws with the
 * reason. All numbers must be finite (JSON has no NaN/Infinity literals,
 * but null or strings in numeric fields are real failure modes).
 */

export interface Hello {
  type: "hello";
  version: number;
  tick_rate_hz: number;
  command_limit: number;
  kappa: number;
  passes: number;
  track: Array<[number, number]>;
}

export interface Telemetry {
  type: "telemetry";
  tick: number;
  x: number;
  y: number;
  heading: number;
  u_net: number;
  u_human: number;
  variance: number;
  sigma: number;
  u_blended: number;
  cross_track: number;
}

export type SessionEventKind = "started" | "stopped" | "reset" | "left_corridor";

export interface SessionEvent {
  type: "session";
  event: SessionEventKind;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export type ServerMessage = Hello | Telemetry | SessionEvent | ErrorMessage;

export interface HumanCommand {
  type: "human_command";
  u: number;
}

export interface SessionControl {
  type: "session_control";
  action: "start" | "stop" | "reset";
  kappa?: number;
  passes?: number;
}

export type ClientMessage = HumanCommand | SessionControl;

export class ProtocolError extends Error {}

const TELEMETRY_FIELDS = [
  "tick", "x", "y", "heading", "u_net", "u_human", "variance", "sigma",
  "u_blended", "cross_track",
] as const;

const SESSION_EVENTS: readonly string[] = ["started", "stopped", "reset", "left_corridor"];

function finiteNumber(value: unknown, where: string): number {
  if (typeof value !== "number" || !Number.isFinite(value)) {
    throw new ProtocolError(`${where} must be a finite number, got ${JSON.stringify(value)}`);
  }
  return value;
}

function parseTrack(value: unknown): Array<[number, number]> {
  if (!Array.isArray(value)) {
    throw new ProtocolError("hello.track must be an array of [x, y] pairs");
  }
  return value.map((point, i) => {
    if (!Array.isArray(point) || point.length !== 2) {
      throw new ProtocolError(`hello.track[${i}] must be an [x, y] pair`);
    }
    return [
      finiteNumber(point[0], `hello.track[${i}].x`),
      finiteNumber(point[1], `hello.track[${i}].y`),
    ];
  });
}

export function parseServerMessage(text: string): ServerMessage {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    throw new ProtocolError("frame is not valid JSON");
  }
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new ProtocolError("frame must be a JSON object");
  }
  const msg = raw as Record<string, unknown>;
  switch (msg.type) {
    case "hello":
      return {
        type: "hello",
        version: finiteNumber(msg.version, "hello.version"),
        tick_rate_hz: finiteNumber(msg.tick_rate_hz, "hello.tick_rate_hz"),
        command_limit: finiteNumber(msg.command_limit, "hello.command_limit"),
        kappa: finiteNumber(msg.kappa, "hello.kappa"),
        passes: finiteNumber(msg.passes, "hello.passes"),
        track: parseTrack(msg.track),
      };
    case "telemetry": {
      const frame = { type: "telemetry" } as Telemetry;
      for (const field of TELEMETRY_FIELDS) {
        frame[field] = finiteNumber(msg[field], `telemetry.${field}`);
      }
      return frame;
    }
    case "session": {
      const event = msg.event;
      if (typeof event !== "string" || !SESSION_EVENTS.includes(event)) {
        throw new ProtocolError(`unknown session event ${JSON.stringify(msg.event)}`);
      }
      return { type: "session", event: event as SessionEventKind };
    }
    case "error": {
      if (typeof msg.message !== "string") {
        throw new ProtocolError("error.message must be a string");
      }
      return { type: "error", message: msg.message };
    }
    default:
      throw new ProtocolError(`unknown message type ${JSON.stringify(msg.type)}`);
  }
}

export function encodeClientMessage(msg: ClientMessage): string {
  if (msg.type === "human_command") {
    finiteNumber(msg.u, "human_command.u");
  } else {
    if (msg.kappa !== undefined) finiteNumber(msg.kappa, "session_control.kappa");
    if (msg.passes !== undefined) finiteNumber(msg.passes, "session_control.passes");
  }
  return JSON.stringify(msg);
}

/**
 * The server-side blend recomputed bit for bit: both sides are IEEE 754
 * doubles and the JSON round trip is exact, so on an untampered frame this
 * returns true with zero tolerance.
 */
export function blendIdentityHolds(frame: Telemetry): boolean {
  return frame.u_blended === (1.0 - frame.sigma) * frame.u_net + frame.sigma * frame.u_human;
}
