import { describe, expect, it } from "vitest";

import {
  blendIdentityHolds,
  encodeClientMessage,
  parseServerMessage,
  ProtocolError,
  Telemetry,
} from "../src/protocol";

const TELEMETRY = {
  type: "telemetry", tick: 3, x: 1.5, y: -2.25, heading: 0.1,
  u_net: 0.05, u_human: 0.15, variance: 0.02, sigma: 0.2,
  u_blended: 0.07, cross_track: -0.3,
};

describe("parseServerMessage", () => {
  it("round trips a telemetry frame", () => {
    const msg = parseServerMessage(JSON.stringify(TELEMETRY));
    expect(msg).toEqual(TELEMETRY);
  });

  it("round trips a hello frame", () => {
    const hello = {
      type: "hello", version: 1, tick_rate_hz: 10, command_limit: 0.2,
      kappa: 1, passes: 20, track: [[0, 0], [2, 0.5]],
    };
    const msg = parseServerMessage(JSON.stringify(hello));
    expect(msg).toEqual(hello);
  });

  it("accepts every session event", () => {
    for (const event of ["started", "stopped", "reset", "left_corridor"]) {
      expect(parseServerMessage(JSON.stringify({ type: "session", event })))
        .toEqual({ type: "session", event });
    }
  });

  it("rejects unknown types by name", () => {
    expect(() => parseServerMessage('{"type":"surprise"}'))
      .toThrow(/unknown message type "surprise"/);
  });

  it("rejects invalid JSON and non-objects", () => {
    expect(() => parseServerMessage("{nope")).toThrow(ProtocolError);
    expect(() => parseServerMessage("[1,2]")).toThrow(/JSON object/);
    expect(() => parseServerMessage("42")).toThrow(/JSON object/);
  });

  it("names the missing or non-finite telemetry field", () => {
    const missing = { ...TELEMETRY } as Record<string, unknown>;
    delete missing.sigma;
    expect(() => parseServerMessage(JSON.stringify(missing)))
      .toThrow(/telemetry\.sigma/);
    expect(() => parseServerMessage(JSON.stringify({ ...TELEMETRY, variance: null })))
      .toThrow(/telemetry\.variance/);
    expect(() => parseServerMessage(JSON.stringify({ ...TELEMETRY, x: "1.5" })))
      .toThrow(/telemetry\.x/);
  });

  it("rejects malformed track points", () => {
    const hello = {
      type: "hello", version: 1, tick_rate_hz: 10, command_limit: 0.2,
      kappa: 1, passes: 20, track: [[0, 0], [1]],
    };
    expect(() => parseServerMessage(JSON.stringify(hello)))
      .toThrow(/track\[1\]/);
  });

  it("rejects an unknown session event", () => {
    expect(() => parseServerMessage('{"type":"session","event":"paused"}'))
      .toThrow(/unknown session event/);
  });
});

describe("encodeClientMessage", () => {
  it("encodes commands and control frames verbatim", () => {
    expect(JSON.parse(encodeClientMessage({ type: "human_command", u: 0.15 })))
      .toEqual({ type: "human_command", u: 0.15 });
    expect(JSON.parse(encodeClientMessage(
      { type: "session_control", action: "start", kappa: 2 })))
      .toEqual({ type: "session_control", action: "start", kappa: 2 });
  });

  it("refuses non-finite outbound numbers", () => {
    expect(() => encodeClientMessage({ type: "human_command", u: NaN }))
      .toThrow(/human_command\.u/);
    expect(() => encodeClientMessage(
      { type: "session_control", action: "start", kappa: Infinity }))
      .toThrow(/session_control\.kappa/);
  });
});

describe("blendIdentityHolds", () => {
  it("holds exactly for a frame built with the server's formula", () => {
    const sigma = 0.3221;
    const u_net = 0.0789;
    const u_human = -0.1432;
    const frame: Telemetry = {
      ...TELEMETRY,
      type: "telemetry",
      sigma,
      u_net,
      u_human,
      u_blended: (1.0 - sigma) * u_net + sigma * u_human,
    };
    // survive a JSON round trip, as real frames do
    expect(blendIdentityHolds(parseServerMessage(JSON.stringify(frame)) as Telemetry))
      .toBe(true);
  });

  it("flags a tampered frame", () => {
    const frame = parseServerMessage(JSON.stringify(
      { ...TELEMETRY, u_blended: TELEMETRY.u_blended + 1e-9 })) as Telemetry;
    expect(blendIdentityHolds(frame)).toBe(false);
  });
});
