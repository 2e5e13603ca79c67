"""Websocket telemetry service around a live simulation session.

Protocol: JSON text frames, one message per frame, ``type`` field selects
the variant.

Server to client:
    hello           version, tick_rate_hz, command_limit, kappa, passes,
                    track (centerline polyline [[x, y], ...])
    telemetry       tick, x, y, heading, u_net, u_human, variance, sigma,
                    u_blended, cross_track
    session         event: started | stopped | reset | left_corridor
    error           message (the offending message is answered, the session
                    keeps running)

Client to server:
    human_command   u (inverse turning radius; clamped to the command limit)
    session_control action: start | stop | reset, plus optional kappa and
                    passes overrides

Human commands hold their value between ticks (zero-order hold).  When the
last client disconnects the held command is cleared, so an unattended
session degrades to sigma = 0, network-only driving.  Each client has a
bounded outbound queue; when a slow client falls behind, the oldest queued
frame is dropped rather than stalling the tick loop.
"""

from __future__ import annotations

import asyncio
import json
from dataclasses import replace

import numpy as np
from websockets.asyncio.server import serve
from websockets.exceptions import ConnectionClosed

from .control import SimulationSession, StepRecord, VehicleState
from .errors import ConfigError
from .tracks import Track

PROTOCOL_VERSION = 1


class LiveHuman:
    """Human source fed by websocket commands; a plain attribute is the
    handover cell (atomic enough under the GIL for one writer, one reader)."""

    def __init__(self):
        self._command: float | None = None

    def set(self, u: float) -> None:
        self._command = float(u)

    def clear(self) -> None:
        self._command = None

    def command(self, state: VehicleState, track: Track, arc_position: float) -> float | None:
        return self._command


def _dumps(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


class TelemetryService:
    """One simulation session broadcast to any number of clients."""

    def __init__(self, session: SimulationSession, tick_rate_hz: float = 10.0,
                 live_human: LiveHuman | None = None, queue_limit: int = 64):
        if not (tick_rate_hz > 0.0):
            raise ConfigError(f"tick_rate_hz must be positive, got {tick_rate_hz!r}")
        if queue_limit < 1:
            raise ConfigError(f"queue_limit must be >= 1, got {queue_limit}")
        self.session = session
        self.tick_rate_hz = float(tick_rate_hz)
        self.live_human = live_human
        self.queue_limit = queue_limit
        self.running = True
        self._queues: set[asyncio.Queue] = set()
        self._shutdown = asyncio.Event()
        self.port: int | None = None

    # -- lifecycle ---------------------------------------------------------

    async def run(self, host: str, port: int, ready=None) -> None:
        """Serve until :meth:`shutdown`; ``ready`` receives the bound port."""
        async with serve(self._handle_client, host, port) as server:
            self.port = server.sockets[0].getsockname()[1]
            if ready is not None:
                ready(self.port)
            tick_task = asyncio.create_task(self._tick_loop())
            try:
                await self._shutdown.wait()
            finally:
                tick_task.cancel()

    def shutdown(self) -> None:
        self._shutdown.set()

    def shutdown_threadsafe(self, loop: asyncio.AbstractEventLoop) -> None:
        loop.call_soon_threadsafe(self._shutdown.set)

    # -- tick loop ---------------------------------------------------------

    async def _tick_loop(self) -> None:
        period = 1.0 / self.tick_rate_hz
        loop = asyncio.get_running_loop()
        while True:
            started = loop.time()
            if self.running:
                record = self.session.step()
                self._broadcast(self._telemetry(record))
                if self.session.off_course(record):
                    # Announce, rewind to the start, keep driving: a live
                    # cockpit should not go dark because the car left the
                    # road.
                    self._broadcast({"type": "session", "event": "left_corridor"})
                    self.session.reset()
            await asyncio.sleep(max(0.0, period - (loop.time() - started)))

    def _telemetry(self, record: StepRecord) -> dict:
        return {
            "type": "telemetry",
            "tick": record.tick,
            "x": record.x,
            "y": record.y,
            "heading": record.heading,
            "u_net": record.u_net,
            "u_human": record.u_human,
            "variance": record.variance,
            "sigma": record.sigma,
            "u_blended": record.u_blended,
            "cross_track": record.cross_track,
        }

    def _broadcast(self, payload: dict) -> None:
        text = _dumps(payload)
        for q in self._queues:
            if q.full():
                q.get_nowait()  # drop the oldest frame, never block the loop
            q.put_nowait(text)

    # -- client handling ---------------------------------------------------

    def _hello(self) -> dict:
        return {
            "type": "hello",
            "version": PROTOCOL_VERSION,
            "tick_rate_hz": self.tick_rate_hz,
            "command_limit": self.session.sim.command_limit,
            "kappa": self.session.fusion.kappa,
            "passes": self.session.mc.passes,
            "track": [[float(x), float(y)]
                      for x, y in self.session.track.centerline(step=2.0)],
        }

    async def _handle_client(self, ws) -> None:
        queue: asyncio.Queue = asyncio.Queue(maxsize=self.queue_limit)
        self._queues.add(queue)
        writer = asyncio.create_task(self._write_loop(ws, queue))
        try:
            await ws.send(_dumps(self._hello()))
            async for raw in ws:
                reply = self._dispatch(raw)
                if reply is not None:
                    await ws.send(_dumps(reply))
        except ConnectionClosed:
            pass
        finally:
            self._queues.discard(queue)
            writer.cancel()
            if not self._queues and self.live_human is not None:
                self.live_human.clear()

    async def _write_loop(self, ws, queue: asyncio.Queue) -> None:
        try:
            while True:
                await ws.send(await queue.get())
        except (ConnectionClosed, asyncio.CancelledError):
            pass

    def _dispatch(self, raw) -> dict | None:
        """Handle one client message; malformed input gets an error reply
        and leaves the session untouched."""
        try:
            msg = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError):
            return {"type": "error", "message": "not valid JSON"}
        if not isinstance(msg, dict) or "type" not in msg:
            return {"type": "error", "message": "expected an object with a type field"}
        kind = msg["type"]
        if kind == "human_command":
            return self._on_human_command(msg)
        if kind == "session_control":
            return self._on_session_control(msg)
        return {"type": "error", "message": f"unknown message type {kind!r}"}

    def _on_human_command(self, msg: dict) -> dict | None:
        u = msg.get("u")
        if not isinstance(u, (int, float)) or isinstance(u, bool) or not np.isfinite(u):
            return {"type": "error", "message": "human_command needs a finite numeric u"}
        if self.live_human is None:
            return None  # scripted session: acknowledge by silence
        limit = self.session.sim.command_limit
        self.live_human.set(float(np.clip(u, -limit, limit)))
        return None

    def _on_session_control(self, msg: dict) -> dict | None:
        action = msg.get("action")
        if action not in ("start", "stop", "reset"):
            return {"type": "error",
                    "message": "session_control action must be start, stop, or reset"}
        if "kappa" in msg:
            kappa = msg["kappa"]
            if not isinstance(kappa, (int, float)) or isinstance(kappa, bool) \
                    or not np.isfinite(kappa) or kappa < 0.0:
                return {"type": "error", "message": "kappa must be a finite number >= 0"}
            self.session.fusion = replace(self.session.fusion, kappa=float(kappa))
        if "passes" in msg:
            passes = msg["passes"]
            if not isinstance(passes, int) or isinstance(passes, bool) or passes < 1:
                return {"type": "error", "message": "passes must be an integer >= 1"}
            self.session.mc = replace(self.session.mc, passes=passes)
        if action == "start":
            self.running = True
            return {"type": "session", "event": "started"}
        if action == "stop":
            self.running = False
            return {"type": "session", "event": "stopped"}
        self.session.reset()
        return {"type": "session", "event": "reset"}
