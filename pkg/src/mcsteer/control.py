"""Uncertainty-weighted shared control and the closed-loop simulator.

The fusion law is a convex blend of the network command and the human
command, weighted by the network's own predictive variance:

    sigma = clamp(kappa * variance, 0, 1)
    u     = (1 - sigma) * u_net + sigma * u_human

When the network is confident (small variance) it drives; as its variance
grows, authority hands over to the human.  With no human available sigma is
forced to zero, which reduces the blend to the network command exactly.

The vehicle is a kinematic unicycle at constant speed; commands are inverse
turning radii.  The simulator closes the loop: render the camera view at
the vehicle pose, estimate the command and its variance by Monte-Carlo
dropout, blend with the human source, step the vehicle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Protocol

import numpy as np

from .errors import ConfigError, NumericError
from .network import Network
from .rendering import ImageConfig, render_view
from .seeding import derive_seed
from .tracks import Track
from .uncertainty import McConfig, mc_sample, predictive_mean, predictive_variance


@dataclass(frozen=True)
class FusionConfig:
    """Blend gain and the clamp bounds for the handover weight."""

    kappa: float = 1.0
    sigma_min: float = 0.0
    sigma_max: float = 1.0

    def __post_init__(self):
        if self.kappa < 0.0 or not np.isfinite(self.kappa):
            raise ConfigError(f"kappa must be finite and >= 0, got {self.kappa!r}")
        if not (0.0 <= self.sigma_min <= self.sigma_max <= 1.0):
            raise ConfigError(
                f"need 0 <= sigma_min <= sigma_max <= 1, got "
                f"[{self.sigma_min}, {self.sigma_max}]")


def fuse(u_net: float, u_human: float, variance: float,
         config: FusionConfig = FusionConfig()) -> tuple[float, float]:
    """Returns (sigma, blended command)."""
    for name, v in (("u_net", u_net), ("u_human", u_human), ("variance", variance)):
        if not np.isfinite(v):
            raise NumericError(f"fuse: {name} is not finite ({v!r})")
    if variance < 0.0:
        raise NumericError(f"fuse: negative variance {variance!r}")
    sigma = min(max(config.kappa * variance, config.sigma_min), config.sigma_max)
    return sigma, (1.0 - sigma) * u_net + sigma * u_human


def wrap_heading(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    out = math.remainder(theta, 2.0 * math.pi)
    if out <= -math.pi:
        out += 2.0 * math.pi
    return out


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    heading: float

    def __post_init__(self):
        for name in ("x", "y", "heading"):
            if not np.isfinite(getattr(self, name)):
                raise NumericError(f"vehicle state {name} is not finite")


def vehicle_step(state: VehicleState, command: float, speed: float, dt: float) -> VehicleState:
    """Kinematic unicycle step; heading updates before position.

    Updating heading first makes a constant command trace an exact polygon
    approximation of the circle of radius 1/command, which closes after
    2*pi / (speed * command * dt) steps.
    """
    if not np.isfinite(command):
        raise NumericError(f"vehicle command is not finite ({command!r})")
    if not (dt > 0.0) or not np.isfinite(dt):
        raise ConfigError(f"dt must be positive, got {dt!r}")
    if not (speed > 0.0) or not np.isfinite(speed):
        raise ConfigError(f"speed must be positive, got {speed!r}")
    heading = wrap_heading(state.heading + speed * command * dt)
    return VehicleState(x=state.x + speed * math.cos(heading) * dt,
                        y=state.y + speed * math.sin(heading) * dt,
                        heading=heading)


def cross_track_error(state: VehicleState, track: Track) -> tuple[float, float]:
    """Signed lateral offset from the centerline, positive to the left.

    Returns (error, nearest arc position); the arc position doubles as the
    render anchor and the hint for scripted humans.
    """
    s = track.nearest_arc_position(state.x, state.y)
    px, py, ph = track.pose_at(s)
    dx, dy = state.x - px, state.y - py
    return math.cos(ph) * dy - math.sin(ph) * dx, s


class HumanSource(Protocol):
    """Where human commands come from, if anywhere.

    ``command`` returns the current human inverse turning radius, or None
    when no human is present (disconnected client, scripted absence); the
    blend then forces sigma to zero.
    """

    def command(self, state: VehicleState, track: Track, arc_position: float) -> float | None:
        ...


class NoHuman:
    def command(self, state: VehicleState, track: Track, arc_position: float) -> None:
        return None


@dataclass
class ScriptedHuman:
    """Deterministic policy standing in for a person at the wheel."""

    policy: Callable[[VehicleState, Track, float], float]
    name: str = "scripted"

    def command(self, state: VehicleState, track: Track, arc_position: float) -> float:
        return float(self.policy(state, track, arc_position))


def _corrective_policy(lookahead: float = 2.0, offset_gain: float = 0.12,
                       heading_gain: float = 0.9) -> Callable[[VehicleState, Track, float], float]:
    """Feedforward path curvature plus feedback on offset and heading error."""

    def policy(state: VehicleState, track: Track, s: float) -> float:
        k_ff = float(track.curvature_at(min(s + lookahead, track.total_length)))
        px, py, ph = track.pose_at(s)
        err = math.cos(ph) * (state.y - py) - math.sin(ph) * (state.x - px)
        heading_err = wrap_heading(state.heading - ph)
        return k_ff - offset_gain * err - heading_gain * heading_err

    return policy


def make_human_source(name: str) -> HumanSource:
    """Build a human source from its command-line name.

    ``none`` means nobody is present; ``perfect`` replays the path
    curvature; ``corrective`` steers back toward the centerline.
    """
    if name == "none":
        return NoHuman()
    if name == "perfect":
        return ScriptedHuman(lambda state, track, s: float(track.curvature_at(s)),
                             name="perfect")
    if name == "corrective":
        return ScriptedHuman(_corrective_policy(), name="corrective")
    raise ConfigError(f"unknown human source {name!r} (expected none, perfect, or corrective)")


@dataclass(frozen=True)
class SimConfig:
    """Closed-loop run settings."""

    ticks: int = 400
    dt: float = 0.05
    speed: float = 5.0
    command_limit: float = 0.2
    corridor_half_width: float = 4.0
    start_arc_position: float = 0.0

    def __post_init__(self):
        if self.ticks < 0:
            raise ConfigError(f"ticks must be >= 0, got {self.ticks}")
        if not (self.dt > 0.0):
            raise ConfigError(f"dt must be positive, got {self.dt!r}")
        if not (self.speed > 0.0):
            raise ConfigError(f"speed must be positive, got {self.speed!r}")
        if not (self.command_limit > 0.0):
            raise ConfigError(f"command_limit must be positive, got {self.command_limit!r}")
        if not (self.corridor_half_width > 0.0):
            raise ConfigError(
                f"corridor_half_width must be positive, got {self.corridor_half_width!r}")


@dataclass
class StepRecord:
    """One tick of telemetry; exactly what the wire protocol carries."""

    tick: int
    x: float
    y: float
    heading: float
    u_net: float
    u_human: float
    variance: float
    sigma: float
    u_blended: float
    cross_track: float


STEP_COLUMNS = ["tick", "x", "y", "heading", "u_net", "u_human", "variance", "sigma",
                "u_blended", "cross_track"]


@dataclass
class ClosedLoopResult:
    records: list[StepRecord]
    status: str  # "completed" or "left_corridor"

    def mean_abs_cross_track(self) -> float:
        if not self.records:
            raise ConfigError("no records in closed-loop result")
        return float(np.mean([abs(r.cross_track) for r in self.records]))


class SimulationSession:
    """Tick-at-a-time closed loop, shared by the batch simulator and the
    telemetry service.

    Per-tick Monte-Carlo seeds derive from (run seed, tick), so a session's
    trajectory is a pure function of its inputs and scripted human commands;
    live commands enter through ``human``.
    """

    def __init__(self, net: Network, track: Track, human: HumanSource,
                 fusion: FusionConfig, mc: McConfig, sim: SimConfig,
                 image_config: ImageConfig | None = None):
        if net.scaler is None:
            raise ConfigError("network has no label scaler; train before simulating")
        self.net = net
        self.track = track
        self.human = human
        self.fusion = fusion
        self.mc = mc
        self.sim = sim
        self.image_config = image_config or ImageConfig(
            height=net.config.input_shape[1], width=net.config.input_shape[2])
        if self.image_config.shape != tuple(net.config.input_shape):
            raise ConfigError(
                f"image config renders {self.image_config.shape} but the network "
                f"expects {tuple(net.config.input_shape)}")
        self.reset()

    def reset(self) -> None:
        x, y, heading = self.track.pose_at(self.sim.start_arc_position)
        self.state = VehicleState(float(x), float(y), float(heading))
        self.tick = 0

    def step(self) -> StepRecord:
        """Advance one tick and return its record."""
        cte, s_near = cross_track_error(self.state, self.track)
        frame = render_view(self.track, (self.state.x, self.state.y, self.state.heading),
                            self.image_config, anchor_s=s_near)
        mc_tick = replace(self.mc, run_seed=derive_seed(self.mc.run_seed, "tick", self.tick))
        samples = mc_sample(self.net, frame, mc_tick)
        variance = predictive_variance(samples)
        limit = self.sim.command_limit
        u_net = float(np.clip(self.net.scaler.inverse(predictive_mean(samples)),
                              -limit, limit))
        raw_human = self.human.command(self.state, self.track, s_near)
        if raw_human is None:
            u_human, sigma = 0.0, 0.0
            u_blended = u_net
        else:
            u_human = float(np.clip(raw_human, -limit, limit))
            sigma, u_blended = fuse(u_net, u_human, variance, self.fusion)
        record = StepRecord(tick=self.tick, x=self.state.x, y=self.state.y,
                            heading=self.state.heading, u_net=u_net, u_human=u_human,
                            variance=variance, sigma=sigma, u_blended=u_blended,
                            cross_track=cte)
        self.state = vehicle_step(self.state, u_blended, self.sim.speed, self.sim.dt)
        self.tick += 1
        return record

    def off_course(self, record: StepRecord) -> bool:
        return abs(record.cross_track) > self.sim.corridor_half_width


def run_closed_loop(net: Network, track: Track, human: HumanSource,
                    fusion: FusionConfig, mc: McConfig, sim: SimConfig,
                    image_config: ImageConfig | None = None) -> ClosedLoopResult:
    """Run a session for ``sim.ticks`` ticks or until it leaves the corridor.

    The tick that left the corridor is kept in the log; zero configured
    ticks produce an empty completed run.
    """
    session = SimulationSession(net, track, human, fusion, mc, sim, image_config)
    records: list[StepRecord] = []
    for _ in range(sim.ticks):
        record = session.step()
        records.append(record)
        if session.off_course(record):
            return ClosedLoopResult(records=records, status="left_corridor")
    return ClosedLoopResult(records=records, status="completed")
