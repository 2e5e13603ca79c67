"""Piecewise constant-curvature tracks.

A track is a list of (length, curvature) segments laid end to end from the
origin, alternating straights and arcs.  Arc curvature magnitudes are drawn
as kappa_max * u^shaping_exponent with u uniform on (0, 1), which for the
default exponent 2 concentrates mass near zero: most of the lap is straight
or gently curved, sharp bends are rare.  That skew is deliberate; the
scarcity of high-curvature samples is exactly what uncertainty estimates
should detect.

Poses along the track come from closed-form circular arc geometry, so
position queries are exact and vectorized, no integration involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .seeding import rng_from


@dataclass(frozen=True)
class Segment:
    length: float
    curvature: float

    def __post_init__(self):
        if not (self.length > 0.0) or not np.isfinite(self.length):
            raise ConfigError(f"segment length must be positive, got {self.length!r}")
        if not np.isfinite(self.curvature):
            raise ConfigError(f"segment curvature must be finite, got {self.curvature!r}")


@dataclass(frozen=True)
class TrackConfig:
    """Random track generation bounds.

    ``kappa_max = 0`` collapses generation to a single straight of the full
    length.  ``shaping_exponent`` bends the curvature magnitude distribution:
    2 is heavy near zero, 1 is uniform, values below 1 favor sharp arcs.
    """

    total_length: float = 400.0
    kappa_max: float = 0.2
    straight_range: tuple[float, float] = (20.0, 60.0)
    arc_range: tuple[float, float] = (8.0, 30.0)
    shaping_exponent: float = 2.0

    def __post_init__(self):
        if not (self.total_length > 0.0):
            raise ConfigError(f"total_length must be positive, got {self.total_length!r}")
        if self.kappa_max < 0.0 or not np.isfinite(self.kappa_max):
            raise ConfigError(f"kappa_max must be >= 0, got {self.kappa_max!r}")
        for name, (lo, hi) in (("straight_range", self.straight_range),
                               ("arc_range", self.arc_range)):
            if not (0.0 < lo <= hi):
                raise ConfigError(f"{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        if not (self.shaping_exponent > 0.0):
            raise ConfigError(f"shaping_exponent must be positive, got {self.shaping_exponent!r}")


class Track:
    """Immutable piecewise track with vectorized pose queries."""

    def __init__(self, segments: list[Segment], track_id: str = ""):
        if not segments:
            raise ConfigError("a track needs at least one segment")
        self.segments = list(segments)
        self.track_id = track_id
        lengths = np.array([s.length for s in segments])
        self._curvatures = np.array([s.curvature for s in segments])
        self._starts = np.concatenate([[0.0], np.cumsum(lengths)])
        # Accumulate each segment's start pose once; queries then only add
        # the within-segment offset.
        x, y, heading = 0.0, 0.0, 0.0
        sx, sy, sh = [x], [y], [heading]
        for seg in segments:
            x, y, heading = _advance(x, y, heading, seg.curvature, seg.length)
            sx.append(x)
            sy.append(y)
            sh.append(heading)
        self._seg_x = np.array(sx)
        self._seg_y = np.array(sy)
        self._seg_heading = np.array(sh)

    @property
    def total_length(self) -> float:
        return float(self._starts[-1])

    def _locate(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = np.clip(s, 0.0, self.total_length)
        idx = np.clip(np.searchsorted(self._starts, s, side="right") - 1, 0,
                      len(self.segments) - 1)
        return idx, s - self._starts[idx]

    def curvature_at(self, s) -> np.ndarray:
        idx, _ = self._locate(np.asarray(s, dtype=np.float64))
        return self._curvatures[idx]

    def pose_at(self, s) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(x, y, heading) at arc position ``s``, clamped to [0, total]."""
        s = np.asarray(s, dtype=np.float64)
        idx, t = self._locate(s)
        k = self._curvatures[idx]
        x0, y0, h0 = self._seg_x[idx], self._seg_y[idx], self._seg_heading[idx]
        return _advance(x0, y0, h0, k, t)

    def nearest_arc_position(self, x: float, y: float, coarse_step: float = 1.0) -> float:
        """Arc position minimizing distance to (x, y).

        Coarse global scan followed by a golden-section refinement of the
        winning bracket; the track is smooth, so the squared distance is
        unimodal within one coarse step of the minimum.
        """
        total = self.total_length
        n = max(int(np.ceil(total / coarse_step)) + 1, 2)
        grid = np.linspace(0.0, total, n)
        px, py, _ = self.pose_at(grid)
        d2 = (px - x) ** 2 + (py - y) ** 2
        i = int(np.argmin(d2))
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, n - 1)]

        def f(s: float) -> float:
            qx, qy, _ = self.pose_at(s)
            return float((qx - x) ** 2 + (qy - y) ** 2)

        inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c = b - inv_phi * (b - a)
        d = a + inv_phi * (b - a)
        fc, fd = f(c), f(d)
        for _ in range(60):
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - inv_phi * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + inv_phi * (b - a)
                fd = f(d)
        return float((a + b) / 2.0)

    def centerline(self, step: float = 1.0) -> np.ndarray:
        """Polyline [[x, y], ...] sampled every ``step`` meters (plus the end)."""
        s = np.arange(0.0, self.total_length, step)
        s = np.append(s, self.total_length)
        x, y, _ = self.pose_at(s)
        return np.stack([x, y], axis=1)

    def mirrored(self) -> "Track":
        """The same track reflected across the x axis (curvatures negated)."""
        return Track([Segment(seg.length, -seg.curvature) for seg in self.segments],
                     track_id=f"{self.track_id}~mirror")


def _advance(x0, y0, heading0, curvature, distance):
    """Pose after following constant curvature for a distance; vectorized.

    Arcs use exact circle geometry; the straight branch avoids the 0/0 by
    selecting on curvature.  All operands may be arrays of a common shape.
    """
    k = np.asarray(curvature, dtype=np.float64)
    t = np.asarray(distance, dtype=np.float64)
    h0 = np.asarray(heading0, dtype=np.float64)
    heading = h0 + k * t
    safe_k = np.where(k == 0.0, 1.0, k)
    arc_x = (np.sin(heading) - np.sin(h0)) / safe_k
    arc_y = (np.cos(h0) - np.cos(heading)) / safe_k
    straight_x = t * np.cos(h0)
    straight_y = t * np.sin(h0)
    x = x0 + np.where(k == 0.0, straight_x, arc_x)
    y = y0 + np.where(k == 0.0, straight_y, arc_y)
    if x.ndim == 0:
        return float(x), float(y), float(heading)
    return x, y, heading


def generate_track(seed: int, config: TrackConfig = TrackConfig()) -> Track:
    """Random alternating straight/arc track of the configured total length.

    The final segment is truncated so the total length is met exactly.
    Arc curvature signs alternate randomly; magnitudes follow the shaped
    distribution described in the module docstring.
    """
    if config.kappa_max == 0.0:
        return Track([Segment(config.total_length, 0.0)], track_id=f"track-{seed}")
    rng = rng_from(seed, "track")
    segments: list[Segment] = []
    built = 0.0
    make_straight = True
    while built < config.total_length:
        if make_straight:
            length = rng.uniform(*config.straight_range)
            curvature = 0.0
        else:
            length = rng.uniform(*config.arc_range)
            magnitude = config.kappa_max * rng.random() ** config.shaping_exponent
            sign = 1.0 if rng.random() < 0.5 else -1.0
            curvature = sign * magnitude
        length = min(length, config.total_length - built)
        if length > 0.0:
            segments.append(Segment(length, curvature))
            built += length
        make_straight = not make_straight
    return Track(segments, track_id=f"track-{seed}")
