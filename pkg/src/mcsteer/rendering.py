"""Scanline road renderer: track geometry in, grayscale camera frames out.

Each image row corresponds to one ground distance ahead of the camera under
a flat-ground pinhole model.  With the camera at height ``h`` and focal
length ``f`` pixels, a row ``r`` below the horizon images ground distance
``d = f h / r``; anchoring the top row at ``far_distance`` and the bottom
row at ``near_distance`` fixes both constants.  For every row the renderer
interpolates the lateral offset of the lane centerline at that row's ground
distance, places the two lane boundaries, and paints: a soft (Gaussian
profile) bright line on each boundary over a flat mid-gray road fill, zero
background elsewhere.

The pixel model is symmetric around the image center column ``(W - 1) / 2``,
so mirroring a track exactly mirrors its frames.  Optional additive pixel
noise (off by default) is seeded per frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import ConfigError
from .seeding import derive_seed
from .tracks import Track


@dataclass(frozen=True)
class ImageConfig:
    """Camera geometry for rendered frames.  One channel, fixed exposure."""

    height: int = 64
    width: int = 96
    near_distance: float = 4.0
    far_distance: float = 40.0
    lane_half_width: float = 1.75
    line_sigma_px: float = 1.0
    road_level: float = 0.35
    noise_std: float = 0.0

    def __post_init__(self):
        if self.height < 2 or self.width < 2:
            raise ConfigError(f"image must be at least 2x2, got {self.height}x{self.width}")
        if not (0.0 < self.near_distance < self.far_distance):
            raise ConfigError(
                f"need 0 < near < far, got near={self.near_distance}, far={self.far_distance}")
        if not (self.lane_half_width > 0.0):
            raise ConfigError(f"lane_half_width must be positive, got {self.lane_half_width!r}")
        if not (self.line_sigma_px > 0.0):
            raise ConfigError(f"line_sigma_px must be positive, got {self.line_sigma_px!r}")
        if not (0.0 <= self.road_level <= 1.0):
            raise ConfigError(f"road_level must be in [0, 1], got {self.road_level!r}")
        if self.noise_std < 0.0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std!r}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (1, self.height, self.width)

    def row_distances(self) -> np.ndarray:
        """Ground distance imaged by each row, top row first.

        Solving d(r) = fh / (r + r0) with d(0) = far and d(H-1) = near gives
        r0 = near (H-1) / (far - near) and fh = far * r0.
        """
        h = self.height
        r0 = self.near_distance * (h - 1) / (self.far_distance - self.near_distance)
        fh = self.far_distance * r0
        rows = np.arange(h, dtype=np.float64)
        return fh / (rows + r0)

    def focal_px(self) -> float:
        # Reuse the vertical constants for lateral projection: col offset of a
        # point at lateral y and distance d is f * y / d with f = fh / cam
        # height; a nominal 1.5 m camera height sets the scale.
        r0 = self.near_distance * (self.height - 1) / (self.far_distance - self.near_distance)
        return self.far_distance * r0 / 1.5

    def to_header(self) -> dict[str, str]:
        return {
            "image.height": str(self.height),
            "image.width": str(self.width),
            "image.near_distance": repr(self.near_distance),
            "image.far_distance": repr(self.far_distance),
            "image.lane_half_width": repr(self.lane_half_width),
            "image.line_sigma_px": repr(self.line_sigma_px),
            "image.road_level": repr(self.road_level),
            "image.noise_std": repr(self.noise_std),
        }

    @classmethod
    def from_header(cls, header: dict[str, str]) -> "ImageConfig":
        try:
            return cls(
                height=int(header["image.height"]),
                width=int(header["image.width"]),
                near_distance=float(header["image.near_distance"]),
                far_distance=float(header["image.far_distance"]),
                lane_half_width=float(header["image.lane_half_width"]),
                line_sigma_px=float(header["image.line_sigma_px"]),
                road_level=float(header["image.road_level"]),
                noise_std=float(header["image.noise_std"]),
            )
        except KeyError as e:
            raise ConfigError(f"image config is missing {e.args[0]!r}") from None


def render_view(track: Track, camera_pose: tuple[float, float, float],
                config: ImageConfig = ImageConfig(), anchor_s: float | None = None,
                noise_seed: int | None = None) -> Tensor:
    """Render the road ahead of an arbitrary camera pose as a [1, H, W] frame.

    ``anchor_s`` is the arc position from which to sample the centerline
    ahead (defaults to the nearest point to the camera).  Rows whose ground
    distance falls beyond the visible monotone stretch of the path render as
    background, which is what a road bending out of frame looks like here.
    """
    cx_cam, cy_cam, heading = camera_pose
    if anchor_s is None:
        anchor_s = track.nearest_arc_position(cx_cam, cy_cam)

    # Sample the centerline ahead of the camera and express it in the
    # camera frame: x forward, y leftward.
    lookahead = config.far_distance * 1.6
    s = anchor_s + np.arange(0.0, lookahead, 0.25)
    px, py, _ = track.pose_at(s)
    dx = px - cx_cam
    dy = py - cy_cam
    cos_h, sin_h = np.cos(heading), np.sin(heading)
    x_fwd = cos_h * dx + sin_h * dy
    y_left = -sin_h * dx + cos_h * dy

    # Keep only the leading strictly-forward-monotone stretch; scanline
    # interpolation needs one lateral offset per distance.
    steps = np.diff(x_fwd)
    bad = np.nonzero(steps <= 0.0)[0]
    cut = (bad[0] + 1) if len(bad) else len(x_fwd)
    x_fwd, y_left = x_fwd[:cut], y_left[:cut]

    h, w = config.height, config.width
    image = np.zeros((h, w))
    distances = config.row_distances()
    visible = (distances >= x_fwd[0]) & (distances <= x_fwd[-1]) if len(x_fwd) >= 2 \
        else np.zeros(h, dtype=bool)
    if np.any(visible):
        center_y = np.interp(distances[visible], x_fwd, y_left)
        f = config.focal_px()
        # Lateral y is leftward-positive and columns grow rightward, so the
        # projection flips sign.  All column arithmetic stays in offsets from
        # the center column: negating the geometry then negates every offset
        # exactly, which is what makes a mirrored track render as the
        # bitwise-mirrored image.
        scale = f / distances[visible]
        j_off = np.arange(w, dtype=np.float64) - (w - 1) / 2.0
        half_span = config.lane_half_width * scale
        center_off = center_y * scale
        rows = np.where(np.abs(j_off[None, :] + center_off[:, None]) <= half_span[:, None],
                        config.road_level, 0.0)
        sig = config.line_sigma_px
        for o in (config.lane_half_width, -config.lane_half_width):
            t = j_off[None, :] + ((center_y + o) * scale)[:, None]
            np.maximum(rows, np.exp(-(t / sig) ** 2), out=rows)
        image[visible] = rows

    if config.noise_std > 0.0:
        if noise_seed is None:
            raise ConfigError("noise_std > 0 requires a noise_seed")
        rng = np.random.default_rng(noise_seed)
        image = image + rng.normal(0.0, config.noise_std, size=image.shape)
    return Tensor(image[None])


def render_frame(track: Track, s: float, config: ImageConfig = ImageConfig(),
                 noise_seed: int | None = None) -> tuple[Tensor, float]:
    """Frame and label for the on-centerline camera at arc position ``s``.

    The camera sits exactly on the centerline facing along it; the label is
    the path curvature there, i.e. the inverse turning radius a driver
    holding the lane would command.
    """
    s = float(np.clip(s, 0.0, track.total_length))
    x, y, heading = track.pose_at(s)
    image = render_view(track, (x, y, heading), config, anchor_s=s,
                        noise_seed=noise_seed)
    label = float(track.curvature_at(s))
    return image, label


def frame_noise_seed(dataset_seed: int, track_id: str, index: int) -> int:
    return derive_seed(dataset_seed, "noise", track_id, index)
