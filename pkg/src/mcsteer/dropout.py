"""Bernoulli dropout masks at two granularities.

Element-wise dropout draws one keep/drop decision per tensor entry; spatial
dropout draws one decision per feature map, so an entire channel is either
kept or zeroed.  Both use inverted scaling: kept coordinates are multiplied
by ``1/keep_prob`` so the expected value of a masked activation equals the
unmasked activation.  Masks apply identically during training and during
Monte-Carlo inference; there is no separate rescale-at-test mode.

A spatial mask over maps of a given shape equals an element-wise mask whose
entries are tied within each map; :func:`tied_elementwise_mask` constructs
that tied mask explicitly so the equivalence can be checked as data, not
argued.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .autodiff import ComputationTape, Tensor, scale_by
from .errors import ConfigError, ShapeError


class DropoutKind(str, Enum):
    ELEMENTWISE = "elementwise"
    SPATIAL = "spatial"


def _check_keep_prob(keep_prob: float) -> float:
    p = float(keep_prob)
    if not (0.0 < p <= 1.0) or not np.isfinite(p):
        raise ConfigError(f"keep_prob must be in (0, 1], got {keep_prob!r}")
    return p


@dataclass(frozen=True)
class DropoutSpec:
    """Where and how to drop: granularity, keep probability, layer index.

    The layer index participates in mask seed derivation so two layers with
    identical shapes never share masks within a pass.
    """

    kind: DropoutKind
    keep_prob: float
    layer_index: int = 0

    def __post_init__(self):
        _check_keep_prob(self.keep_prob)
        if self.layer_index < 0:
            raise ConfigError(f"layer_index must be >= 0, got {self.layer_index}")


@dataclass(frozen=True)
class DropoutMask:
    """A realized mask: entries are exactly 0 or ``1/keep_prob``."""

    values: Tensor
    granularity: DropoutKind
    keep_prob: float
    seed_used: int


def sample_elementwise_mask(shape: tuple[int, ...], keep_prob: float, seed: int) -> DropoutMask:
    """One Bernoulli(keep_prob) draw per entry, scaled by ``1/keep_prob``."""
    p = _check_keep_prob(keep_prob)
    rng = np.random.default_rng(seed)
    keep = rng.random(shape) < p
    return DropoutMask(Tensor(keep / p), DropoutKind.ELEMENTWISE, p, seed)


def sample_spatial_mask(num_maps: int, map_rank: int, keep_prob: float, seed: int) -> DropoutMask:
    """One Bernoulli(keep_prob) draw per feature map.

    The values tensor has shape ``[num_maps, 1, ..., 1]`` with ``map_rank``
    trailing singleton axes, ready to broadcast over ``[num_maps, *map_shape]``
    activations.
    """
    if num_maps < 1:
        raise ShapeError(f"num_maps must be >= 1, got {num_maps}")
    if map_rank < 1:
        raise ShapeError(f"spatial dropout needs map_rank >= 1, got {map_rank}")
    p = _check_keep_prob(keep_prob)
    rng = np.random.default_rng(seed)
    keep = rng.random(num_maps) < p
    values = (keep / p).reshape((num_maps,) + (1,) * map_rank)
    return DropoutMask(Tensor(values), DropoutKind.SPATIAL, p, seed)


def tied_elementwise_mask(spatial: DropoutMask, map_shape: tuple[int, ...]) -> DropoutMask:
    """Expand a spatial mask to a full element-wise mask tied within each map.

    Every entry of map ``k`` takes the map's single keep/drop value, which is
    precisely the constraint under which element-wise dropout degenerates to
    spatial dropout.
    """
    if spatial.granularity is not DropoutKind.SPATIAL:
        raise ConfigError("tied_elementwise_mask expects a spatial mask")
    vals = spatial.values.data
    if len(map_shape) != vals.ndim - 1:
        raise ShapeError(f"map_shape rank {len(map_shape)} does not match mask rank {vals.ndim - 1}")
    full = np.broadcast_to(vals, (vals.shape[0],) + tuple(map_shape)).copy()
    return DropoutMask(Tensor(full), DropoutKind.ELEMENTWISE, spatial.keep_prob, spatial.seed_used)


def apply_dropout(x: Tensor, mask: DropoutMask, tape: ComputationTape | None = None) -> Tensor:
    """Multiply activations by a realized mask.

    Goes through :func:`autodiff.scale_by`, so on a tape the gradient at
    dropped coordinates is exactly zero and kept coordinates are scaled by
    ``1/keep_prob`` in both directions.
    """
    return scale_by(x, mask.values, tape)
