"""Shared fixtures: small network geometries and a trained toy model.

The full-size default network is exercised only by the acceptance tests;
unit and integration tests use miniature profiles so the suite stays fast.
"""

from __future__ import annotations

import numpy as np
import pytest

from mcsteer.dataset import Dataset, DatasetConfig, build_dataset
from mcsteer.network import NetworkConfig, TrainConfig, build_network, train
from mcsteer.rendering import ImageConfig
from mcsteer.tracks import TrackConfig


TINY_CONFIG = NetworkConfig(input_shape=(1, 14, 18), conv_channels=(3, 4),
                            conv_kernel=5, conv_strides=(2, 1), fc_widths=(8, 1))

SMALL_IMAGE = ImageConfig(height=24, width=32)
SMALL_CONFIG = NetworkConfig(input_shape=(1, 24, 32), conv_channels=(4, 6),
                             conv_kernel=5, conv_strides=(2, 1), fc_widths=(16, 1))


@pytest.fixture(scope="session")
def tiny_config() -> NetworkConfig:
    return TINY_CONFIG


@pytest.fixture(scope="session")
def small_config() -> NetworkConfig:
    return SMALL_CONFIG


@pytest.fixture(scope="session")
def small_dataset() -> Dataset:
    return build_dataset(seed=11, config=DatasetConfig(
        n_tracks=3, samples_per_track=64, track=TrackConfig(total_length=300.0),
        image=SMALL_IMAGE))


@pytest.fixture(scope="session")
def trained_small_net(small_dataset):
    """A small network trained enough to be meaningfully better than init."""
    net = build_network(SMALL_CONFIG, init_seed=5)
    log = train(net, small_dataset.images, small_dataset.labels,
                TrainConfig(learning_rate=2e-3, batch_size=16, epochs=8, run_seed=3))
    return net, log


def random_images(rng: np.random.Generator, n: int, shape: tuple[int, int, int]) -> np.ndarray:
    return rng.random((n, *shape))
