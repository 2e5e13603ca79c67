"""Monte-Carlo dropout inference: sampling, moments, and binned reports.

A prediction's uncertainty comes from running the stochastic forward pass T
times with fresh masks and reading off sample moments:

    mean     = (1/T) sum_t f(x, mask_t)
    variance = (1/T) sum_t f(x, mask_t)^2 - mean^2

The variance uses the population (1/T) normalization and is clamped at zero
against floating-point cancellation.  Both moments are in standardized label
units; callers map back to physical units through the network's scaler.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .network import Network, Stochastic
from .autodiff import Tensor


@dataclass(frozen=True)
class McConfig:
    """How many stochastic passes to draw and from which seed."""

    passes: int = 20
    run_seed: int = 0
    variance_floor: float = 1e-6

    def __post_init__(self):
        if self.passes < 1:
            raise ConfigError(f"passes must be >= 1, got {self.passes}")
        if not (self.variance_floor > 0.0) or not np.isfinite(self.variance_floor):
            raise ConfigError(f"variance_floor must be positive, got {self.variance_floor!r}")


def mc_sample(net: Network, image: Tensor | np.ndarray, config: McConfig,
              workers: int = 1) -> np.ndarray:
    """T stochastic forward passes on one image; returns the sample vector.

    Pass t uses masks derived from ``(run_seed, layer, t)``, so the result
    is a pure function of the inputs: running passes in parallel threads
    (``workers > 1``) returns exactly the sequential vector.
    """
    if not isinstance(image, Tensor):
        image = Tensor(image)
    if image.rank != 3:
        raise ShapeError(f"mc_sample takes a single [C,H,W] image, got rank {image.rank}")

    def one_pass(t: int) -> float:
        return net.forward(image, Stochastic(config.run_seed, pass_index=t)).item()

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(one_pass, range(config.passes)))
    else:
        samples = [one_pass(t) for t in range(config.passes)]
    out = np.asarray(samples, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise NumericError("stochastic forward produced non-finite samples")
    return out


def predictive_mean(samples: np.ndarray) -> float:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1 or samples.size < 1:
        raise ShapeError(f"need a non-empty sample vector, got shape {samples.shape}")
    return float(np.mean(samples))


def predictive_variance(samples: np.ndarray) -> float:
    """Population variance via the raw second moment, clamped at zero.

    Requires at least two samples; one draw carries no spread information.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1 or samples.size < 2:
        raise ShapeError(f"variance needs >= 2 samples, got shape {samples.shape}")
    m = float(np.mean(samples))
    var = float(np.mean(samples * samples)) - m * m
    return max(var, 0.0)


@dataclass(frozen=True)
class McEstimate:
    """Moments of one Monte-Carlo sample vector, tagged with its input."""

    mean: float
    variance: float
    passes: int
    input_id: str = ""

    @classmethod
    def from_samples(cls, samples: np.ndarray, input_id: str = "") -> "McEstimate":
        return cls(mean=predictive_mean(samples), variance=predictive_variance(samples),
                   passes=len(samples), input_id=input_id)


def estimate(net: Network, image: Tensor | np.ndarray, config: McConfig,
             workers: int = 1, input_id: str = "") -> McEstimate:
    return McEstimate.from_samples(mc_sample(net, image, config, workers), input_id)


def mean_uncertainty_error(truths: np.ndarray, means: np.ndarray, variances: np.ndarray,
                           eps: float = 1e-6) -> float:
    """Mean of |truth - mean| / max(variance, eps) over a record set.

    Low values mean the variance grows where the error grows; the floor
    keeps near-zero variances from dominating the average.
    """
    truths = np.asarray(truths, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    if not (truths.shape == means.shape == variances.shape) or truths.ndim != 1:
        raise ShapeError(
            f"mismatched record vectors: {truths.shape}, {means.shape}, {variances.shape}")
    if truths.size < 1:
        raise ShapeError("mean_uncertainty_error over zero records")
    if not (eps > 0.0):
        raise ConfigError(f"eps must be positive, got {eps!r}")
    return float(np.mean(np.abs(truths - means) / np.maximum(variances, eps)))


@dataclass
class BinnedReport:
    """Per-bin aggregates of estimates along the true label axis.

    Out-of-range labels clamp into the first or last bin, so counts always
    sum to the number of records.  Empty bins report zero aggregates.
    """

    edges: np.ndarray
    counts: np.ndarray
    mean_prediction: np.ndarray
    mean_variance: np.ndarray
    mean_abs_error: np.ndarray

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    def rows(self) -> list[list]:
        out = []
        for i in range(self.n_bins):
            out.append([self.edges[i], self.edges[i + 1], int(self.counts[i]),
                        self.mean_prediction[i], self.mean_variance[i],
                        self.mean_abs_error[i]])
        return out


BINNED_COLUMNS = ["bin_lo", "bin_hi", "count", "mean_prediction", "mean_variance",
                  "mean_abs_error"]


def binned_statistics(truths: np.ndarray, estimates: list[McEstimate],
                      edges: np.ndarray) -> BinnedReport:
    """Group estimates into label bins and average their moments."""
    truths = np.asarray(truths, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.float64)
    if len(truths) != len(estimates):
        raise ShapeError(f"{len(truths)} truths but {len(estimates)} estimates")
    if len(truths) < 1:
        raise ShapeError("binned_statistics over zero records")
    if edges.ndim != 1 or len(edges) < 2:
        raise ConfigError(f"need at least two bin edges, got shape {edges.shape}")
    if np.any(np.diff(edges) <= 0.0):
        raise ConfigError("bin edges must be strictly increasing")
    n_bins = len(edges) - 1
    idx = np.clip(np.searchsorted(edges, truths, side="right") - 1, 0, n_bins - 1)

    means = np.array([e.mean for e in estimates])
    variances = np.array([e.variance for e in estimates])
    errors = np.abs(truths - means)
    counts = np.bincount(idx, minlength=n_bins)
    mean_pred = np.zeros(n_bins)
    mean_var = np.zeros(n_bins)
    mean_err = np.zeros(n_bins)
    occupied = counts > 0
    mean_pred[occupied] = np.bincount(idx, weights=means, minlength=n_bins)[occupied] / counts[occupied]
    mean_var[occupied] = np.bincount(idx, weights=variances, minlength=n_bins)[occupied] / counts[occupied]
    mean_err[occupied] = np.bincount(idx, weights=errors, minlength=n_bins)[occupied] / counts[occupied]
    return BinnedReport(edges=edges, counts=counts, mean_prediction=mean_pred,
                        mean_variance=mean_var, mean_abs_error=mean_err)


def uniform_edges(lo: float, hi: float, n_bins: int) -> np.ndarray:
    if not (hi > lo):
        raise ConfigError(f"bin range must satisfy hi > lo, got [{lo}, {hi}]")
    if n_bins < 1:
        raise ConfigError(f"n_bins must be >= 1, got {n_bins}")
    return np.linspace(lo, hi, n_bins + 1)
