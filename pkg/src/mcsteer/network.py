"""The steering regression network.

A stack of strided valid convolutions with ReLU feeding a fully connected
funnel that ends in a single linear output unit: the commanded inverse
turning radius.  Dropout sits after every hidden layer's activation and
never after the output unit.  Convolutional stages use a configurable mask
granularity (spatial by default, element-wise for comparison runs); the
fully connected stages always use element-wise masks.

Forward passes run in one of two modes.  ``Deterministic`` applies no masks
at all; because masks use inverted scaling, the deterministic pass is the
expectation of the stochastic one.  ``Stochastic(seed, pass_index)`` draws
fresh masks per layer, derived from ``(seed, layer index, pass_index)``, so
a pass is reproducible from its coordinates alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ComputationTape, Parameter, Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .dropout import DropoutKind, DropoutMask, apply_dropout, sample_elementwise_mask, \
    sample_spatial_mask
from .errors import ConfigError, DataFormatError, NumericError, ShapeError
from .seeding import derive_seed, rng_from


@dataclass(frozen=True)
class Deterministic:
    """No masks; the mean-field pass used for evaluation inside training."""


@dataclass(frozen=True)
class Stochastic:
    """Masked pass ``pass_index`` of a Monte-Carlo or training sequence."""

    seed: int
    pass_index: int = 0


DETERMINISTIC = Deterministic()
Mode = Deterministic | Stochastic


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok)


@dataclass(frozen=True)
class NetworkConfig:
    """Geometry and dropout rates; validated on construction.

    The default profile is five 5x5 convolutions with stride pattern
    (2, 1, 2, 1, 2) over a 64x96 grayscale input, then a 128-64-16-1 fully
    connected funnel, keep probability 0.9 on convolutional stages and 0.5
    on fully connected hidden stages.
    """

    input_shape: tuple[int, int, int] = (1, 64, 96)
    conv_channels: tuple[int, ...] = (16, 24, 32, 48, 64)
    conv_kernel: int = 5
    conv_strides: tuple[int, ...] = (2, 1, 2, 1, 2)
    fc_widths: tuple[int, ...] = (128, 64, 16, 1)
    conv_keep_prob: float = 0.9
    fc_keep_prob: float = 0.5

    def __post_init__(self):
        if len(self.input_shape) != 3 or any(n < 1 for n in self.input_shape):
            raise ConfigError(f"input_shape must be three positive extents, got {self.input_shape}")
        if not self.conv_channels or any(c < 1 for c in self.conv_channels):
            raise ConfigError(f"conv_channels must be positive, got {self.conv_channels}")
        if len(self.conv_strides) != len(self.conv_channels):
            raise ConfigError(
                f"{len(self.conv_strides)} strides for {len(self.conv_channels)} conv layers")
        if any(s < 1 for s in self.conv_strides):
            raise ConfigError(f"conv_strides must be positive, got {self.conv_strides}")
        if self.conv_kernel < 1:
            raise ConfigError(f"conv_kernel must be >= 1, got {self.conv_kernel}")
        if not self.fc_widths or any(w < 1 for w in self.fc_widths):
            raise ConfigError(f"fc_widths must be positive, got {self.fc_widths}")
        if self.fc_widths[-1] != 1:
            raise ConfigError(f"final fc width must be 1, got {self.fc_widths[-1]}")
        for name, p in (("conv_keep_prob", self.conv_keep_prob), ("fc_keep_prob", self.fc_keep_prob)):
            if not (0.0 < float(p) <= 1.0):
                raise ConfigError(f"{name} must be in (0, 1], got {p!r}")
        self.conv_shapes()  # fail at construction if any extent underflows

    def conv_shapes(self) -> list[tuple[int, int, int]]:
        """Output shape (C, H, W) after each conv stage, checking underflow."""
        c, h, w = self.input_shape
        k = self.conv_kernel
        shapes = []
        for i, (cout, stride) in enumerate(zip(self.conv_channels, self.conv_strides)):
            if h < k or w < k:
                raise ConfigError(
                    f"conv layer {i + 1}: input {h}x{w} is smaller than the {k}x{k} kernel")
            h = (h - k) // stride + 1
            w = (w - k) // stride + 1
            c = cout
            shapes.append((c, h, w))
        return shapes

    def feature_count(self) -> int:
        c, h, w = self.conv_shapes()[-1]
        return c * h * w

    def to_header(self) -> dict[str, str]:
        return {
            "net.input_shape": ",".join(map(str, self.input_shape)),
            "net.conv_channels": ",".join(map(str, self.conv_channels)),
            "net.conv_kernel": str(self.conv_kernel),
            "net.conv_strides": ",".join(map(str, self.conv_strides)),
            "net.fc_widths": ",".join(map(str, self.fc_widths)),
            "net.conv_keep_prob": repr(self.conv_keep_prob),
            "net.fc_keep_prob": repr(self.fc_keep_prob),
        }

    @classmethod
    def from_header(cls, header: dict[str, str]) -> "NetworkConfig":
        try:
            return cls(
                input_shape=_parse_ints(header["net.input_shape"]),
                conv_channels=_parse_ints(header["net.conv_channels"]),
                conv_kernel=int(header["net.conv_kernel"]),
                conv_strides=_parse_ints(header["net.conv_strides"]),
                fc_widths=_parse_ints(header["net.fc_widths"]),
                conv_keep_prob=float(header["net.conv_keep_prob"]),
                fc_keep_prob=float(header["net.fc_keep_prob"]),
            )
        except KeyError as e:
            raise DataFormatError(f"checkpoint header is missing {e.args[0]!r}") from None


@dataclass(frozen=True)
class LabelScaler:
    """Affine standardization of labels; stored with the network.

    Training regresses standardized labels, so predictive means and
    variances come out in standardized units and are mapped back through
    ``inverse`` / ``inverse_variance`` when a physical command is needed.
    """

    mean: float
    std: float

    @classmethod
    def fit(cls, labels: np.ndarray) -> "LabelScaler":
        labels = np.asarray(labels, dtype=np.float64)
        if labels.size < 1:
            raise ShapeError("cannot fit a scaler to zero labels")
        std = float(np.std(labels))
        if not np.isfinite(std) or std < 1e-12:
            std = 1.0  # degenerate label set: fall back to centering only
        return cls(mean=float(np.mean(labels)), std=std)

    def transform(self, y):
        return (np.asarray(y, dtype=np.float64) - self.mean) / self.std

    def inverse(self, y):
        return np.asarray(y, dtype=np.float64) * self.std + self.mean

    def inverse_variance(self, var):
        return np.asarray(var, dtype=np.float64) * self.std ** 2


class Network:
    """Parameters plus the forward pass; everything else is free functions.

    ``input_stats`` holds per-dataset pixel mean and std, fitted once at
    training time.  Frames stay raw everywhere else (disk, simulator,
    callers); the forward pass centers them internally.  Without this an
    eight-layer Glorot stack attenuates unit-interval pixels far below the
    standardized label scale and early gradients are unusably small.
    """

    def __init__(self, config: NetworkConfig,
                 conv_params: Sequence[tuple[Parameter, Parameter]],
                 fc_params: Sequence[tuple[Parameter, Parameter]],
                 conv_dropout_kind: DropoutKind = DropoutKind.SPATIAL,
                 scaler: LabelScaler | None = None,
                 input_stats: tuple[float, float] | None = None):
        self.config = config
        self.conv_params = list(conv_params)
        self.fc_params = list(fc_params)
        self.conv_dropout_kind = DropoutKind(conv_dropout_kind)
        self.scaler = scaler
        self.input_stats = (None if input_stats is None
                            else (float(input_stats[0]), float(input_stats[1])))

    def parameters(self) -> list[Parameter]:
        out = []
        for k, b in self.conv_params:
            out += [k, b]
        for w, b in self.fc_params:
            out += [w, b]
        return out

    def _mask(self, shape: tuple[int, ...], batched: bool, kind: DropoutKind,
              keep_prob: float, layer_index: int, mode: Stochastic) -> DropoutMask:
        seed = derive_seed(mode.seed, "mask", layer_index, mode.pass_index)
        if kind is DropoutKind.ELEMENTWISE:
            return sample_elementwise_mask(shape, keep_prob, seed)
        if batched:
            b, c = shape[0], shape[1]
            m = sample_spatial_mask(b * c, 2, keep_prob, seed)
            values = Tensor(m.values.data.reshape(b, c, 1, 1))
            return DropoutMask(values, m.granularity, m.keep_prob, m.seed_used)
        return sample_spatial_mask(shape[0], 2, keep_prob, seed)

    def forward(self, images: Tensor, mode: Mode = DETERMINISTIC,
                tape: ComputationTape | None = None) -> Tensor:
        """Predict standardized labels: rank-0 for [C,H,W], [B] for [B,C,H,W]."""
        if not isinstance(images, Tensor):
            images = Tensor(images)
        if images.rank not in (3, 4):
            raise ShapeError(f"forward expects [C,H,W] or [B,C,H,W], got rank {images.rank}")
        batched = images.rank == 4
        if tuple(images.shape[-3:]) != tuple(self.config.input_shape):
            raise ShapeError(
                f"input shape {tuple(images.shape[-3:])} does not match "
                f"configured {tuple(self.config.input_shape)}")
        stochastic = isinstance(mode, Stochastic)

        x = images
        if self.input_stats is not None:
            m, s = self.input_stats
            x = Tensor((x.data - m) / s)  # constant affine on a leaf; no tape entry needed
        for i, ((kern, bias), stride) in enumerate(zip(self.conv_params, self.config.conv_strides)):
            x = ad.conv2d(x, kern, bias, stride, tape)
            x = ad.relu(x, tape)
            if stochastic and self.config.conv_keep_prob < 1.0:
                mask = self._mask(x.shape, batched, self.conv_dropout_kind,
                                  self.config.conv_keep_prob, i, mode)
                x = apply_dropout(x, mask, tape)

        feat = self.config.feature_count()
        x = ad.reshape(x, (x.shape[0], feat) if batched else (feat,), tape)

        n_conv = len(self.conv_params)
        last = len(self.fc_params) - 1
        for j, (w, b) in enumerate(self.fc_params):
            x = ad.dense(x, w, b, tape)
            if j == last:
                break  # output unit: linear, never masked
            x = ad.relu(x, tape)
            if stochastic and self.config.fc_keep_prob < 1.0:
                mask = self._mask(x.shape, batched, DropoutKind.ELEMENTWISE,
                                  self.config.fc_keep_prob, n_conv + j, mode)
                x = apply_dropout(x, mask, tape)

        return ad.reshape(x, (x.shape[0],) if batched else (), tape)


HIDDEN_BIAS_INIT = 0.05


def build_network(config: NetworkConfig, init_seed: int,
                  conv_dropout_kind: DropoutKind = DropoutKind.SPATIAL) -> Network:
    """Fresh network: Glorot-uniform weights, small positive hidden biases.

    The positive bias keeps ReLU units initially alive; with zero biases a
    narrow profile can go completely dark after two layers.  The output
    unit's bias starts at zero since labels are standardized around zero.
    """
    k = config.conv_kernel
    c_in = config.input_shape[0]
    conv_params = []
    for i, c_out in enumerate(config.conv_channels):
        kern = ad.glorot_uniform((c_out, c_in, k, k), fan_in=c_in * k * k,
                                 fan_out=c_out * k * k, seed=derive_seed(init_seed, "conv", i))
        conv_params.append((Parameter(f"conv{i}.kernels", kern),
                            Parameter(f"conv{i}.bias",
                                      Tensor(np.full(c_out, HIDDEN_BIAS_INIT)))))
        c_in = c_out
    n_in = config.feature_count()
    fc_params = []
    for j, width in enumerate(config.fc_widths):
        w = ad.glorot_uniform((width, n_in), fan_in=n_in, fan_out=width,
                              seed=derive_seed(init_seed, "fc", j))
        bias_init = 0.0 if j == len(config.fc_widths) - 1 else HIDDEN_BIAS_INIT
        fc_params.append((Parameter(f"fc{j}.weights", w),
                          Parameter(f"fc{j}.bias", Tensor(np.full(width, bias_init)))))
        n_in = width
    return Network(config, conv_params, fc_params, conv_dropout_kind)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings.  Plain SGD; no momentum, no schedules."""

    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 10
    run_seed: int = 0

    def __post_init__(self):
        lr = float(self.learning_rate)
        if not np.isfinite(lr) or lr < 0.0:
            raise ConfigError(f"learning_rate must be finite and >= 0, got {self.learning_rate!r}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class EpochStats:
    """Deterministic-mode MSE after the epoch's updates.

    Both fields are measured with masks off, the same way
    ``TrainLog.initial_train_mse`` is, so convergence thresholds compare
    like with like; the noisy per-batch losses seen by the optimizer are
    not logged.
    """

    epoch: int
    train_mse: float
    val_mse: float


@dataclass
class TrainLog:
    """Per-epoch losses in standardized label units.

    ``wall_clock_seconds`` is informational and deliberately excluded from
    serialized artifacts, which must be byte-identical across reruns.
    """

    dropout_kind: str
    run_seed: int
    initial_train_mse: float
    epochs: list[EpochStats] = field(default_factory=list)
    wall_clock_seconds: float = 0.0

    def final_train_mse(self) -> float:
        return self.epochs[-1].train_mse if self.epochs else self.initial_train_mse


def dataset_mse(net: Network, images: np.ndarray, labels_std: np.ndarray,
                chunk: int = 32) -> float:
    """Deterministic-mode MSE over a whole array set, chunked for memory."""
    n = len(labels_std)
    if n == 0:
        raise ShapeError("dataset_mse over zero records")
    total = 0.0
    for i in range(0, n, chunk):
        pred = net.forward(Tensor(images[i:i + chunk])).data
        d = pred - labels_std[i:i + chunk]
        total += float(np.dot(d, d))
    return total / n


def train(net: Network, images: np.ndarray, labels: np.ndarray, config: TrainConfig,
          val_images: np.ndarray | None = None, val_labels: np.ndarray | None = None,
          epoch_offset: int = 0) -> TrainLog:
    """SGD on mean squared error of standardized labels.

    Labels come in raw physical units; the network's scaler (fitted here on
    first use) maps them to standardized ones.  Shuffling, mask draws, and
    therefore the whole trajectory are functions of ``config.run_seed``.
    ``epoch_offset`` continues the shuffle/mask streams when resuming.
    """
    import time
    t0 = time.monotonic()
    n = len(images)
    if n != len(labels):
        raise ShapeError(f"{n} images but {len(labels)} labels")
    if n < 1:
        raise ShapeError("cannot train on zero records")
    if net.scaler is None:
        net.scaler = LabelScaler.fit(labels)
    if net.input_stats is None:
        s = float(np.std(images))
        net.input_stats = (float(np.mean(images)),
                           s if np.isfinite(s) and s >= 1e-12 else 1.0)
    labels_std = net.scaler.transform(labels)
    if val_images is None:
        val_images, val_labels_std = images, labels_std
    else:
        val_labels_std = net.scaler.transform(val_labels)

    log = TrainLog(dropout_kind=net.conv_dropout_kind.value, run_seed=config.run_seed,
                   initial_train_mse=dataset_mse(net, images, labels_std))
    mask_seed = derive_seed(config.run_seed, "train-masks")
    params = net.parameters()
    bs = config.batch_size
    n_batches = (n + bs - 1) // bs
    val_is_train = val_images is images
    for e in range(config.epochs):
        e_abs = epoch_offset + e
        perm = rng_from(config.run_seed, "shuffle", e_abs).permutation(n)
        for bi in range(n_batches):
            idx = perm[bi * bs:(bi + 1) * bs]
            tape = ComputationTape()
            pred = net.forward(Tensor(images[idx]),
                               Stochastic(mask_seed, pass_index=e_abs * n_batches + bi),
                               tape=tape)
            loss = ad.mse(pred, Tensor(labels_std[idx]), tape=tape)
            if not np.isfinite(loss.item()):
                raise NumericError(
                    f"training diverged: non-finite loss at epoch {e_abs}, batch {bi}")
            ad.backward(loss, tape)
            ad.sgd_step(params, config.learning_rate)
        train_mse = dataset_mse(net, images, labels_std)
        stats = EpochStats(epoch=e_abs, train_mse=train_mse,
                           val_mse=train_mse if val_is_train
                           else dataset_mse(net, val_images, val_labels_std))
        if not np.isfinite(stats.val_mse):
            raise NumericError(f"validation loss went non-finite at epoch {e_abs}")
        log.epochs.append(stats)
    log.wall_clock_seconds = time.monotonic() - t0
    return log


def train_paired(config: NetworkConfig, images: np.ndarray, labels: np.ndarray,
                 tc: TrainConfig, val_images: np.ndarray | None = None,
                 val_labels: np.ndarray | None = None
                 ) -> dict[DropoutKind, tuple[Network, TrainLog]]:
    """Train one network per mask granularity from identical starting points.

    Both runs share initialization, data order, and mask seed streams; the
    only difference is how convolutional masks are drawn, which is what a
    granularity comparison should isolate.
    """
    out: dict[DropoutKind, tuple[Network, TrainLog]] = {}
    for kind in (DropoutKind.SPATIAL, DropoutKind.ELEMENTWISE):
        net = build_network(config, derive_seed(tc.run_seed, "init"), kind)
        log = train(net, images, labels, tc, val_images, val_labels)
        out[kind] = (net, log)
    return out


def epochs_to_reach(log: TrainLog, fraction: float) -> int | None:
    """First epoch count at which train MSE <= fraction * initial, else None."""
    target = fraction * log.initial_train_mse
    for stats in log.epochs:
        if stats.train_mse <= target:
            return stats.epoch + 1
    return None


def save_network(path: str, net: Network, extra_header: dict[str, str] | None = None) -> None:
    header = dict(net.config.to_header())
    header["dropout.conv_kind"] = net.conv_dropout_kind.value
    if net.scaler is not None:
        header["scaler.mean"] = repr(net.scaler.mean)
        header["scaler.std"] = repr(net.scaler.std)
    if net.input_stats is not None:
        header["input.mean"] = repr(net.input_stats[0])
        header["input.std"] = repr(net.input_stats[1])
    if extra_header:
        overlap = set(extra_header) & set(header)
        if overlap:
            raise ConfigError(f"extra header keys collide: {sorted(overlap)}")
        header.update(extra_header)
    save_checkpoint(path, [(p.name, p.value.data) for p in net.parameters()], header)


def load_network(path: str) -> tuple[Network, dict[str, str]]:
    """Rebuild a network from a checkpoint; returns it with the raw header."""
    header, arrays = load_checkpoint(path)
    config = NetworkConfig.from_header(header)
    kind = DropoutKind(header.get("dropout.conv_kind", DropoutKind.SPATIAL.value))
    scaler = None
    if "scaler.mean" in header:
        scaler = LabelScaler(mean=float(header["scaler.mean"]), std=float(header["scaler.std"]))
    net = build_network(config, init_seed=0, conv_dropout_kind=kind)
    net.scaler = scaler
    if "input.mean" in header:
        net.input_stats = (float(header["input.mean"]), float(header["input.std"]))
    expected = [(p.name, p.value.shape) for p in net.parameters()]
    got = [(name, arr.shape) for name, arr in arrays]
    if expected != got:
        raise DataFormatError(
            f"{path}: parameter list {got} does not match configured geometry {expected}")
    for p, (_, arr) in zip(net.parameters(), arrays):
        p.value.data[...] = arr
    return net, header
