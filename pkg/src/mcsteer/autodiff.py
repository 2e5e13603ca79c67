"""Reverse-mode automatic differentiation over dense float64 arrays.

This is a deliberately small engine: it supports exactly the operations the
steering network needs (strided valid convolution, fully connected layers,
ReLU, mean squared error, reshapes, and multiplication by a constant mask)
and nothing else.  Arrays are float64 and row-major throughout; NumPy
provides storage and BLAS-backed arithmetic, while the graph bookkeeping and
every derivative rule live here.

Differentiation is tape based.  Operations accept an optional
:class:`ComputationTape`; when one is passed, the op appends a node holding
its inputs, output, and a closure that maps the output adjoint to input
adjoints.  Appending happens in execution order, so the reverse pass is a
single backward sweep over the node list -- forward order is already a
topological order.  With no tape the ops are plain functions with no graph
side effects, which is what inference uses.

Shape conventions
-----------------
Images are ``[C, H, W]`` or batched ``[B, C, H, W]``.  Convolution kernels
are ``[C_out, C_in, KH, KW]`` with per-output-channel bias ``[C_out]``.
Dense weights are ``[out, in]`` with bias ``[out]``.  Losses are rank-0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NumericError, ShapeError, TapeError


class Tensor:
    """A dense n-dimensional float64 value.

    Tensors are immutable by convention: nothing in this package writes to
    ``.data`` after construction except the optimizer, which owns the
    parameter values it updates.  Zero-sized extents are rejected because no
    operation here can produce or consume an empty array meaningfully.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 0 and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)  # ascontiguousarray would lift rank 0 to rank 1
        if arr.size == 0:
            bad = [i for i, n in enumerate(arr.shape) if n == 0]
            raise ShapeError(f"tensor extent {bad[0]} is zero (shape {arr.shape})")
        self.data = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def rank(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class Parameter:
    """A named, trainable tensor paired with its gradient accumulator.

    The gradient always has the same shape as the value; ``backward`` adds
    into it and ``sgd_step`` consumes and clears it.
    """

    __slots__ = ("name", "value", "gradient")

    def __init__(self, name: str, value: Tensor):
        if not name:
            raise ShapeError("parameter name must be non-empty")
        self.name = name
        self.value = value if isinstance(value, Tensor) else Tensor(value)
        self.gradient = Tensor(np.zeros_like(self.value.data))

    def zero_grad(self) -> None:
        self.gradient.data[...] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


@dataclass
class TapeNode:
    """One recorded operation: output, inputs, and the local backward rule."""

    op: str
    output: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


class ComputationTape:
    """Append-only record of operations for one forward pass.

    Nodes appear in execution order, which for a single-threaded forward
    pass is a topological order of the graph; the reverse sweep walks the
    list once from the end.  A tape and the parameters it watches belong to
    one training thread.
    """

    def __init__(self):
        self.nodes: list[TapeNode] = []
        self._watched: dict[int, Parameter] = {}

    def record(self, op: str, output: Tensor, inputs: Sequence[Tensor],
               backward: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]) -> None:
        self.nodes.append(TapeNode(op, output, tuple(inputs), backward))

    def watch(self, param: Parameter) -> None:
        self._watched[id(param.value)] = param

    @property
    def watched(self) -> list[Parameter]:
        return list(self._watched.values())

    def produced(self, t: Tensor) -> bool:
        return any(node.output is t for node in self.nodes)


def _as_value(x: Tensor | Parameter, tape: ComputationTape | None) -> Tensor:
    """Unwrap a Parameter to its value tensor, registering it on the tape."""
    if isinstance(x, Parameter):
        if tape is not None:
            tape.watch(x)
        return x.value
    if not isinstance(x, Tensor):
        raise TypeError(f"expected Tensor or Parameter, got {type(x).__name__}")
    return x


def conv2d(x: Tensor | Parameter, kernels: Tensor | Parameter, bias: Tensor | Parameter,
           stride: int, tape: ComputationTape | None = None) -> Tensor:
    """Valid 2-D convolution (no padding) with a square stride.

    ``x`` is ``[C_in, H, W]`` or ``[B, C_in, H, W]``; the output is
    ``[C_out, H', W']`` or ``[B, C_out, H', W']`` with
    ``H' = (H - KH) // stride + 1`` and likewise for width.
    """
    x = _as_value(x, tape)
    kernels = _as_value(kernels, tape)
    bias = _as_value(bias, tape)
    if not isinstance(stride, (int, np.integer)) or stride < 1:
        raise ShapeError(f"conv2d stride must be a positive integer, got {stride!r}")
    if kernels.rank != 4:
        raise ShapeError(f"conv2d kernels must be rank 4 [C_out, C_in, KH, KW], got rank {kernels.rank}")
    if x.rank not in (3, 4):
        raise ShapeError(f"conv2d input must be rank 3 or 4, got rank {x.rank}")
    batched = x.rank == 4
    xd = x.data if batched else x.data[None]
    b, c_in, h, w = xd.shape
    c_out, kc, kh, kw = kernels.shape
    if bias.shape != (c_out,):
        raise ShapeError(f"conv2d bias shape {bias.shape} does not match C_out={c_out}")
    if kc != c_in:
        raise ShapeError(f"conv2d input has C_in={c_in} but kernels expect C_in={kc}")
    if h < kh:
        raise ShapeError(f"conv2d input H={h} is smaller than kernel KH={kh}")
    if w < kw:
        raise ShapeError(f"conv2d input W={w} is smaller than kernel KW={kw}")
    hp = (h - kh) // stride + 1
    wp = (w - kw) // stride + 1

    # Channels-last im2col: one big [B*H'*W', KH*KW*C_in] matrix and a single
    # GEMM carry the whole layer.  Channels-last keeps the gather stride-1 on
    # the innermost axis, which is what makes the copy cheap.
    xl = np.ascontiguousarray(xd.transpose(0, 2, 3, 1))          # [B, H, W, C]
    win = sliding_window_view(xl, (kh, kw), axis=(1, 2))         # [B, H-KH+1, W-KW+1, C, KH, KW]
    win = win[:, ::stride, ::stride]
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))
    cols = cols.reshape(b * hp * wp, kh * kw * c_in)
    kmat = np.ascontiguousarray(kernels.data.transpose(2, 3, 1, 0)).reshape(kh * kw * c_in, c_out)
    out_mat = cols @ kmat
    out_mat += bias.data
    out4 = np.ascontiguousarray(out_mat.reshape(b, hp, wp, c_out).transpose(0, 3, 1, 2))
    out = Tensor(out4 if batched else out4[0])

    if tape is not None:
        kd = kernels.data

        def backward(g: np.ndarray):
            g4 = g if batched else g[None]
            gmat = np.ascontiguousarray(g4.transpose(0, 2, 3, 1)).reshape(b * hp * wp, c_out)
            grad_b = gmat.sum(axis=0)
            gk_mat = cols.T @ gmat                               # [KH*KW*C_in, C_out]
            grad_k = np.ascontiguousarray(
                gk_mat.reshape(kh, kw, c_in, c_out).transpose(3, 2, 0, 1))
            # Input gradient as KH*KW shifted GEMMs: for kernel tap (a, b)
            # the output grid scatters onto input rows a, a+stride, ... --
            # a strided slice assignment, never an index gather.
            kl = kmat.reshape(kh, kw, c_in, c_out)
            gxl = np.zeros((b, h, w, c_in))
            for a in range(kh):
                for bb in range(kw):
                    gi = gmat @ kl[a, bb].T
                    gxl[:, a:a + stride * hp:stride, bb:bb + stride * wp:stride, :] += \
                        gi.reshape(b, hp, wp, c_in)
            grad_x = np.ascontiguousarray(gxl.transpose(0, 3, 1, 2))
            return (grad_x if batched else grad_x[0], grad_k, grad_b)

        tape.record("conv2d", out, (x, kernels, bias), backward)
    return out


def dense(x: Tensor | Parameter, weights: Tensor | Parameter, bias: Tensor | Parameter,
          tape: ComputationTape | None = None) -> Tensor:
    """Affine layer ``x @ W^T + b`` for ``x`` of shape ``[n]`` or ``[B, n]``."""
    x = _as_value(x, tape)
    weights = _as_value(weights, tape)
    bias = _as_value(bias, tape)
    if weights.rank != 2:
        raise ShapeError(f"dense weights must be rank 2 [out, in], got rank {weights.rank}")
    m, n = weights.shape
    if bias.shape != (m,):
        raise ShapeError(f"dense bias shape {bias.shape} does not match out={m}")
    if x.rank not in (1, 2):
        raise ShapeError(f"dense input must be rank 1 or 2, got rank {x.rank}")
    if x.shape[-1] != n:
        raise ShapeError(f"dense input width {x.shape[-1]} does not match in={n}")
    batched = x.rank == 2
    xd = x.data if batched else x.data[None]
    out2 = xd @ weights.data.T + bias.data
    out = Tensor(out2 if batched else out2[0])

    if tape is not None:
        wd = weights.data

        def backward(g: np.ndarray):
            g2 = g if batched else g[None]
            grad_w = g2.T @ xd
            grad_b = g2.sum(axis=0)
            grad_x = g2 @ wd
            return (grad_x if batched else grad_x[0], grad_w, grad_b)

        tape.record("dense", out, (x, weights, bias), backward)
    return out


def relu(x: Tensor | Parameter, tape: ComputationTape | None = None) -> Tensor:
    x = _as_value(x, tape)
    out = Tensor(np.maximum(x.data, 0.0))
    if tape is not None:
        mask = x.data > 0.0

        def backward(g: np.ndarray):
            return (g * mask,)

        tape.record("relu", out, (x,), backward)
    return out


def reshape(x: Tensor | Parameter, shape: tuple[int, ...],
            tape: ComputationTape | None = None) -> Tensor:
    """Reinterpret extents without reordering elements (row-major)."""
    x = _as_value(x, tape)
    try:
        out_data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}") from None
    out = Tensor(out_data)
    if tape is not None:
        in_shape = x.shape

        def backward(g: np.ndarray):
            return (g.reshape(in_shape),)

        tape.record("reshape", out, (x,), backward)
    return out


def scale_by(x: Tensor | Parameter, factor: Tensor,
             tape: ComputationTape | None = None) -> Tensor:
    """Elementwise product with a constant factor (broadcast against ``x``).

    The factor is treated as data, not a differentiable input: gradients
    flow to ``x`` only, scaled by the factor.  Dropout masks apply through
    this op, which is what makes dropped coordinates receive exactly zero
    gradient.
    """
    x = _as_value(x, tape)
    if not isinstance(factor, Tensor):
        factor = Tensor(factor)
    try:
        bshape = np.broadcast_shapes(x.shape, factor.shape)
    except ValueError:
        raise ShapeError(f"factor shape {factor.shape} does not broadcast to {x.shape}") from None
    if bshape != x.shape:
        raise ShapeError(f"factor shape {factor.shape} would enlarge input shape {x.shape}")
    out = Tensor(x.data * factor.data)
    if tape is not None:
        fd = factor.data

        def backward(g: np.ndarray):
            return (g * fd,)

        tape.record("scale_by", out, (x,), backward)
    return out


def mse(pred: Tensor | Parameter, target: Tensor | Parameter,
        tape: ComputationTape | None = None) -> Tensor:
    """Mean squared error over all elements; returns a rank-0 tensor."""
    pred = _as_value(pred, tape)
    target = _as_value(target, tape)
    if pred.shape != target.shape:
        raise ShapeError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    out = Tensor(np.mean(diff * diff))
    if tape is not None:
        n = diff.size

        def backward(g: np.ndarray):
            gp = (2.0 / n) * float(g) * diff
            return (gp, -gp)

        tape.record("mse", out, (pred, target), backward)
    return out


def backward(loss: Tensor, tape: ComputationTape) -> dict[str, Tensor]:
    """Reverse sweep from a scalar loss recorded on ``tape``.

    Adjoints accumulate into ``param.gradient`` for every watched parameter
    (adding to whatever is already there, so callers zero or consume
    gradients between steps).  Returns ``{name: gradient}`` for convenience.
    """
    if not isinstance(loss, Tensor):
        raise TypeError(f"loss must be a Tensor, got {type(loss).__name__}")
    if loss.size != 1:
        raise ShapeError(f"loss must be a single element, got shape {loss.shape}")
    if not tape.nodes:
        raise TapeError("backward called on an empty tape")
    if not tape.produced(loss):
        raise TapeError("loss was not produced by an operation recorded on this tape")

    adjoints: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    for node in reversed(tape.nodes):
        g = adjoints.pop(id(node.output), None)
        if g is None:
            continue  # this value never fed the loss
        input_grads = node.backward(g)
        for inp, ig in zip(node.inputs, input_grads):
            if ig is None:
                continue
            key = id(inp)
            if key in adjoints:
                adjoints[key] = adjoints[key] + ig
            else:
                adjoints[key] = ig

    grads: dict[str, Tensor] = {}
    for param in tape.watched:
        g = adjoints.get(id(param.value))
        if g is not None:
            param.gradient.data += g
        grads[param.name] = param.gradient
    return grads


def sgd_step(params: Iterable[Parameter], learning_rate: float) -> None:
    """Plain gradient descent: ``w -= lr * g``, then clear gradients.

    A zero learning rate is legal (the update is a no-op); negative rates
    are not.  Non-finite gradients abort before any parameter moves.
    """
    lr = float(learning_rate)
    if not np.isfinite(lr) or lr < 0.0:
        raise NumericError(f"learning rate must be finite and >= 0, got {learning_rate!r}")
    params = list(params)
    for p in params:
        if not np.all(np.isfinite(p.gradient.data)):
            raise NumericError(f"non-finite gradient in parameter {p.name!r}")
    for p in params:
        p.value.data -= lr * p.gradient.data
        p.zero_grad()


def glorot_uniform(shape: tuple[int, ...], fan_in: int, fan_out: int,
                   seed: int) -> Tensor:
    """Uniform init on ``[-a, a]`` with ``a = sqrt(6 / (fan_in + fan_out))``."""
    if fan_in < 1 or fan_out < 1:
        raise ShapeError(f"fans must be positive, got fan_in={fan_in}, fan_out={fan_out}")
    a = np.sqrt(6.0 / (fan_in + fan_out))
    rng = np.random.default_rng(seed)
    return Tensor(rng.uniform(-a, a, size=shape))
