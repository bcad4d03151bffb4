"""Forward and backward implementations of every primitive the attribute network needs."""
from __future__ import annotations

import numpy as np
from typing_extensions import override

from attrnet.errors import DimensionError, NumericError, ParameterError
from attrnet.tensor.tensor import Function, Tensor

# region convolution


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    """Return the output length of a convolution along one spatial axis."""
    return (size + 2 * padding - kernel) // stride + 1


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[np.newaxis], True
    return x, False


def im2col(x: np.ndarray, kernel_h: int, kernel_w: int, stride: int, padding: int) -> np.ndarray:
    """Unfold `[B,C,H,W]` into rows of receptive fields, shape `[B*H'*W', C*kH*kW]`."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (kernel_h, kernel_w), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    batch, channels, out_h, out_w = windows.shape[:4]
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch * out_h * out_w, channels * kernel_h * kernel_w)


def col2im(
    cols: np.ndarray,
    input_shape: tuple[int, ...],
    kernel_h: int,
    kernel_w: int,
    stride: int,
    padding: int,
) -> np.ndarray:
    """Fold rows of receptive fields back onto `input_shape` (`[B,C,H,W]`), summing overlaps."""
    batch, channels, height, width = input_shape
    out_h = conv_output_size(height, kernel_h, stride, padding)
    out_w = conv_output_size(width, kernel_w, stride, padding)
    cols = cols.reshape(batch, out_h, out_w, channels, kernel_h, kernel_w)
    padded = np.zeros((batch, channels, height + 2 * padding, width + 2 * padding), dtype=cols.dtype)
    for i in range(kernel_h):
        for j in range(kernel_w):
            padded[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += cols[
                :,
                :,
                :,
                :,
                i,
                j,
            ].transpose(0, 3, 1, 2)
    return padded[:, :, padding : padding + height, padding : padding + width]


def conv2d_input_transpose(
    grad: np.ndarray,
    kernels: np.ndarray,
    input_shape: tuple[int, ...],
    stride: int,
    padding: int,
) -> np.ndarray:
    """Map a gradient on a convolution's output (`[B,O,H',W']`) back onto its input.

    This is the input half of the convolution's backward pass; the attention module reuses it with
    positive kernels.
    """
    out_channels = kernels.shape[0]
    grad_rows = grad.transpose(0, 2, 3, 1).reshape(-1, out_channels)
    cols = grad_rows @ kernels.reshape(out_channels, -1)
    return col2im(cols, input_shape, kernels.shape[2], kernels.shape[3], stride, padding)


class Conv2d(Function):
    kind = "conv2d"

    stride: int
    padding: int

    @override
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        x, kernels, bias = arrays
        batch_x, self._unbatched = _as_batch(x)
        self._input_shape = batch_x.shape
        out_channels, _, kernel_h, kernel_w = kernels.shape
        out_h = conv_output_size(batch_x.shape[2], kernel_h, self.stride, self.padding)
        out_w = conv_output_size(batch_x.shape[3], kernel_w, self.stride, self.padding)
        self._cols = im2col(batch_x, kernel_h, kernel_w, self.stride, self.padding)
        self._kernels = kernels
        rows = self._cols @ kernels.reshape(out_channels, -1).T + bias
        output = np.ascontiguousarray(rows.reshape(batch_x.shape[0], out_h, out_w, out_channels).transpose(0, 3, 1, 2))
        return output[0] if self._unbatched else output

    @override
    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        if self._unbatched:
            grad = grad[np.newaxis]
        out_channels = self._kernels.shape[0]
        grad_rows = grad.transpose(0, 2, 3, 1).reshape(-1, out_channels)
        grad_kernels = (grad_rows.T @ self._cols).reshape(self._kernels.shape)
        grad_bias = grad_rows.sum(axis=0)
        grad_input = None
        if self.inputs[0].requires_grad:
            grad_input = conv2d_input_transpose(grad, self._kernels, self._input_shape, self.stride, self.padding)
            if self._unbatched:
                grad_input = grad_input[0]
        return grad_input, grad_kernels, grad_bias


def conv2d(input: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:  # noqa: A002
    """Cross-correlate `input` (`[C,H,W]` or `[B,C,H,W]`) with `kernels` (`[O,C,kH,kW]`) and add `bias`.

    Args:
        input (Tensor): The feature map(s).
        kernels (Tensor): The filters; no kernel flip is applied.
        bias (Tensor): One value per output channel.
        stride (int, optional): Step between receptive fields. Defaults to 1.
        padding (int, optional): Zeros added on each spatial border. Defaults to 0.

    Raises:
        DimensionError: If the shapes disagree or the kernel does not fit the padded input.
        ParameterError: If `stride < 1` or `padding < 0`.
        NumericError: If the input contains NaN or Inf.

    Returns:
        Tensor: `[O,H',W']` or `[B,O,H',W']` with `H' = (H + 2*padding - kH) // stride + 1`.
    """
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ParameterError(f"padding must be >= 0, got {padding}")
    if input.ndim not in (3, 4):
        raise DimensionError(f"conv2d input must be [C,H,W] or [B,C,H,W], got {input.shape}")
    if kernels.ndim != 4:
        raise DimensionError(f"conv2d kernels must be [O,C,kH,kW], got {kernels.shape}")
    channels, height, width = input.shape[-3:]
    out_channels, kernel_channels, kernel_h, kernel_w = kernels.shape
    if kernel_channels != channels:
        raise DimensionError(f"kernels expect {kernel_channels} input channels, input has {channels}")
    if bias.shape != (out_channels,):
        raise DimensionError(f"bias must have shape ({out_channels},), got {bias.shape}")
    if kernel_h > height + 2 * padding or kernel_w > width + 2 * padding:
        raise DimensionError(
            f"kernel {kernel_h}x{kernel_w} does not fit input {height}x{width} with padding {padding}",
        )
    if not np.all(np.isfinite(input.data)):
        raise NumericError("conv2d input contains non-finite values")
    return Conv2d.apply(input, kernels, bias, stride=stride, padding=padding)


# endregion

# region pooling


def maxpool2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return the 2x2/stride-2 max of `[B,C,H,W]` and the winning position (0..3, row-major) per window.

    Ties go to the first position in the window.
    """
    batch, channels, height, width = x.shape
    windows = (
        x.reshape(batch, channels, height // 2, 2, width // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(batch, channels, height // 2, width // 2, 4)
    )
    argmax = windows.argmax(axis=-1)
    return np.take_along_axis(windows, argmax[..., np.newaxis], axis=-1)[..., 0], argmax


def maxpool2_scatter(values: np.ndarray, argmax: np.ndarray) -> np.ndarray:
    """Route pooled values (`[B,C,H/2,W/2]`) back to the argmax position of each window."""
    batch, channels, half_h, half_w = values.shape
    windows = np.zeros((batch, channels, half_h, half_w, 4), dtype=values.dtype)
    np.put_along_axis(windows, argmax[..., np.newaxis], values[..., np.newaxis], axis=-1)
    return (
        windows.reshape(batch, channels, half_h, half_w, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(batch, channels, half_h * 2, half_w * 2)
    )


class MaxPool2(Function):
    kind = "maxpool2"

    @override
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        batch_x, self._unbatched = _as_batch(arrays[0])
        output, self.argmax = maxpool2_forward(batch_x)
        return output[0] if self._unbatched else output

    @override
    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        batch_grad = grad[np.newaxis] if self._unbatched else grad
        grad_input = maxpool2_scatter(batch_grad, self.argmax)
        return (grad_input[0] if self._unbatched else grad_input,)


def maxpool2(input: Tensor) -> Tensor:  # noqa: A002
    """2x2 max pooling with stride 2 over `[C,H,W]` or `[B,C,H,W]`; H and W must be even."""
    if input.ndim not in (3, 4):
        raise DimensionError(f"maxpool2 input must be [C,H,W] or [B,C,H,W], got {input.shape}")
    height, width = input.shape[-2:]
    if height % 2 or width % 2:
        raise DimensionError(f"maxpool2 needs even spatial dimensions, got {height}x{width}")
    return MaxPool2.apply(input)


# endregion

# region activations


class ReLU(Function):
    kind = "relu"

    @override
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        self._active = arrays[0] > 0
        return np.where(self._active, arrays[0], 0).astype(arrays[0].dtype, copy=False)

    @override
    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (grad * self._active,)


def relu(input: Tensor) -> Tensor:  # noqa: A002
    """Elementwise `max(0, x)`; the gradient at exactly 0 is 0."""
    return ReLU.apply(input)


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    """Sigmoid in the branch form that never overflows, clamped inside the open interval (0, 1)."""
    positive = x >= 0
    exp_neg_abs = np.exp(-np.abs(x))
    values = np.where(positive, 1 / (1 + exp_neg_abs), exp_neg_abs / (1 + exp_neg_abs))
    dtype = x.dtype if np.issubdtype(x.dtype, np.floating) else np.dtype(np.float64)
    lower = np.finfo(dtype).tiny
    upper = np.nextafter(dtype.type(1), dtype.type(0))
    return np.clip(values, lower, upper).astype(dtype, copy=False)


class Sigmoid(Function):
    kind = "sigmoid"

    @override
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        self._output = stable_sigmoid(arrays[0])
        return self._output

    @override
    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (grad * self._output * (1 - self._output),)


def sigmoid(input: Tensor) -> Tensor:  # noqa: A002
    """Elementwise `1 / (1 + exp(-x))`."""
    return Sigmoid.apply(input)


# endregion

# region dense


class Affine(Function):
    kind = "affine"

    @override
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        x, weight, bias = arrays
        self._x = x
        self._weight = weight
        return x @ weight.T + bias

    @override
    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        rows = np.atleast_2d(grad)
        x_rows = np.atleast_2d(self._x)
        grad_input = (rows @ self._weight).reshape(self._x.shape)
        return grad_input, rows.T @ x_rows, rows.sum(axis=0)


def affine(input: Tensor, weight: Tensor, bias: Tensor) -> Tensor:  # noqa: A002
    """Return `W.x + b` for `input` of shape `[D_in]` or `[B,D_in]`, `weight` `[D_out,D_in]`, `bias` `[D_out]`."""
    if input.ndim not in (1, 2):
        raise DimensionError(f"affine input must be [D] or [B,D], got {input.shape}")
    if weight.ndim != 2 or weight.shape[1] != input.shape[-1]:
        raise DimensionError(f"affine weight {weight.shape} does not match input {input.shape}")
    if bias.shape != (weight.shape[0],):
        raise DimensionError(f"affine bias must have shape ({weight.shape[0]},), got {bias.shape}")
    return Affine.apply(input, weight, bias)


class Dropout(Function):
    kind = "dropout"

    rate: float
    rng: np.random.Generator

    @override
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        x = arrays[0]
        keep = self.rng.random(x.shape) >= self.rate
        self._scale = (keep / (1 - self.rate)).astype(x.dtype)
        return x * self._scale

    @override
    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (grad * self._scale,)


def dropout(input: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:  # noqa: A002
    """Inverted dropout: in training, zero each element with probability `rate` and scale survivors by
    `1 / (1 - rate)`; in evaluation, the identity.
    """
    if not 0 <= rate < 1:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return input
    return Dropout.apply(input, rate=rate, rng=rng)


class Flatten(Function):
    kind = "flatten"

    @override
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        x = arrays[0]
        self._shape = x.shape
        return x.reshape(-1) if x.ndim == 3 else x.reshape(x.shape[0], -1)

    @override
    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (grad.reshape(self._shape),)


def flatten(input: Tensor) -> Tensor:  # noqa: A002
    """Flatten `[C,H,W]` to `[C*H*W]`, or `[B,C,H,W]` to `[B,C*H*W]`."""
    if input.ndim not in (3, 4):
        raise DimensionError(f"flatten input must be [C,H,W] or [B,C,H,W], got {input.shape}")
    return Flatten.apply(input)


# endregion

# region elementwise


class Add(Function):
    kind = "add"

    @override
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return arrays[0] + arrays[1]

    @override
    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return grad, grad


class Mul(Function):
    kind = "mul"

    @override
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        self._a, self._b = arrays
        return arrays[0] * arrays[1]

    @override
    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return grad * self._b, grad * self._a


class Sum(Function):
    kind = "sum"

    @override
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        self._shape = arrays[0].shape
        return np.asarray(arrays[0].sum(), dtype=arrays[0].dtype)

    @override
    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return (np.broadcast_to(grad, self._shape).copy(),)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op} needs equal shapes, got {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return Add.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    return Mul.apply(a, b)


def tensor_sum(x: Tensor) -> Tensor:
    """Sum every element into a scalar."""
    return Sum.apply(x)


# endregion

__all__ = [
    "conv2d",
    "maxpool2",
    "relu",
    "sigmoid",
    "affine",
    "dropout",
    "flatten",
    "add",
    "mul",
    "tensor_sum",
    "stable_sigmoid",
    "conv_output_size",
    "conv2d_input_transpose",
    "maxpool2_forward",
    "maxpool2_scatter",
    "im2col",
    "col2im",
]
