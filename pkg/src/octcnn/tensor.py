"""Deterministic dense kernels over (channels, height, width) arrays.

Every kernel takes and returns plain numpy arrays. Inputs are promoted to
float64 for computation; the on-disk format stores float32.
"""

from __future__ import annotations

import contextvars
from dataclasses import dataclass

import numpy as np

_macc_counter: contextvars.ContextVar["MaccCounter | None"] = contextvars.ContextVar(
    "macc_counter", default=None
)


class MaccCounter:
    """Context manager that tallies the multiply-accumulates the kernels execute.

    >>> with MaccCounter() as mc:
    ...     _ = linear(np.ones(3), np.ones((2, 3)), np.zeros(2))
    >>> mc.total
    6
    """

    def __init__(self):
        self.total = 0
        self.by_kernel: dict[str, int] = {}
        self._token = None

    def add(self, kernel: str, n: int) -> None:
        self.total += n
        self.by_kernel[kernel] = self.by_kernel.get(kernel, 0) + n

    def __enter__(self):
        self._token = _macc_counter.set(self)
        return self

    def __exit__(self, *exc):
        _macc_counter.reset(self._token)
        return False


def _count(kernel: str, n: int) -> None:
    counter = _macc_counter.get()
    if counter is not None:
        counter.add(kernel, n)


def as_tensor(x, name: str = "x") -> np.ndarray:
    """Validate and promote a rank-3 feature map."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be rank 3 (channels, height, width), got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty: shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ConvWeights:
    """Square-kernel convolution filter bank of shape (out, in, k, k)."""

    kernel: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        kernel = np.asarray(self.kernel, dtype=np.float64)
        if kernel.ndim != 4 or kernel.shape[2] != kernel.shape[3]:
            raise ValueError(f"kernel must have shape (out, in, k, k), got {kernel.shape}")
        if kernel.shape[2] % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {kernel.shape[2]}")
        object.__setattr__(self, "kernel", kernel)
        if self.bias is not None:
            bias = np.asarray(self.bias, dtype=np.float64)
            if bias.shape != (kernel.shape[0],):
                raise ValueError(f"bias must have shape ({kernel.shape[0]},), got {bias.shape}")
            object.__setattr__(self, "bias", bias)

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1]

    @property
    def k(self) -> int:
        return self.kernel.shape[2]

    @property
    def weight_count(self) -> int:
        return self.kernel.size


@dataclass(frozen=True)
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-5

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, f), dtype=np.float64).reshape(-1)
                  for f in ("gamma", "beta", "mean", "var")]
        if len({a.shape for a in arrays}) != 1:
            raise ValueError("batch-norm parameter vectors must have equal length")
        if np.any(arrays[3] < 0):
            raise ValueError("batch-norm variance must be non-negative")
        if self.eps < 0:
            raise ValueError("batch-norm epsilon must be non-negative")
        for name, arr in zip(("gamma", "beta", "mean", "var"), arrays):
            object.__setattr__(self, name, arr)

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    @classmethod
    def identity(cls, channels: int, eps: float = 1e-5) -> "BatchNormParams":
        return cls(np.ones(channels), np.zeros(channels), np.zeros(channels), np.ones(channels), eps)

    def stacked(self) -> np.ndarray:
        """Rows gamma, beta, mean, var, as stored on disk."""
        return np.stack([self.gamma, self.beta, self.mean, self.var])


def conv_output_dims(h: int, w: int, stride: tuple[int, int]) -> tuple[int, int]:
    s_h, s_w = stride
    return -(-h // s_h), -(-w // s_w)


def conv2d(x, weights: ConvWeights, stride=(1, 1), out_dims: tuple[int, int] | None = None) -> np.ndarray:
    """Zero-padded "same" convolution with window centres at multiples of the stride.

    Output dims are ``(ceil(h / s_h), ceil(w / s_w))``. ``out_dims`` evaluates only
    the leading rows/columns of that grid; it may not exceed it.
    """
    x = as_tensor(x)
    s_h, s_w = stride
    if s_h not in (1, 2) or s_w not in (1, 2):
        raise ValueError(f"stride must be 1 or 2 per axis, got {stride}")
    c, h, w = x.shape
    if c != weights.in_channels:
        raise ValueError(f"channel mismatch: input has {c}, weights expect {weights.in_channels}")
    full_h, full_w = conv_output_dims(h, w, stride)
    oh, ow = out_dims if out_dims is not None else (full_h, full_w)
    if not (1 <= oh <= full_h and 1 <= ow <= full_w):
        raise ValueError(f"out_dims {out_dims} outside the strided grid {(full_h, full_w)}")

    k = weights.k
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((weights.out_channels, oh, ow))
    # fixed accumulation order: kernel rows, then kernel columns
    for dy in range(k):
        for dx in range(k):
            window = xp[:, dy:dy + s_h * (oh - 1) + 1:s_h, dx:dx + s_w * (ow - 1) + 1:s_w]
            out += np.tensordot(weights.kernel[:, :, dy, dx], window, axes=(1, 0))
    if weights.bias is not None:
        out += weights.bias[:, None, None]
    _count("conv2d", weights.out_channels * c * k * k * oh * ow)
    return out


def pool_output_dim(n: int, p: int, ceil_mode: bool = True) -> int:
    if ceil_mode:
        return -(-n // p)
    return max(1, n // p)


def _pool_axis(x: np.ndarray, p: int, axis: int, ceil_mode: bool) -> np.ndarray:
    n = x.shape[axis]
    m = pool_output_dim(n, p, ceil_mode)
    used = min(n, m * p)
    x = np.take(x, np.arange(used), axis=axis)
    starts = np.arange(m) * p
    sums = np.add.reduceat(x, starts, axis=axis)
    counts = np.minimum(starts + p, used) - starts
    shape = [1] * x.ndim
    shape[axis] = m
    return sums / counts.reshape(shape)


def avg_pool(x, p: int, ceil_mode: bool = True) -> np.ndarray:
    """Average pooling with kernel size = stride = ``p``.

    Partial edge windows divide by the number of cells they cover. In floor
    mode trailing cells that do not fill a window are dropped, except that
    at least one window (covering the whole axis) is always kept.
    """
    if int(p) != p or p < 2:
        raise ValueError(f"pool size must be an integer >= 2, got {p}")
    x = as_tensor(x)
    return _pool_axis(_pool_axis(x, p, 1, ceil_mode), p, 2, ceil_mode)


def _upsample_axis(x: np.ndarray, target: int, axis: int) -> np.ndarray:
    n = x.shape[axis]
    if target == n:
        return x
    src = (np.arange(target) + 0.5) * (n / target) - 0.5
    src = np.clip(src, 0.0, n - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n - 1)
    frac = src - i0
    shape = [1] * x.ndim
    shape[axis] = target
    frac = frac.reshape(shape)
    return np.take(x, i0, axis=axis) * (1.0 - frac) + np.take(x, i1, axis=axis) * frac


def upsample_bilinear(x, target_h: int, target_w: int) -> np.ndarray:
    """Bilinear upsampling to explicit target dims, half-pixel centres, edge clamped."""
    x = as_tensor(x)
    _, h, w = x.shape
    if target_h < h or target_w < w:
        raise ValueError(f"cannot shrink {h}x{w} to {target_h}x{target_w}")
    return _upsample_axis(_upsample_axis(x, target_h, 1), target_w, 2)


def batchnorm(x, params: BatchNormParams) -> np.ndarray:
    x = as_tensor(x)
    if params.channels != x.shape[0]:
        raise ValueError(f"batch-norm has {params.channels} channels, input has {x.shape[0]}")
    scale = params.gamma / np.sqrt(params.var + params.eps)
    return (x - params.mean[:, None, None]) * scale[:, None, None] + params.beta[:, None, None]


def relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def linear(x_flat, weight, bias) -> np.ndarray:
    """Fully-connected map ``weight @ x + bias``."""
    x_flat = np.asarray(x_flat, dtype=np.float64).reshape(-1)
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64).reshape(-1)
    if weight.ndim != 2 or weight.shape[1] != x_flat.shape[0]:
        raise ValueError(f"weight shape {weight.shape} does not accept a vector of length {x_flat.shape[0]}")
    if bias.shape[0] != weight.shape[0]:
        raise ValueError(f"bias length {bias.shape[0]} != output size {weight.shape[0]}")
    _count("linear", weight.size)
    return weight @ x_flat + bias
