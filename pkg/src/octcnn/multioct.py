"""Multi-scale octave convolution.

A feature map is factorised along the channel axis into resolution groups.
Group ``n`` lives at ``2**t_n`` times coarser resolution than the reference
grid, with ``t_1 = 0``. Every (input group, output group) pair has its own
filter bank; the pair's convolution always runs at the coarser of the two
resolutions, preceded by average pooling (towards coarser outputs) or
followed by bilinear upsampling (towards finer outputs).

Groups are stored full resolution first. Configs written in table notation
("alpha low -> high") are reversed on the way in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import (
    BatchNormParams,
    ConvWeights,
    as_tensor,
    avg_pool,
    batchnorm,
    conv2d,
    conv_output_dims,
    relu,
    upsample_bilinear,
)

MAX_GROUPS = 4
MAX_OCTAVE = 3
ROUNDINGS = ("ceil", "floor")
ACTIVATION_ORDERS = ("bn_relu", "relu_bn", "none")
_ALPHA_TOL = 1e-9


def group_dims(h: int, w: int, octave: int, rounding: str = "ceil") -> tuple[int, int]:
    """Spatial dims of a group ``octave`` octaves below an ``h x w`` grid.

    ``"ceil"`` rounds up. ``"floor"`` rounds down but never below one cell.
    """
    f = 2 ** octave
    if rounding == "ceil":
        return -(-h // f), -(-w // f)
    if rounding == "floor":
        return max(1, h // f), max(1, w // f)
    raise ValueError(f"rounding must be one of {ROUNDINGS}, got {rounding!r}")


@dataclass(frozen=True)
class ChannelPartition:
    """Channel counts per group, full-resolution group first."""

    total: int
    alphas: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def n_groups(self) -> int:
        return len(self.counts)

    def low_to_high(self) -> tuple[int, ...]:
        return self.counts[::-1]


def _round_count(x: float, rounding: str) -> int:
    if rounding == "floor":
        return math.floor(x + _ALPHA_TOL)
    if rounding == "ceil":
        return math.ceil(x - _ALPHA_TOL)
    if rounding == "round":
        return math.floor(x + 0.5)
    raise ValueError(f"channel rounding must be floor, ceil or round, got {rounding!r}")


def partition_channels(total: int, alphas: Sequence[float], rounding: str = "floor") -> ChannelPartition:
    """Split ``total`` channels by the fractions ``alphas`` (given low -> high).

    Every group except the full-resolution one receives ``rounding(alpha * total)``
    channels; the full-resolution group takes the remainder.

    >>> partition_channels(64, [0.2, 0.8]).low_to_high()
    (12, 52)
    """
    alphas = tuple(float(a) for a in alphas)
    if not alphas:
        raise ValueError("at least one alpha is required")
    if len(alphas) > MAX_GROUPS:
        raise ValueError(f"at most {MAX_GROUPS} groups are supported, got {len(alphas)}")
    if any(not (0.0 <= a <= 1.0) for a in alphas):
        raise ValueError(f"alphas must lie in [0, 1], got {list(alphas)}")
    if abs(sum(alphas) - 1.0) > _ALPHA_TOL:
        raise ValueError(f"alphas must sum to 1, got {sum(alphas)!r} for {list(alphas)}")
    if total < len(alphas):
        raise ValueError(f"{total} channels cannot fill {len(alphas)} groups")
    internal = alphas[::-1]
    lows = [_round_count(a * total, rounding) for a in internal[1:]]
    counts = (total - sum(lows), *lows)
    if any(c < 1 for c in counts):
        raise ValueError(f"partition of {total} channels by {list(alphas)} leaves an empty group: {counts[::-1]}")
    return ChannelPartition(total, internal, counts)


def _check_octaves(octaves: Sequence[int]) -> tuple[int, ...]:
    octaves = tuple(int(t) for t in octaves)
    if not octaves or octaves[0] != 0:
        raise ValueError(f"the first group must be full resolution (octave 0), got {octaves}")
    if len(octaves) > MAX_GROUPS:
        raise ValueError(f"at most {MAX_GROUPS} groups, got {len(octaves)}")
    if any(b <= a for a, b in zip(octaves, octaves[1:])):
        raise ValueError(f"octaves must be strictly increasing, got {octaves}")
    if octaves[-1] > MAX_OCTAVE:
        raise ValueError(f"octave exponents are limited to {MAX_OCTAVE}, got {octaves}")
    return octaves


@dataclass
class MultiScaleTensor:
    """Feature map split into resolution groups, full resolution first."""

    groups: list[np.ndarray]
    octaves: tuple[int, ...]
    base_dims: tuple[int, int]
    rounding: str = "ceil"

    def __post_init__(self):
        self.octaves = _check_octaves(self.octaves)
        self.groups = [as_tensor(g, f"group {n + 1}") for n, g in enumerate(self.groups)]
        if len(self.groups) != len(self.octaves):
            raise ValueError(f"{len(self.groups)} groups but {len(self.octaves)} octave exponents")
        h, w = self.base_dims
        for n, (g, t) in enumerate(zip(self.groups, self.octaves)):
            want = group_dims(h, w, t, self.rounding)
            if g.shape[1:] != want:
                raise ValueError(
                    f"group {n + 1} has dims {g.shape[1:]}, expected {want} for octave {t} of {h}x{w}"
                )

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(g.shape[0] for g in self.groups)


def factorize(x, counts: Sequence[int], octaves: Sequence[int], rounding: str = "ceil") -> MultiScaleTensor:
    """Split a single-resolution map along channels and pool each slice to its group's scale.

    Involves no convolution, so it adds no multiply-accumulates.
    """
    x = as_tensor(x)
    octaves = _check_octaves(octaves)
    if sum(counts) != x.shape[0] or len(counts) != len(octaves):
        raise ValueError(f"counts {tuple(counts)} do not partition {x.shape[0]} channels into {len(octaves)} groups")
    h, w = x.shape[1:]
    groups = []
    start = 0
    for c, t in zip(counts, octaves):
        part = x[start:start + c]
        start += c
        if t:
            part = avg_pool(part, 2 ** t, ceil_mode=(rounding == "ceil"))
        groups.append(part)
    return MultiScaleTensor(groups, octaves, (h, w), rounding)


def merge(x: MultiScaleTensor) -> np.ndarray:
    """Inverse of :func:`factorize` up to pooling loss: upsample every group and stack channels."""
    h, w = x.base_dims
    return np.concatenate([g if g.shape[1:] == (h, w) else upsample_bilinear(g, h, w) for g in x.groups])


@dataclass
class MultiOctConvLayer:
    """Weights and settings of one multi-octave convolution.

    ``weights[(i, j)]`` is the bias-free filter bank from input group ``i`` to
    output group ``j`` (0-based). ``bias[j]`` is added once per output group.
    """

    in_counts: tuple[int, ...]
    out_counts: tuple[int, ...]
    in_octaves: tuple[int, ...]
    out_octaves: tuple[int, ...]
    weights: dict[tuple[int, int], ConvWeights]
    bias: list[np.ndarray] | None = None
    stride: tuple[int, int] = (1, 1)
    bn: list[BatchNormParams] | None = None
    activation_order: str = "bn_relu"
    rounding: str = "ceil"
    k: int = field(init=False)

    def __post_init__(self):
        self.in_counts = tuple(int(c) for c in self.in_counts)
        self.out_counts = tuple(int(c) for c in self.out_counts)
        self.in_octaves = _check_octaves(self.in_octaves)
        self.out_octaves = _check_octaves(self.out_octaves)
        self.stride = tuple(int(s) for s in self.stride)
        if len(self.in_counts) != len(self.in_octaves) or len(self.out_counts) != len(self.out_octaves):
            raise ValueError("channel counts and octave exponents must have one entry per group")
        if self.activation_order not in ACTIVATION_ORDERS:
            raise ValueError(f"activation_order must be one of {ACTIVATION_ORDERS}, got {self.activation_order!r}")
        if self.rounding not in ROUNDINGS:
            raise ValueError(f"rounding must be one of {ROUNDINGS}, got {self.rounding!r}")
        pairs = {(i, j) for i in range(len(self.in_counts)) for j in range(len(self.out_counts))}
        if set(self.weights) != pairs:
            raise ValueError(f"weights must cover exactly the group pairs {sorted(pairs)}")
        ks = set()
        for (i, j), wt in self.weights.items():
            if wt.in_channels != self.in_counts[i] or wt.out_channels != self.out_counts[j]:
                raise ValueError(
                    f"path {i + 1}->{j + 1} weights are {wt.out_channels}x{wt.in_channels}, "
                    f"expected {self.out_counts[j]}x{self.in_counts[i]}"
                )
            ks.add(wt.k)
        if len(ks) != 1:
            raise ValueError(f"all paths must share one kernel size, got {sorted(ks)}")
        self.k = ks.pop()
        if self.bias is None:
            self.bias = [np.zeros(c) for c in self.out_counts]
        self.bias = [np.asarray(b, dtype=np.float64) for b in self.bias]
        if [b.shape for b in self.bias] != [(c,) for c in self.out_counts]:
            raise ValueError("one bias vector per output group is required")
        if self.bn is not None and [p.channels for p in self.bn] != list(self.out_counts):
            raise ValueError("one batch-norm parameter set per output group is required")

    @property
    def in_channels(self) -> int:
        return sum(self.in_counts)

    @property
    def out_channels(self) -> int:
        return sum(self.out_counts)

    def path_dims(self, i: int, j: int, out_base: tuple[int, int]) -> tuple[int, int]:
        """Dims at which path ``i -> j`` convolves, for a full-resolution output grid ``out_base``."""
        t = max(self.in_octaves[i], self.out_octaves[j])
        return group_dims(*out_base, t, self.rounding)

    def out_base_dims(self, in_base: tuple[int, int]) -> tuple[int, int]:
        return conv_output_dims(*in_base, self.stride)


def _activate(y: np.ndarray, bn: BatchNormParams | None, order: str) -> np.ndarray:
    if order == "none":
        return y
    if order == "bn_relu":
        return relu(batchnorm(y, bn) if bn is not None else y)
    return batchnorm(relu(y), bn) if bn is not None else relu(y)


def path_output(x: MultiScaleTensor, layer: MultiOctConvLayer, i: int, j: int) -> np.ndarray:
    """Contribution of input group ``i`` to output group ``j``, at output group ``j``'s dims."""
    t_in, t_out = layer.in_octaves[i], layer.out_octaves[j]
    ceil_mode = layer.rounding == "ceil"
    out_base = layer.out_base_dims(x.base_dims)
    src = x.groups[i]
    if t_out > t_in:
        src = avg_pool(src, 2 ** (t_out - t_in), ceil_mode=ceil_mode)
    y = conv2d(src, layer.weights[(i, j)], layer.stride, out_dims=layer.path_dims(i, j, out_base))
    if t_in > t_out:
        y = upsample_bilinear(y, *group_dims(*out_base, t_out, layer.rounding))
    return y


def _check_input(x: MultiScaleTensor, layer: MultiOctConvLayer) -> None:
    if x.octaves != layer.in_octaves or x.channels != layer.in_counts:
        raise ValueError(
            f"input groups {x.channels} at octaves {x.octaves} do not match the layer's "
            f"{layer.in_counts} at {layer.in_octaves}"
        )
    if x.rounding != layer.rounding:
        raise ValueError(f"input uses {x.rounding!r} group dims, layer expects {layer.rounding!r}")


def multioct_forward(x: MultiScaleTensor, layer: MultiOctConvLayer, return_parts: bool = False):
    """Apply the layer to a multi-scale input.

    With ``return_parts`` also returns ``{"paths": {(i, j): array}, "pre": [array]}``:
    the bias-free per-path contributions and the per-group sums before
    normalisation and activation.
    """
    _check_input(x, layer)
    out_base = layer.out_base_dims(x.base_dims)
    paths: dict[tuple[int, int], np.ndarray] = {}
    outs, pres = [], []
    for j in range(len(layer.out_counts)):
        acc = None
        for i in range(len(layer.in_counts)):
            y = path_output(x, layer, i, j)
            paths[(i, j)] = y
            acc = y.copy() if acc is None else acc + y
        acc += layer.bias[j][:, None, None]
        pres.append(acc)
        bn = layer.bn[j] if layer.bn is not None else None
        outs.append(_activate(acc, bn, layer.activation_order))
    result = MultiScaleTensor(outs, layer.out_octaves, out_base, layer.rounding)
    if return_parts:
        return result, {"paths": paths, "pre": pres}
    return result


def multioct_initial(x, layer: MultiOctConvLayer, return_parts: bool = False):
    """Single full-resolution input fanned out to every output group."""
    if layer.in_octaves != (0,):
        raise ValueError("an initial layer takes exactly one full-resolution input group")
    x = as_tensor(x)
    ms = MultiScaleTensor([x], (0,), x.shape[1:], layer.rounding)
    return multioct_forward(ms, layer, return_parts)


def multioct_final(x: MultiScaleTensor, layer: MultiOctConvLayer, return_parts: bool = False):
    """Every input group summed into a single full-resolution output."""
    if layer.out_octaves != (0,):
        raise ValueError("a final layer produces exactly one full-resolution output group")
    out = multioct_forward(x, layer, return_parts)
    if return_parts:
        return out[0].groups[0], out[1]
    return out.groups[0]


def param_count(layer: MultiOctConvLayer) -> dict[str, int]:
    kernel = sum(wt.weight_count for wt in layer.weights.values())
    bn = 4 * layer.out_channels if layer.bn is not None else 0
    return {"kernel": kernel, "bias": layer.out_channels, "bn": bn}


def init_weights(
    in_counts: Sequence[int],
    out_counts: Sequence[int],
    in_octaves: Sequence[int],
    out_octaves: Sequence[int],
    seed=0,
    scheme: str = "uniform",
    k: int = 3,
    **layer_kwargs,
) -> MultiOctConvLayer:
    """Build a layer with seeded weights.

    ``"uniform"`` draws each path from U(-b, b) with ``b = sqrt(6 / (c_in_path * k**2))``;
    ``"zeros"`` gives an all-zero layer. Paths are drawn in ascending (i, j) order
    and rounded to float32 so that saved weights reload bit-exactly.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights = {}
    for i, ci in enumerate(in_counts):
        for j, cj in enumerate(out_counts):
            if scheme == "uniform":
                bound = math.sqrt(6.0 / (ci * k * k))
                kernel = rng.uniform(-bound, bound, size=(cj, ci, k, k))
            elif scheme == "zeros":
                kernel = np.zeros((cj, ci, k, k))
            else:
                raise ValueError(f"unknown init scheme {scheme!r}")
            weights[(i, j)] = ConvWeights(kernel.astype(np.float32).astype(np.float64))
    return MultiOctConvLayer(tuple(in_counts), tuple(out_counts), tuple(in_octaves), tuple(out_octaves),
                             weights, **layer_kwargs)
