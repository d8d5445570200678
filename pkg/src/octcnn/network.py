"""The 15-conv + 1-FC acoustic model and its (multi-)octave variants."""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from .multioct import (
    MAX_OCTAVE,
    ROUNDINGS,
    MultiOctConvLayer,
    MultiScaleTensor,
    factorize,
    init_weights,
    merge,
    multioct_forward,
    partition_channels,
)
from .tensor import BatchNormParams, as_tensor, conv_output_dims, linear

N_CONV = 15
KERNEL = 3
# channels double after layers 3 and 9
CHANNELS = (64,) * 3 + (128,) * 6 + (256,) * 6
STRIDES = {3: (2, 1), 6: (2, 1), 9: (2, 2), 12: (2, 2), 15: (2, 2)}
AURORA4_OUTPUTS = 3422
AMI_OUTPUTS = 3984

TAP_RE = re.compile(r"^conv(\d\d)_(all|high|low|path([1-4]))$")


class ConfigError(ValueError):
    """Invalid network configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class NetworkConfig:
    input_dims: tuple[int, int, int] = (1, 40, 11)
    num_outputs: int = AURORA4_OUTPUTS
    oct_range: tuple[int, int] | None = None
    alphas: tuple[float, ...] = (1.0,)
    octaves: tuple[int, ...] = ()
    activation_order: str = "bn_relu"
    group_rounding: str = "floor"
    channel_rounding: str = "ceil"
    entry_mode: str = "split"

    def __post_init__(self):
        _validate(self)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_dims"] = list(self.input_dims)
        d["oct_range"] = f"L{self.oct_range[0]}-L{self.oct_range[1]}" if self.oct_range else None
        d["alphas"] = list(self.alphas)
        d["octaves"] = list(self.octaves)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _validate(cfg: NetworkConfig) -> None:
    if len(cfg.input_dims) != 3 or any(int(d) != d or d < 1 for d in cfg.input_dims):
        raise ConfigError("input_dims", f"expected three positive integers, got {list(cfg.input_dims)}")
    if int(cfg.num_outputs) != cfg.num_outputs or cfg.num_outputs < 1:
        raise ConfigError("num_outputs", f"must be a positive integer, got {cfg.num_outputs!r}")
    if cfg.oct_range is not None:
        a, b = cfg.oct_range
        if not (1 <= a <= b <= N_CONV):
            raise ConfigError("oct_range", f"must satisfy 1 <= first <= last <= {N_CONV}, got L{a}-L{b}")
    if cfg.activation_order not in ("bn_relu", "relu_bn"):
        raise ConfigError("activation_order", f"must be 'bn_relu' or 'relu_bn', got {cfg.activation_order!r}")
    if cfg.group_rounding not in ROUNDINGS:
        raise ConfigError("group_rounding", f"must be one of {ROUNDINGS}, got {cfg.group_rounding!r}")
    if cfg.channel_rounding not in ("floor", "ceil", "round"):
        raise ConfigError("channel_rounding", f"must be floor, ceil or round, got {cfg.channel_rounding!r}")
    if cfg.entry_mode not in ("split", "conv"):
        raise ConfigError("entry_mode", f"must be 'split' or 'conv', got {cfg.entry_mode!r}")
    octs = list(cfg.octaves)
    if any(int(t) != t or not 1 <= t <= MAX_OCTAVE for t in octs) or octs != sorted(set(octs)):
        raise ConfigError("octaves", f"must be distinct increasing exponents in 1..{MAX_OCTAVE}, got {octs}")
    if len(cfg.alphas) != len(octs) + 1:
        raise ConfigError("alphas", f"{len(cfg.alphas)} fractions need {len(cfg.alphas) - 1} octaves, got {octs}")
    for c in sorted(set(CHANNELS)):
        try:
            partition_channels(c, cfg.alphas, cfg.channel_rounding)
        except ValueError as exc:
            raise ConfigError("alphas", str(exc)) from None


_KEYS = {f.name for f in NetworkConfig.__dataclass_fields__.values()}


def _parse_range(value) -> tuple[int, int] | None:
    if value is None:
        return None
    if isinstance(value, str):
        m = re.fullmatch(r"\s*L?(\d+)\s*-\s*L?(\d+)\s*", value)
        if not m:
            raise ConfigError("oct_range", f"expected 'La-Lb', got {value!r}")
        return int(m.group(1)), int(m.group(2))
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(isinstance(v, int) for v in value):
        return int(value[0]), int(value[1])
    raise ConfigError("oct_range", f"expected 'La-Lb' or [a, b], got {value!r}")


def config_from_dict(d: dict) -> NetworkConfig:
    if not isinstance(d, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = sorted(set(d) - _KEYS)
    if unknown:
        raise ConfigError(unknown[0], f"unknown key (allowed: {', '.join(sorted(_KEYS))})")
    kw = dict(d)
    if "oct_range" in kw:
        kw["oct_range"] = _parse_range(kw["oct_range"])
    for key in ("input_dims", "alphas", "octaves"):
        if key in kw:
            if not isinstance(kw[key], (list, tuple)):
                raise ConfigError(key, f"must be a list, got {kw[key]!r}")
            kw[key] = tuple(kw[key])
    for key in ("alphas",):
        if key in kw and not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in kw[key]):
            raise ConfigError(key, "must contain numbers")
    if "alphas" in kw and "octaves" not in kw:
        kw["octaves"] = tuple(range(1, len(kw["alphas"])))
    return NetworkConfig(**kw)


def parse_config(text: str) -> NetworkConfig:
    """Parse and validate a JSON network config; missing keys take the defaults."""
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<syntax>", f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(d)


@dataclass(frozen=True)
class LayerSpec:
    index: int
    kind: str  # "conv", "multioct" or "fc"
    in_channels: int
    out_channels: int
    in_dims: tuple[int, int]
    out_dims: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    in_counts: tuple[int, ...] = ()
    out_counts: tuple[int, ...] = ()
    in_octaves: tuple[int, ...] = (0,)
    out_octaves: tuple[int, ...] = (0,)
    entry: str = "none"  # "split": the layer factorizes a single-resolution input first
    activation_order: str = "bn_relu"
    rounding: str = "floor"
    k: int = KERNEL

    @property
    def name(self) -> str:
        return "fc" if self.kind == "fc" else f"conv{self.index:02d}"


def layer_specs(cfg: NetworkConfig) -> list[LayerSpec]:
    """Shapes and group structure of every layer, without any weights."""
    c, h, w = cfg.input_dims
    first, last = cfg.oct_range or (0, -1)
    octs = (0, *cfg.octaves)
    specs = []
    for L in range(1, N_CONV + 1):
        co = CHANNELS[L - 1]
        stride = STRIDES.get(L, (1, 1))
        ho, wo = conv_output_dims(h, w, stride)
        inside = first <= L <= last
        entry = "none"
        in_octs, out_octs = (0,), (0,)
        in_counts, out_counts = (c,), (co,)
        if inside:
            split_in = L > first or (cfg.entry_mode == "split" and c > 1)
            if split_in:
                in_octs = octs
                in_counts = partition_channels(c, cfg.alphas, cfg.channel_rounding).counts
                if L == first:
                    entry = "split"
            if L < last:
                out_octs = octs
                out_counts = partition_channels(co, cfg.alphas, cfg.channel_rounding).counts
        multi = len(in_octs) > 1 or len(out_octs) > 1
        specs.append(LayerSpec(L, "multioct" if multi else "conv", c, co, (h, w), (ho, wo), stride,
                               in_counts, out_counts, in_octs, out_octs, entry,
                               cfg.activation_order, cfg.group_rounding))
        c, h, w = co, ho, wo
    specs.append(LayerSpec(N_CONV + 1, "fc", c * h * w, cfg.num_outputs, (h, w), (1, 1), k=1))
    return specs


@dataclass
class Network:
    config: NetworkConfig
    specs: list[LayerSpec]
    conv: list[MultiOctConvLayer]
    fc_weight: np.ndarray
    fc_bias: np.ndarray
    taps: dict[str, tuple[int, str]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.taps:
            self.taps = tap_registry(self.specs)


def tap_registry(specs: list[LayerSpec]) -> dict[str, tuple[int, str]]:
    reg = {}
    for s in specs:
        if s.kind == "fc":
            continue
        reg[f"{s.name}_all"] = (s.index, "all")
        for n in range(1, len(s.in_octaves) + 1):
            reg[f"{s.name}_path{n}"] = (s.index, f"path{n}")
        if len(s.in_octaves) > 1:
            reg[f"{s.name}_high"] = (s.index, "path1")
            reg[f"{s.name}_low"] = (s.index, "path2")
    return reg


def build_network(cfg: NetworkConfig, seed: int = 0, scheme: str = "uniform") -> Network:
    """Instantiate ``cfg`` with seeded weights and identity batch-norm."""
    specs = layer_specs(cfg)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(N_CONV + 1)]
    conv = []
    for s, rng in zip(specs[:-1], rngs):
        layer = init_weights(s.in_counts, s.out_counts, s.in_octaves, s.out_octaves, rng, scheme, s.k,
                             stride=s.stride, activation_order=s.activation_order, rounding=s.rounding,
                             bn=[BatchNormParams.identity(c) for c in s.out_counts])
        conv.append(layer)
    fc = specs[-1]
    if scheme == "zeros":
        fc_w = np.zeros((fc.out_channels, fc.in_channels))
    else:
        bound = math.sqrt(6.0 / fc.in_channels)
        fc_w = rngs[-1].uniform(-bound, bound, size=(fc.out_channels, fc.in_channels))
        fc_w = fc_w.astype(np.float32).astype(np.float64)
    return Network(cfg, specs, conv, fc_w, np.zeros(fc.out_channels))


def _check_taps(net: Network, taps: Iterable[str]) -> list[str]:
    taps = list(taps)
    for t in taps:
        if t not in net.taps:
            hint = "" if TAP_RE.match(t) else " (expected convNN_all, convNN_high, convNN_low or convNN_pathK)"
            raise KeyError(f"unknown tap {t!r}{hint}")
    return taps


def forward(net: Network, x, taps: Iterable[str] = (), preactivation: bool = False):
    """Run one feature map through the network.

    Returns ``(logits, {tap: tensor})``. ``convNN_all`` is the layer output
    (post-activation unless ``preactivation``), with multi-group outputs
    upsampled and stacked. ``convNN_pathK`` / ``high`` / ``low`` are the
    bias-free contributions of input group K to the layer's full-resolution
    output group, before summation.
    """
    x = as_tensor(x)
    if x.shape != tuple(net.config.input_dims):
        raise ValueError(f"input dims {x.shape} do not match the config's {tuple(net.config.input_dims)}")
    wanted = _check_taps(net, taps)
    by_layer: dict[int, list[str]] = {}
    for t in wanted:
        by_layer.setdefault(net.taps[t][0], []).append(t)

    out: dict[str, np.ndarray] = {}
    cur = x
    for spec, layer in zip(net.specs, net.conv):
        if isinstance(cur, np.ndarray):
            if spec.entry == "split":
                cur = factorize(cur, layer.in_counts, layer.in_octaves, layer.rounding)
            else:
                cur = MultiScaleTensor([cur], (0,), cur.shape[1:], layer.rounding)
        y, parts = multioct_forward(cur, layer, return_parts=True)
        for t in by_layer.get(spec.index, ()):
            sel = net.taps[t][1]
            if sel == "all":
                src = MultiScaleTensor(parts["pre"], y.octaves, y.base_dims, y.rounding) if preactivation else y
                out[t] = src.groups[0] if len(src.groups) == 1 else merge(src)
            else:
                out[t] = parts["paths"][(int(sel[4:]) - 1, 0)]
        cur = y.groups[0] if len(y.groups) == 1 else y
    if not isinstance(cur, np.ndarray):
        raise ValueError("the last conv layer must produce a single-resolution output")
    logits = linear(cur.reshape(-1), net.fc_weight, net.fc_bias)
    return logits, {t: out[t] for t in wanted}
