"""Configurations of every row of the two published cost tables.

Each entry is ``(oct_range, alphas low -> high, octaves, activation order, #MACCs in M)``.
"""

from __future__ import annotations

from .network import AMI_OUTPUTS, AURORA4_OUTPUTS, NetworkConfig

_DAGGER = "relu_bn"

TABLE1 = [  # Aurora-4
    (None, (1.0,), (), "bn_relu", 174.7),
    ((1, 3), (0.2, 0.8), (1,), "bn_relu", 167.6),
    ((1, 15), (0.2, 0.8), (1,), "bn_relu", 126.9),
    ((2, 15), (0.2, 0.8), (1,), "bn_relu", 126.2),
    ((2, 15), (0.2, 0.8), (1,), _DAGGER, 126.2),
    ((2, 15), (0.125, 0.875), (1,), "bn_relu", 143.1),
    ((2, 15), (0.1, 0.1, 0.8), (1, 2), "bn_relu", 120.6),
    ((2, 15), (0.1, 0.1, 0.8), (1, 3), "bn_relu", 119.5),
    ((2, 15), (0.1, 0.1, 0.8), (1, 3), _DAGGER, 119.5),
    ((2, 15), (0.1, 0.1, 0.1, 0.7), (1, 2, 3), "bn_relu", 94.3),
    ((2, 15), (0.2, 0.8), (2,), "bn_relu", 115.7),
    ((2, 15), (0.125, 0.875), (2,), "bn_relu", 136.3),
    ((2, 15), (0.2, 0.8), (3,), "bn_relu", 113.5),
    ((2, 15), (0.125, 0.875), (3,), "bn_relu", 134.9),
    ((2, 15), (0.125, 0.875), (3,), _DAGGER, 134.9),
]

TABLE2 = [  # AMI, trained on MDM
    (None, (1.0,), (), "bn_relu", 175.2),
    ((1, 3), (0.2, 0.8), (1,), "bn_relu", 168.2),
    ((2, 15), (0.2, 0.8), (1,), "bn_relu", 126.7),
    ((1, 15), (0.2, 0.8), (1,), "bn_relu", 127.5),
    ((1, 15), (0.125, 0.875), (1,), "bn_relu", 144.1),
    ((1, 15), (0.125, 0.875), (1,), _DAGGER, 144.1),
    ((1, 15), (0.1, 0.1, 0.8), (1, 2), "bn_relu", 121.6),
    ((1, 15), (0.1, 0.1, 0.8), (1, 3), "bn_relu", 120.4),
    ((1, 15), (0.1, 0.1, 0.1, 0.7), (1, 2, 3), "bn_relu", 95.2),
    ((1, 15), (0.125, 0.875), (2,), "bn_relu", 136.9),
    ((1, 15), (0.125, 0.875), (3,), "bn_relu", 135.4),
]


def _make(row, outputs: int, **overrides) -> NetworkConfig:
    oct_range, alphas, octaves, order, _ = row
    kw = dict(num_outputs=outputs, oct_range=oct_range, alphas=alphas, octaves=octaves, activation_order=order)
    kw.update(overrides)
    return NetworkConfig(**kw)


def preset_names() -> list[str]:
    names = ["aurora4-baseline", "ami-baseline"]
    names += [f"table1-row{i}" for i in range(1, len(TABLE1) + 1)]
    names += [f"table2-row{i}" for i in range(1, len(TABLE2) + 1)]
    return names


def preset(name: str, **overrides) -> tuple[NetworkConfig, float]:
    """Config and published #MACCs (M) for a named preset."""
    if name == "aurora4-baseline":
        return _make(TABLE1[0], AURORA4_OUTPUTS, **overrides), TABLE1[0][-1]
    if name == "ami-baseline":
        return _make(TABLE2[0], AMI_OUTPUTS, **overrides), TABLE2[0][-1]
    for prefix, table, outputs in (("table1-row", TABLE1, AURORA4_OUTPUTS), ("table2-row", TABLE2, AMI_OUTPUTS)):
        if name.startswith(prefix):
            try:
                i = int(name[len(prefix):])
            except ValueError:
                break
            if 1 <= i <= len(table):
                return _make(table[i - 1], outputs, **overrides), table[i - 1][-1]
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(preset_names())}")


def describe(name: str) -> str:
    cfg, _ = preset(name)
    if cfg.oct_range is None:
        return f"{name}: CNN"
    a, b = cfg.oct_range
    octs = ",".join(f"2^{t}" for t in cfg.octaves)
    dagger = " relu->bn" if cfg.activation_order == "relu_bn" else ""
    return f"{name}: L{a}-L{b} alpha={list(cfg.alphas)} {octs}{dagger}"
