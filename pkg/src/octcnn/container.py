"""On-disk weight containers for single layers and whole networks.

A layer directory holds ``layer.json`` plus one tensor file per entry:
``w_{i}to{j}`` (rank 4), ``bias_{n}`` (rank 1) and ``bn_{n}`` (rank 2, rows
gamma, beta, mean, var). Group indices are 1-based, full resolution first.
A network directory holds ``manifest.json``, one ``convNN`` layer directory
per conv layer and ``fc/weight``, ``fc/bias``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import fileio
from .multioct import MultiOctConvLayer
from .network import Network, config_from_dict, layer_specs
from .tensor import BatchNormParams, ConvWeights

EXT = ".moct"


def _write(path: Path, array) -> None:
    fileio.save(path.with_suffix(EXT), array)


def _read(path: Path, rank: int) -> np.ndarray:
    p = path.with_suffix(EXT)
    if not p.exists():
        raise FileNotFoundError(f"missing weight entry {p}")
    return fileio.load(p, rank=rank).astype(np.float64)


def save_layer(layer: MultiOctConvLayer, directory, alphas=None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    header = {
        "alphas": list(alphas) if alphas is not None else None,
        "in_counts": list(layer.in_counts),
        "out_counts": list(layer.out_counts),
        "in_octaves": list(layer.in_octaves),
        "out_octaves": list(layer.out_octaves),
        "stride": list(layer.stride),
        "activation_order": layer.activation_order,
        "rounding": layer.rounding,
        "bn_eps": [p.eps for p in layer.bn] if layer.bn is not None else None,
    }
    (d / "layer.json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    for (i, j), wt in sorted(layer.weights.items()):
        _write(d / f"w_{i + 1}to{j + 1}", wt.kernel)
    for n, b in enumerate(layer.bias, 1):
        _write(d / f"bias_{n}", b)
    if layer.bn is not None:
        for n, p in enumerate(layer.bn, 1):
            _write(d / f"bn_{n}", p.stacked())


def load_layer(directory) -> MultiOctConvLayer:
    d = Path(directory)
    meta_path = d / "layer.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"missing {meta_path}")
    meta = json.loads(meta_path.read_text())
    n_in, n_out = len(meta["in_counts"]), len(meta["out_counts"])
    weights = {(i, j): ConvWeights(_read(d / f"w_{i + 1}to{j + 1}", 4)) for i in range(n_in) for j in range(n_out)}
    bias = [_read(d / f"bias_{n}", 1) for n in range(1, n_out + 1)]
    bn = None
    if meta.get("bn_eps") is not None:
        bn = [BatchNormParams(*_read(d / f"bn_{n}", 2), eps=eps) for n, eps in zip(range(1, n_out + 1), meta["bn_eps"])]
    return MultiOctConvLayer(tuple(meta["in_counts"]), tuple(meta["out_counts"]), tuple(meta["in_octaves"]),
                             tuple(meta["out_octaves"]), weights, bias, tuple(meta["stride"]), bn,
                             meta["activation_order"], meta["rounding"])


def save_network(net: Network, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {"format": "octcnn-model", "version": 1, "config": net.config.to_dict(),
                "layers": [s.name for s in net.specs]}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for spec, layer in zip(net.specs, net.conv):
        save_layer(layer, d / spec.name, net.config.alphas if spec.kind == "multioct" else None)
    (d / "fc").mkdir(exist_ok=True)
    _write(d / "fc" / "weight", net.fc_weight)
    _write(d / "fc" / "bias", net.fc_bias)


def load_network(directory) -> Network:
    d = Path(directory)
    manifest_path = d / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"missing {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    cfg = config_from_dict(manifest["config"])
    specs = layer_specs(cfg)
    conv = []
    for spec in specs[:-1]:
        layer = load_layer(d / spec.name)
        if (layer.in_counts, layer.out_counts, layer.in_octaves, layer.out_octaves) != (
                spec.in_counts, spec.out_counts, spec.in_octaves, spec.out_octaves):
            raise ValueError(f"{d / spec.name}: group structure does not match the manifest config")
        conv.append(layer)
    fc_w = _read(d / "fc" / "weight", 2)
    fc_b = _read(d / "fc" / "bias", 1)
    if fc_w.shape != (specs[-1].out_channels, specs[-1].in_channels):
        raise ValueError(f"fc weight has shape {fc_w.shape}, expected {(specs[-1].out_channels, specs[-1].in_channels)}")
    return Network(cfg, specs, conv, fc_w, fc_b)
