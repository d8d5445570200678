"""Multi-scale octave CNN engine: kernels, layers, cost model and robustness probe."""

from .cost import CostReport, layer_maccs, network_cost, render_csv, render_table
from .multioct import (
    ChannelPartition,
    MultiOctConvLayer,
    MultiScaleTensor,
    factorize,
    init_weights,
    multioct_final,
    multioct_forward,
    multioct_initial,
    param_count,
    partition_channels,
)
from .network import Network, NetworkConfig, build_network, forward, layer_specs, parse_config
from .probe import (
    EncodingSet,
    ProbeModel,
    closed_form_oracle,
    fit_probe,
    gen_synthetic_pairs,
    gradcheck_probe,
    probe_loss,
    split_rows,
)
from .tensor import BatchNormParams, ConvWeights, avg_pool, batchnorm, conv2d, linear, relu, upsample_bilinear

__version__ = "0.1.0"

__all__ = [
    "BatchNormParams",
    "ChannelPartition",
    "ConvWeights",
    "CostReport",
    "EncodingSet",
    "MultiOctConvLayer",
    "MultiScaleTensor",
    "Network",
    "NetworkConfig",
    "ProbeModel",
    "avg_pool",
    "batchnorm",
    "build_network",
    "closed_form_oracle",
    "conv2d",
    "factorize",
    "fit_probe",
    "forward",
    "gen_synthetic_pairs",
    "gradcheck_probe",
    "init_weights",
    "layer_maccs",
    "layer_specs",
    "linear",
    "multioct_final",
    "multioct_forward",
    "multioct_initial",
    "network_cost",
    "param_count",
    "parse_config",
    "partition_channels",
    "probe_loss",
    "relu",
    "render_csv",
    "render_table",
    "split_rows",
    "upsample_bilinear",
]
