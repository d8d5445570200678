import numpy as np
import pytest

from octcnn.cost import (
    CSV_HEADER,
    kernel_params,
    layer_maccs,
    network_cost,
    render_csv,
    render_table,
    to_millions,
)
from octcnn.network import AMI_OUTPUTS, NetworkConfig, build_network, forward, layer_specs
from octcnn.presets import preset, preset_names
from octcnn.tensor import MaccCounter


class TestBaseline:
    def test_layer_values(self):
        specs = layer_specs(NetworkConfig())
        assert layer_maccs(specs[0]) == 1 * 9 * 64 * 40 * 11 == 253440
        assert layer_maccs(specs[-1]) == 1024 * 3422 == 3504128

    def test_totals(self):
        aurora = network_cost(NetworkConfig())
        ami = network_cost(NetworkConfig(num_outputs=AMI_OUTPUTS))
        assert aurora.total == 174659072
        assert ami.total == 175234560
        assert ami.total - aurora.total == 1024 * (3984 - 3422)
        assert aurora.total_m == "174.7" and ami.total_m == "175.2"

    def test_rounding(self):
        assert to_millions(126_250_000) == "126.3"
        assert to_millions(126_249_999) == "126.2"


class TestOctave:
    @pytest.mark.parametrize("name", preset_names())
    def test_presets_near_published(self, name):
        cfg, ref = preset(name)
        assert abs(network_cost(cfg).total / 1e6 - ref) / ref < 0.02

    @pytest.mark.parametrize("name", ["table1-row4", "table1-row10", "table2-row4"])
    def test_executed_maccs_match_model(self, name):
        cfg, _ = preset(name)
        net = build_network(cfg)
        with MaccCounter() as counter:
            forward(net, np.zeros((1, 40, 11)))
        assert counter.total == network_cost(cfg).total

    def test_more_low_resolution_is_cheaper(self):
        costs = [network_cost(NetworkConfig(oct_range=(2, 15), alphas=(a, 1 - a), octaves=(1,))).total
                 for a in (0.125, 0.2, 0.3, 0.5)]
        assert costs == sorted(costs, reverse=True)
        assert costs[0] < network_cost(NetworkConfig()).total

    def test_unit_alpha_costs_like_baseline(self):
        cfg = NetworkConfig(oct_range=(1, 15), alphas=(1.0,), octaves=())
        assert network_cost(cfg).total == network_cost(NetworkConfig()).total

    @pytest.mark.parametrize("name", preset_names())
    def test_kernel_parameters_are_unchanged(self, name):
        base = [kernel_params(s) for s in layer_specs(NetworkConfig(num_outputs=preset(name)[0].num_outputs))]
        assert [kernel_params(s) for s in layer_specs(preset(name)[0])] == base


class TestRender:
    def test_detail(self):
        text = render_table([network_cost(NetworkConfig())])
        assert text.splitlines()[-1] == "total 174.7 M"
        assert "conv01" in text and "fc" in text

    def test_summary(self):
        reports = [network_cost(preset(n)[0], n, preset(n)[1]) for n in ("table1-row1", "table1-row4")]
        lines = render_table(reports).splitlines()
        assert len(lines) == 4
        assert lines[2].startswith("table1-row1")

    def test_csv(self):
        lines = render_csv(network_cost(NetworkConfig())).splitlines()
        assert lines[0] == CSV_HEADER
        assert lines[1] == "conv01,1,40,11,64,40,11,253440,640"
        assert lines[-1].startswith("total,,,,,,,174659072,")

    def test_empty(self):
        with pytest.raises(ValueError):
            render_table([])
