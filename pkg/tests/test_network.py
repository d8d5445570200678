import numpy as np
import pytest

from octcnn.container import load_network, save_network
from octcnn.multioct import factorize, merge, multioct_forward
from octcnn.network import (
    AMI_OUTPUTS,
    ConfigError,
    NetworkConfig,
    build_network,
    forward,
    layer_specs,
    parse_config,
)
from octcnn.presets import preset


class TestBaseline:
    def test_shape_trace(self):
        specs = layer_specs(NetworkConfig())
        dims = [s.out_dims for s in specs[:-1]]
        assert dims[2] == (20, 11) and dims[5] == (10, 11) and dims[8] == (5, 6)
        assert dims[11] == (3, 3) and dims[14] == (2, 2)
        assert [s.out_channels for s in specs[:-1]] == [64] * 3 + [128] * 6 + [256] * 6
        assert specs[-1].in_channels == 1024
        assert all(s.kind == "conv" for s in specs[:-1])

    def test_forward_shapes(self, rng):
        net = build_network(NetworkConfig())
        logits, taps = forward(net, rng.standard_normal((1, 40, 11)), taps=["conv03_all", "conv15_all"])
        assert logits.shape == (3422,)
        assert taps["conv03_all"].shape == (64, 20, 11)
        assert taps["conv15_all"].shape == (256, 2, 2)

    def test_zero_weights_give_fc_bias(self, rng):
        net = build_network(NetworkConfig(num_outputs=AMI_OUTPUTS), scheme="zeros")
        net.fc_bias[:] = rng.standard_normal(AMI_OUTPUTS)
        logits, _ = forward(net, rng.standard_normal((1, 40, 11)))
        np.testing.assert_array_equal(logits, net.fc_bias)

    def test_rejects_wrong_input(self):
        net = build_network(NetworkConfig())
        with pytest.raises(ValueError, match="input dims"):
            forward(net, np.ones((1, 40, 12)))


class TestConfig:
    def test_empty_is_baseline(self):
        assert parse_config("{}") == NetworkConfig()

    def test_octave_config(self):
        cfg = parse_config('{"oct_range": "L2-L15", "alphas": [0.2, 0.8], "octaves": [1]}')
        assert cfg.oct_range == (2, 15)
        specs = layer_specs(cfg)
        assert specs[0].kind == "conv"
        assert specs[1].entry == "split" and specs[1].in_counts == (51, 13)
        assert specs[14].out_octaves == (0,)

    def test_default_octaves(self):
        cfg = parse_config('{"oct_range": "L1-L15", "alphas": [0.1, 0.1, 0.8]}')
        assert cfg.octaves == (1, 2)

    @pytest.mark.parametrize("text,field", [
        ('{"alphas": [0.3, 0.8], "octaves": [1]}', "alphas"),
        ('{"alpha": [1.0]}', "alpha"),
        ('{"oct_range": "L0-L3", "alphas": [0.2, 0.8]}', "oct_range"),
        ('{"octaves": [1]}', "alphas"),
        ('{"alphas": [0.2, 0.8], "octaves": [4]}', "octaves"),
        ('{"activation_order": "relu"}', "activation_order"),
        ('{"oct_range": ', "<syntax>"),
    ])
    def test_errors_name_the_field(self, text, field):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.field == field

    def test_json_roundtrip(self):
        cfg, _ = preset("table1-row10")
        assert parse_config(cfg.to_json()) == cfg


class TestMultiOctaveNetwork:
    def test_unit_alpha_is_baseline(self, rng):
        plain = build_network(NetworkConfig(), seed=7)
        octave = build_network(NetworkConfig(oct_range=(1, 15), alphas=(1.0,), octaves=()), seed=7)
        x = rng.standard_normal((1, 40, 11))
        np.testing.assert_allclose(forward(octave, x)[0], forward(plain, x)[0], atol=1e-9)

    @pytest.mark.parametrize("name", ["table1-row3", "table1-row4", "table1-row10", "table2-row9"])
    def test_presets_run(self, rng, name):
        cfg, _ = preset(name)
        logits, _ = forward(build_network(cfg), rng.standard_normal((1, 40, 11)))
        assert logits.shape == (cfg.num_outputs,)
        assert np.all(np.isfinite(logits))

    def test_determinism(self, rng):
        cfg, _ = preset("table1-row7")
        x = rng.standard_normal((1, 40, 11))
        a = forward(build_network(cfg, seed=3), x)[0]
        b = forward(build_network(cfg, seed=3), x)[0]
        c = forward(build_network(cfg, seed=4), x)[0]
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a, c)

    def test_taps_conserve(self, rng):
        cfg, _ = preset("table1-row4")
        net = build_network(cfg)
        x = rng.standard_normal((1, 40, 11))
        _, t = forward(net, x, taps=["conv05_all", "conv05_high", "conv05_low"], preactivation=True)
        hi = t["conv05_all"][:net.conv[4].out_counts[0]]
        np.testing.assert_allclose(t["conv05_high"] + t["conv05_low"], hi, atol=1e-9)

    def test_path_taps_match_layer_parts(self, rng):
        cfg, _ = preset("table1-row10")
        net = build_network(cfg)
        _, t = forward(net, rng.standard_normal((1, 40, 11)), taps=[f"conv08_path{k}" for k in range(1, 5)])
        assert {v.shape for v in t.values()} == {(net.conv[7].out_counts[0], 10, 11)}

    def test_unknown_tap(self):
        net = build_network(NetworkConfig())
        with pytest.raises(KeyError, match="conv05_low"):
            forward(net, np.zeros((1, 40, 11)), taps=["conv05_low"])
        with pytest.raises(KeyError, match="expected"):
            forward(net, np.zeros((1, 40, 11)), taps=["nonsense"])

    def test_conv_entry_variant(self, rng):
        cfg, _ = preset("table1-row4", entry_mode="conv", group_rounding="ceil", channel_rounding="floor")
        specs = layer_specs(cfg)
        assert specs[1].in_octaves == (0,) and specs[1].out_octaves == (0, 1)
        assert specs[1].out_counts == (52, 12)
        logits, _ = forward(build_network(cfg), rng.standard_normal((1, 40, 11)))
        assert logits.shape == (3422,)

    def test_split_entry_equals_factorized_input(self, rng):
        cfg, _ = preset("table1-row4")
        net = build_network(cfg)
        x = rng.standard_normal((1, 40, 11))
        _, t = forward(net, x, taps=["conv01_all", "conv02_all"])
        layer = net.conv[1]
        ms = factorize(t["conv01_all"], layer.in_counts, layer.in_octaves, layer.rounding)
        y = multioct_forward(ms, layer)
        np.testing.assert_allclose(merge(y), t["conv02_all"], atol=1e-12)


def test_save_load_roundtrip(tmp_path, rng):
    cfg, _ = preset("table1-row10")
    net = build_network(cfg, seed=11)
    save_network(net, tmp_path / "m")
    again = load_network(tmp_path / "m")
    x = rng.standard_normal((1, 40, 11))
    assert forward(net, x)[0].tobytes() == forward(again, x)[0].tobytes()
