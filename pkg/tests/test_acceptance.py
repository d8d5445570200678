"""One check per acceptance criterion, each reported as a PASS/FAIL line in the terminal summary."""

import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import record
from octcnn.cost import kernel_params, network_cost
from octcnn.multioct import MultiScaleTensor, group_dims, init_weights, multioct_forward
from octcnn.network import AMI_OUTPUTS, AURORA4_OUTPUTS, NetworkConfig, build_network, forward, layer_specs
from octcnn.presets import preset, preset_names
from octcnn.probe import (
    ProbeModel,
    closed_form_oracle,
    compare_branches,
    fit_probe,
    gen_branch_triple,
    gen_synthetic_pairs,
    gradcheck_probe,
    probe_loss,
    split_rows,
)
from octcnn.tensor import ConvWeights, avg_pool, conv2d, upsample_bilinear

from oracles import avg_pool_loops, conv2d_loops, multioct_paths_oracle, upsample_loops


def _rel(value, ref):
    return abs(value - ref) / ref


class TestCostReproduction:
    def test_baselines(self):
        t0 = time.perf_counter()
        aurora = network_cost(NetworkConfig())
        ami = network_cost(NetworkConfig(num_outputs=AMI_OUTPUTS))
        elapsed = time.perf_counter() - t0
        ra, rb = _rel(aurora.total / 1e6, 174.7), _rel(ami.total / 1e6, 175.2)
        delta_ok = ami.total - aurora.total == (AMI_OUTPUTS - AURORA4_OUTPUTS) * 1024
        ok = ra <= 1e-3 and rb <= 1e-3 and delta_ok and elapsed < 1.0
        record("1a baseline costs", ok, f"aurora {aurora.total} ({ra:.4%}), ami {ami.total} ({rb:.4%}), "
                                        f"delta exact {delta_ok}, {elapsed * 1e3:.1f} ms")
        assert ok

    @pytest.mark.parametrize("label,name,ref", [
        ("1b octave L2-L15 [0.2,0.8]", "table1-row4", 126.2),
        ("1c multi-octave L2-L15 [0.1,0.1,0.1,0.7]", "table1-row10", 94.3),
        ("1d octave L1-L15 AMI [0.2,0.8]", "table2-row4", 127.5),
    ])
    def test_octave_rows(self, label, name, ref):
        cfg, published = preset(name)
        assert published == ref
        m = network_cost(cfg).total / 1e6
        err = (m - ref) / ref
        record(label, abs(err) <= 0.02, f"{m:.2f} M vs {ref} M ({err:+.2%})")
        assert abs(err) <= 0.02


def test_parameter_parity():
    bad = []
    for name in preset_names():
        cfg, _ = preset(name)
        vanilla = [kernel_params(s) for s in layer_specs(NetworkConfig(num_outputs=cfg.num_outputs))]
        octave = [kernel_params(s) for s in layer_specs(cfg)]
        net = build_network(cfg, scheme="zeros")
        executed = [sum(w.weight_count for w in layer.weights.values()) for layer in net.conv]
        if octave != vanilla or executed != vanilla[:-1]:
            bad.append(name)
    record("2 parameter parity", not bad, f"{len(preset_names()) - len(bad)}/{len(preset_names())} presets exact")
    assert not bad


def test_degeneracy():
    plain = build_network(NetworkConfig(), seed=21)
    unit = build_network(NetworkConfig(oct_range=(1, 15), alphas=(1.0,), octaves=()), seed=21)
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(10):
        x = rng.standard_normal((1, 40, 11))
        worst = max(worst, float(np.max(np.abs(forward(unit, x)[0] - forward(plain, x)[0]))))
    record("3 degeneracy alpha=[1]", worst <= 1e-5, f"max abs diff {worst:.2e} over 10 inputs")
    assert worst <= 1e-5


class TestOracleEquivalence:
    def test_kernels(self):
        rng = np.random.default_rng(4)
        worst = {"conv2d": 0.0, "avg_pool": 0.0, "upsample": 0.0}
        for _ in range(1000):
            c_in, c_out = rng.integers(1, 4, size=2)
            h, w = rng.integers(1, 9, size=2)
            x = rng.standard_normal((c_in, h, w))
            k = int(rng.choice([1, 3]))
            wt = ConvWeights(rng.standard_normal((c_out, c_in, k, k)), rng.standard_normal(c_out))
            stride = tuple(int(s) for s in rng.integers(1, 3, size=2))
            d = np.max(np.abs(conv2d(x, wt, stride) - conv2d_loops(x, wt.kernel, wt.bias, stride)))
            worst["conv2d"] = max(worst["conv2d"], d)

            p = int(rng.choice([2, 4, 8]))
            ceil_mode = bool(rng.integers(2))
            d = np.max(np.abs(avg_pool(x, p, ceil_mode) - avg_pool_loops(x, p, ceil_mode)))
            worst["avg_pool"] = max(worst["avg_pool"], d)

            th, tw = h + int(rng.integers(0, 9)), w + int(rng.integers(0, 9))
            d = np.max(np.abs(upsample_bilinear(x, th, tw) - upsample_loops(x, th, tw)))
            worst["upsample"] = max(worst["upsample"], d)
        ok = max(worst.values()) <= 1e-6
        record("4a kernels vs loop oracles", ok,
               ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (1000 instances each)")
        assert ok

    def test_multioct(self):
        rng = np.random.default_rng(5)
        worst = 0.0
        for _ in range(100):
            rounding = str(rng.choice(["ceil", "floor"]))
            base = tuple(int(v) for v in rng.integers(4, 14, size=2))
            stride = tuple(int(s) for s in rng.integers(1, 3, size=2))
            n_in, n_out = rng.integers(1, 5, size=2)
            octs = sorted(rng.choice([1, 2, 3], size=3, replace=False).tolist())
            in_octs = (0, *octs[:n_in - 1])
            out_octs = (0, *octs[:n_out - 1])
            in_counts = tuple(int(c) for c in rng.integers(1, 4, size=n_in))
            out_counts = tuple(int(c) for c in rng.integers(1, 4, size=n_out))
            layer = init_weights(in_counts, out_counts, in_octs, out_octs, seed=rng, stride=stride,
                                 rounding=rounding, activation_order="none")
            groups = [rng.standard_normal((c, *group_dims(*base, t, rounding))) for c, t in zip(in_counts, in_octs)]
            y = multioct_forward(MultiScaleTensor(groups, in_octs, base, rounding), layer)
            want = multioct_paths_oracle(groups, in_octs, out_octs, {k: v.kernel for k, v in layer.weights.items()},
                                         stride, base, rounding)
            worst = max(worst, max(float(np.max(np.abs(a - b))) for a, b in zip(y.groups, want)))
        record("4b multioct_forward vs path oracle", worst <= 1e-5, f"max abs diff {worst:.1e} (100 instances)")
        assert worst <= 1e-5


def test_shape_law():
    specs = layer_specs(NetworkConfig())
    trace = [(40, 11)] + [specs[i].out_dims for i in (2, 5, 8, 11, 14)]
    d = specs[-1].in_channels
    ok = trace == [(40, 11), (20, 11), (10, 11), (5, 6), (3, 3), (2, 2)] and d == 1024
    record("5 shape law", ok, " -> ".join(f"{h}x{w}" for h, w in trace) + f", D = {d}")
    assert ok


def test_probe_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    clean, noisy = gen_synthetic_pairs(64, 8, seed=6)
    model = ProbeModel(rng.standard_normal((8, 8)), rng.standard_normal(8))
    grad_err = gradcheck_probe(clean, noisy, model, step=1e-4)

    # affine map plus noise, so the optimum is strictly positive and a relative bound is meaningful
    clean, noisy = gen_synthetic_pairs(1024, 64, seed=0, corruption="mixed", sigma=0.1)
    (tx, ty), (vx, vy) = split_rows(clean, noisy, 0.1)
    oracle, oracle_train = closed_form_oracle(tx, ty)
    oracle_val = probe_loss(oracle, vx, vy)
    fit = fit_probe(clean, noisy, epochs=100, lr=20.0, batch_size=1024)
    val, train = fit.log[-1]["val_loss"], fit.log[-1]["train_loss"]
    within = abs(val - oracle_val) <= 0.1 * oracle_val and train >= oracle_train - 1e-6

    # exactly realizable map: both reach the noise-free optimum
    ac, an = gen_synthetic_pairs(1024, 64, seed=1, corruption="affine")
    affine_oracle = closed_form_oracle(ac, an)[1]
    affine_fit = fit_probe(ac, an, val_fraction=0, epochs=300, lr=20.0, batch_size=1024)
    affine_ok = affine_oracle <= 1e-10 and affine_fit.log[-1]["train_loss"] <= 1e-3 * affine_fit.log[0]["train_loss"]

    default = fit_probe(clean, noisy)
    epochs_ok = [e["epoch"] for e in default.log] == [0, 1, 2, 3]
    elapsed = time.perf_counter() - t0
    ok = grad_err < 1e-4 and within and affine_ok and epochs_ok and elapsed < 30
    record("6 probe correctness", ok,
           f"gradcheck {grad_err:.1e}; val {val:.6g} vs oracle {oracle_val:.6g}; "
           f"affine oracle {affine_oracle:.1e}; default epochs logged {len(default.log) - 1}; {elapsed:.1f} s")
    assert ok


def test_branch_ordering():
    wins = 0
    for seed in range(100):
        clean, a, b = gen_branch_triple(200, 16, seed=seed, sigma_a=0.2, sigma_b=0.4)
        losses = compare_branches(clean, a, b)
        wins += losses["a"] < losses["b"]
    record("7 less-corrupted variant has lower oracle loss", wins >= 95, f"{wins}/100 trials")
    assert wins >= 95


def _cli(args, cwd):
    env = dict(os.environ, PYTHONHASHSEED="0")
    return subprocess.run([sys.executable, "-m", "octcnn", *args], cwd=cwd, capture_output=True, env=env)


def _snapshot(directory: Path) -> dict:
    return {str(p.relative_to(directory)): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def test_cli_determinism(tmp_path):
    commands = {
        "cost": ["cost", "--all-presets", "--format", "both", "--output", "cost.csv"],
        "validate": ["validate", "--preset", "table1-row10"],
        "gen": ["gen", "--n", "200", "--d", "8", "--corruption", "mixed", "--seed", "3",
                "--clean-out", "c.moct", "--noisy-out", "n.moct"],
        "forward": ["forward", "--preset", "table1-row4", "--seed", "3", "--out", "fwd",
                    "--tap", "conv15_all", "--tap", "conv05_low", "--save-weights", "w"],
        "probe": ["probe", "--clean", "c.moct", "--noisy", "n.moct", "--epochs", "5", "--seed", "3"],
        "gradcheck": ["gradcheck", "--seed", "3"],
    }
    runs = []
    for attempt in ("a", "b"):
        work = tmp_path / attempt
        work.mkdir()
        outputs = {}
        for name, args in commands.items():
            res = _cli(args, work)
            outputs[name] = (res.returncode, res.stdout, res.stderr)
        runs.append((outputs, _snapshot(work)))
    failed = [name for name in commands if runs[0][0][name] != runs[1][0][name] or runs[0][0][name][0] != 0]
    files_equal = runs[0][1] == runs[1][1]
    ok = not failed and files_equal
    record("8 CLI determinism", ok, f"{len(commands) - len(failed)}/{len(commands)} subcommands identical, "
                                    f"{len(runs[0][1])} output files identical: {files_equal}")
    assert ok
