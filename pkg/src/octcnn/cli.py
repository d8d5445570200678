"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 validation error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .container import load_network, save_network
from .cost import network_cost, render_csv, render_summary_csv, render_table
from .network import ConfigError, NetworkConfig, build_network, config_from_dict, forward, parse_config
from .presets import describe, preset, preset_names
from .probe import (
    CORRUPTIONS,
    ProbeDivergence,
    ProbeModel,
    closed_form_oracle,
    compare_branches,
    fit_probe,
    gen_synthetic_pairs,
    gradcheck_probe,
    load_encodings,
    probe_loss,
    split_rows,
)

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


def _load_config(args, allow_multi: bool = False):
    """Returns a list of (label, config, published M or None)."""
    overrides = {}
    if getattr(args, "outputs", None) is not None:
        overrides["num_outputs"] = args.outputs
    items = []
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise CliError(f"cannot read config: {exc}") from None
        cfg = parse_config(text)
        if overrides:
            cfg = config_from_dict({**cfg.to_dict(), **overrides})
        items.append((args.config, cfg, None))
    names = args.preset or []
    if isinstance(names, str):
        names = [names]
    if getattr(args, "all_presets", False):
        names = preset_names()
    for name in names:
        try:
            cfg, ref = preset(name, **overrides)
        except KeyError as exc:
            raise CliError(str(exc.args[0])) from None
        items.append((name, cfg, None if overrides else ref))
    if not items:
        items.append(("aurora4-baseline", NetworkConfig(**overrides), None if overrides else 174.7))
    if len(items) > 1 and not allow_multi:
        raise CliError("give exactly one of --config or --preset", EXIT_USAGE)
    return items


def cmd_cost(args) -> int:
    items = _load_config(args, allow_multi=True)
    reports = [network_cost(cfg, label, ref) for label, cfg, ref in items]
    if args.format in ("text", "both"):
        sys.stdout.write(render_table(reports))
    if args.format in ("csv", "both"):
        if args.format == "both":
            sys.stdout.write("\n")
        sys.stdout.write(render_csv(reports[0]) if len(reports) == 1 else render_summary_csv(reports))
    if args.output:
        text = render_csv(reports[0]) if len(reports) == 1 else render_summary_csv(reports)
        Path(args.output).write_text(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    (label, cfg, _), = _load_config(args)
    sys.stdout.write(cfg.to_json() + "\n")
    print(f"ok: {describe(label) if label in preset_names() else label}", file=sys.stderr)
    return EXIT_OK


def cmd_forward(args) -> int:
    (_, cfg, _), = _load_config(args)
    if args.weights:
        net = load_network(args.weights)
        if net.config != cfg and (args.config or args.preset):
            raise CliError("weights were saved for a different config")
    else:
        net = build_network(cfg, seed=args.seed)
    if args.save_weights:
        save_network(net, args.save_weights)
    if args.input:
        x = fileio.load(args.input, rank=3)
    else:
        x = np.random.default_rng(args.seed).standard_normal(net.config.input_dims).astype(np.float32)
    try:
        logits, taps = forward(net, x, args.tap or (), preactivation=args.preactivation_taps)
    except KeyError as exc:
        raise CliError(str(exc.args[0])) from None
    if not np.all(np.isfinite(logits)):
        raise CliError("forward pass produced non-finite logits", EXIT_NUMERIC)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.save(out / "logits.moct", logits.reshape(1, -1))
    print(f"logits {logits.shape[0]}")
    for name, t in taps.items():
        fileio.save(out / f"{name}.moct", t)
        print(f"{name} {'x'.join(map(str, t.shape))}")
    return EXIT_OK


def cmd_probe(args) -> int:
    clean = load_encodings(args.clean, "clean")
    noisy = load_encodings(args.noisy, "noisy")
    if clean.n != noisy.n or clean.d != noisy.d:
        raise CliError(f"unpaired encodings: clean is {clean.n}x{clean.d}, noisy is {noisy.n}x{noisy.d}")
    try:
        model = fit_probe(clean, noisy, args.val_fraction, args.epochs, args.lr, args.seed, args.batch_size,
                          use_bias=not args.no_bias, init=args.init)
    except ProbeDivergence as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from None
    _, oracle_loss = closed_form_oracle(clean, noisy, args.ridge, use_bias=not args.no_bias)
    (tx, ty), (vx, vy) = split_rows(clean, noisy, args.val_fraction)
    held_out, _ = closed_form_oracle(tx, ty, args.ridge, use_bias=not args.no_bias)
    report = {
        "n": clean.n, "d": clean.d, "epochs": args.epochs, "lr": args.lr, "batch_size": args.batch_size,
        "seed": args.seed, "val_fraction": args.val_fraction, "bias": not args.no_bias, "init": args.init,
        "log": model.log, "final_val_loss": model.log[-1]["val_loss"],
        "oracle_loss": oracle_loss, "oracle_train_loss": probe_loss(held_out, tx, ty),
        "oracle_val_loss": probe_loss(held_out, vx, vy), "ridge": args.ridge,
    }
    if args.noisy_b:
        other = load_encodings(args.noisy_b, "noisy_b")
        if other.n != clean.n or other.d != clean.d:
            raise CliError("--noisy-b is not paired with --clean")
        losses = compare_branches(clean, noisy, other, args.ridge)
        report["branch_oracle_loss"] = {"noisy": losses["a"], "noisy_b": losses["b"]}
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _parse_shape(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise CliError(f"bad shape {text!r}; expected e.g. 1x40x11", EXIT_USAGE) from None
    if len(dims) != 3 or min(dims) < 1:
        raise CliError(f"bad shape {text!r}; expected three positive sizes", EXIT_USAGE)
    return dims


def cmd_gen(args) -> int:
    if args.shape:
        if not args.out:
            raise CliError("--shape needs --out", EXIT_USAGE)
        x = np.random.default_rng(args.seed).standard_normal(_parse_shape(args.shape))
        fileio.save(args.out, x)
        print(f"wrote {args.out} {args.shape}")
        return EXIT_OK
    if not (args.clean_out and args.noisy_out):
        raise CliError("give --shape/--out or --clean-out/--noisy-out", EXIT_USAGE)
    if args.n < 1 or args.d < 1:
        raise CliError("--n and --d must be positive")
    clean, noisy = gen_synthetic_pairs(args.n, args.d, args.seed, args.corruption, args.sigma)
    clean.save(args.clean_out)
    noisy.save(args.noisy_out)
    print(f"wrote {args.clean_out} and {args.noisy_out} ({args.n}x{args.d}, {args.corruption})")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if not 1 <= args.d <= 16:
        raise CliError("--d must be in 1..16")
    clean, noisy = gen_synthetic_pairs(args.n, args.d, args.seed, "mixed", sigma=0.5)
    rng = np.random.default_rng(args.seed + 1)
    model = ProbeModel(rng.standard_normal((args.d, args.d)), rng.standard_normal(args.d))
    err = gradcheck_probe(clean, noisy, model, args.step)
    print(f"max relative error {err:.6e}")
    return EXIT_OK if err < 1e-4 else EXIT_NUMERIC


def _config_args(p: argparse.ArgumentParser, multi: bool = False) -> None:
    p.add_argument("--config", help="network config (JSON)")
    p.add_argument("--preset", action="append" if multi else None, choices=preset_names(),
                   help="named table-row configuration" + (" (repeatable)" if multi else ""))
    p.add_argument("--outputs", type=int, help="override the number of output states")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="octcnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cost", help="per-layer MACC and parameter report")
    _config_args(p, multi=True)
    p.add_argument("--all-presets", action="store_true", help="summarise every table-row preset")
    p.add_argument("--format", choices=("text", "csv", "both"), default="text")
    p.add_argument("--output", help="also write the CSV rendering here")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("validate", help="parse and validate a config")
    _config_args(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("forward", help="forward pass with taps")
    _config_args(p)
    p.add_argument("--weights", help="model directory to load")
    p.add_argument("--save-weights", help="write the model directory used")
    p.add_argument("--input", help="rank-3 input tensor file (default: seeded random)")
    p.add_argument("--tap", action="append", help="tap name, e.g. conv15_all (repeatable)")
    p.add_argument("--preactivation-taps", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("probe", help="fit the affine probe between encodings")
    p.add_argument("--clean", required=True)
    p.add_argument("--noisy", required=True)
    p.add_argument("--noisy-b", help="second variant; report the oracle loss of both")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--init", choices=("identity", "zeros"), default="identity")
    p.add_argument("--no-bias", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("gen", help="synthetic encodings or feature maps")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--corruption", choices=CORRUPTIONS, default="noise")
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--clean-out")
    p.add_argument("--noisy-out")
    p.add_argument("--shape", help="write a CxHxW feature map instead, e.g. 1x40x11")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("gradcheck", help="finite-difference check of the probe gradient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--step", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FileNotFoundError, fileio.TensorFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
