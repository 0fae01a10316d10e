"""Command-line interface: train, eval, gradcheck, synth, export-attention.

Errors print a single line to stderr of the form ``error:<category>: message``
and exit nonzero; categories are config, format, corrupt, shape, lookup,
io, and gradcheck.
"""

import argparse
import os
import sys

import numpy as np

from .feature_io import (
    CorruptionError,
    FormatError,
    load_checkpoint,
    read_features,
    save_checkpoint,
    synth_generate,
    write_features,
)
from .gradcheck import check_model_gradients
from .model import forward
from .tensor import ConfigError, ShapeError
from .training import TrainConfig, evaluate, history_to_text, train

_CONFIG_KEYS = {
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "dropout": float,
    "seed": int,
    "threshold": float,
    "n": int,
    "separation": float,
}


def _read_config_file(path) -> dict:
    """key=value lines; blank lines and #-comments ignored."""
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _CONFIG_KEYS[key](value.strip())
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value.strip()!r}")
    return values


def _setting(args, name, default):
    """Flag if given, else config-file entry, else the default."""
    flag = getattr(args, name, None)
    if flag is not None:
        return flag
    if args.config_values and name in args.config_values:
        return args.config_values[name]
    return default


def _train_config(args) -> TrainConfig:
    defaults = TrainConfig()
    return TrainConfig(
        epochs=_setting(args, "epochs", defaults.epochs),
        batch_size=_setting(args, "batch_size", defaults.batch_size),
        learning_rate=_setting(args, "lr", defaults.learning_rate),
        dropout=_setting(args, "dropout", defaults.dropout),
        seed=_setting(args, "seed", defaults.seed),
    ).validate()


def cmd_train(args) -> int:
    cfg = _train_config(args)  # validated before any feature I/O
    os.makedirs(args.out, exist_ok=True)
    records = list(read_features(args.features))
    params, history = train(records, cfg)
    ckpt_path = os.path.join(args.out, "checkpoint.mmck")
    save_checkpoint(ckpt_path, params)
    with open(os.path.join(args.out, "history.txt"), "w") as f:
        f.write(history_to_text(history))
    last = history[-1]
    print(f"epoch {last.epoch}: loss {last.loss:.6f} accuracy {last.accuracy:.6f}")
    print(f"checkpoint written to {ckpt_path}")
    return 0


def cmd_eval(args) -> int:
    threshold = _setting(args, "threshold", 0.5)
    params = load_checkpoint(args.checkpoint)
    records = list(read_features(args.features))
    report = evaluate(params, records, threshold=threshold)
    sys.stdout.write(report.to_text())
    return 0


def cmd_gradcheck(args) -> int:
    seeds = _setting(args, "n", 3)
    base_seed = _setting(args, "seed", 0)
    report = check_model_gradients(
        n_seeds=seeds, coords_per_seed=4, base_seed=base_seed
    )
    sys.stdout.write(report.to_text())
    if not report.passed:
        print(f"error:gradcheck: worst relative error {report.worst_single:.3e} (single) "
              f"{report.worst_double:.3e} (double)", file=sys.stderr)
        return 1
    return 0


def cmd_synth(args) -> int:
    seed = _setting(args, "seed", 0)
    n = _setting(args, "n", 128)
    separation = _setting(args, "separation", 4.0)
    records = synth_generate(seed, n, separation)
    write_features(args.out, records)
    print(f"wrote {n} records to {args.out}")
    return 0


def cmd_export_attention(args) -> int:
    params = load_checkpoint(args.checkpoint)
    sample = None
    for rec in read_features(args.features):
        if rec.id == args.sample_id:
            sample = rec
            break
    if sample is None:
        raise LookupError(f"sample id {args.sample_id} not found in {args.features}")
    trace = forward(sample, params)
    os.makedirs(args.out, exist_ok=True)

    def save(name, array):
        np.savetxt(os.path.join(args.out, name), array, fmt="%.9e", delimiter=",")

    save("t2i.csv", trace.att_t2i.data)
    save("t2i_grid.csv", trace.att_t2i.data.reshape(7, 7))
    save("i2t.csv", trace.att_i2t.data)
    save("self.csv", trace.att_ii.data)
    print(f"attention maps for sample {args.sample_id} written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmfusion",
        description="Multimodal fake-news fusion network on pre-extracted features.",
    )
    parser.add_argument("--config", help="key=value file; flags take precedence")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train on a feature file")
    p_train.add_argument("--features", required=True)
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--batch-size", type=int, dest="batch_size")
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--dropout", type=float)
    p_train.add_argument("--seed", type=int)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--features", required=True)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--threshold", type=float)
    p_eval.set_defaults(func=cmd_eval)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p_grad.add_argument("--n", type=int, help="number of random seeds")
    p_grad.add_argument("--seed", type=int)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_synth = sub.add_parser("synth", help="generate a synthetic feature file")
    p_synth.add_argument("--out", required=True, help="output feature file")
    p_synth.add_argument("--n", type=int)
    p_synth.add_argument("--separation", type=float)
    p_synth.add_argument("--seed", type=int)
    p_synth.set_defaults(func=cmd_synth)

    p_exp = sub.add_parser("export-attention", help="write attention maps as CSV")
    p_exp.add_argument("--features", required=True)
    p_exp.add_argument("--checkpoint", required=True)
    p_exp.add_argument("--out", required=True, help="output directory")
    p_exp.add_argument("--sample-id", type=int, required=True, dest="sample_id")
    p_exp.set_defaults(func=cmd_export_attention)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.config_values = _read_config_file(args.config) if args.config else {}
        return args.func(args)
    except ConfigError as e:
        print(f"error:config: {e}", file=sys.stderr)
    except FormatError as e:
        print(f"error:format: {e}", file=sys.stderr)
    except CorruptionError as e:
        print(f"error:corrupt: {e}", file=sys.stderr)
    except ShapeError as e:
        print(f"error:shape: {e}", file=sys.stderr)
    except LookupError as e:
        print(f"error:lookup: {e}", file=sys.stderr)
    except OSError as e:
        print(f"error:io: {e}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
