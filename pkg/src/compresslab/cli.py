"""Command-line interface.

Subcommands: train, prune, quantize, evaluate, size, sweep, report.
Exit codes: 0 success, 1 runtime failure, 2 usage error (bad flags,
missing input files, malformed config).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import metrics, nncore, quantization, sizing, sweep
from .nncore import Model, TrainConfig
from .pruning import prune_and_finetune
from .quantization import QuantizedTensor

logger = logging.getLogger(__name__)

_SIZE_ACC_COLUMNS = ["sparsity", "precision_bits", "int8_mode", "size_bytes",
                     "reduction_factor", "accuracy_pct", "delta_acc_pp"]
_QUALITY_COLUMNS = ["sparsity", "precision_bits", "quality", "flag"]


def _add_dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, choices=sorted(sweep.DATASET_ARCHS))
    p.add_argument("--data-dir", required=True, help="directory holding the dataset files")


def _add_train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--val-split", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="compresslab",
        description="Train small CNNs, prune and quantize them, and measure "
                    "the compressed sizes.")
    parser.add_argument("--quiet", action="store_true", help="suppress progress logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a baseline model and save the artifact")
    _add_dataset_args(p)
    p.add_argument("--arch", default=None, help="architecture id (default: per dataset)")
    _add_train_args(p)
    p.add_argument("--out", required=True, help="artifact path (.gz gets gzipped)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("prune", help="magnitude-prune an artifact with fine-tuning")
    p.add_argument("--in", dest="input", required=True, help="input artifact")
    p.add_argument("--out", required=True)
    p.add_argument("--target-sparsity", type=float, required=True)
    _add_dataset_args(p)
    p.add_argument("--arch", default=None, help="architecture id (default: inferred)")
    _add_train_args(p)
    p.set_defaults(func=cmd_prune, learning_rate=0.02)

    p = sub.add_parser("quantize", help="quantize an artifact's weight tensors")
    p.add_argument("--in", dest="input", required=True, help="input artifact (float32)")
    p.add_argument("--out", required=True)
    p.add_argument("--bits", type=int, required=True, choices=(8, 16))
    p.add_argument("--mode", default="asymmetric", choices=("asymmetric", "symmetric"),
                   help="int8 grid placement (ignored for 16-bit)")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("evaluate", help="print an artifact's accuracy in percent")
    p.add_argument("--in", dest="input", required=True)
    _add_dataset_args(p)
    p.add_argument("--arch", default=None, help="architecture id (default: inferred)")
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("size", help="print an artifact's gzipped byte count")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_size)

    p = sub.add_parser("sweep", help="run the full sparsity x precision grid from a config")
    p.add_argument("--config", required=True, help="flat key = value config file")
    p.add_argument("--out-dir", default=None, help="overrides the config's out_dir")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render a results CSV as tables")
    p.add_argument("--csv", required=True, help="results.csv from a sweep")
    p.add_argument("--format", default="markdown", choices=("markdown", "csv"))
    p.set_defaults(func=cmd_report)
    return parser


def _load_dataset(args):
    return sweep.DATASET_LOADERS[args.dataset](args.data_dir)


def _train_config(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                       learning_rate=args.learning_rate, val_split=args.val_split,
                       seed=args.seed)


def _model_from_artifact(path: str, arch: str | None) -> Model:
    """Load an artifact and rebuild a Model, dequantizing if necessary."""
    tensors = sizing.load_artifact(path)
    params = {name: quantization.dequantize_tensor(v) if isinstance(v, QuantizedTensor) else v
              for name, v in tensors.items()}
    if arch is None:
        arch = nncore.infer_architecture(params)
    return nncore.model_from_params(arch, params)


def cmd_train(args) -> int:
    train_data, _ = _load_dataset(args)
    arch = args.arch or sweep.DATASET_ARCHS[args.dataset]
    model = nncore.train(nncore.build_model(arch, args.seed), train_data,
                         _train_config(args))
    sizing.save_artifact(args.out, model)
    logger.info("wrote %s", args.out)
    return 0


def cmd_prune(args) -> int:
    model = _model_from_artifact(args.input, args.arch)
    train_data, _ = _load_dataset(args)
    pruned, mask = prune_and_finetune(model, train_data, _train_config(args),
                                      args.target_sparsity)
    sizing.save_artifact(args.out, pruned)
    logger.info("wrote %s (sparsity %.4f)", args.out, mask.achieved_sparsity())
    return 0


def cmd_quantize(args) -> int:
    tensors = sizing.load_artifact(args.input)
    for name, value in tensors.items():
        if isinstance(value, QuantizedTensor):
            raise ValueError(f"tensor {name} is already quantized; quantize takes "
                             "float32 artifacts")
    qmap = quantization.quantize_params(tensors, args.bits, args.mode)
    sizing.save_artifact(args.out, qmap)
    logger.info("wrote %s", args.out)
    return 0


def cmd_evaluate(args) -> int:
    model = _model_from_artifact(args.input, args.arch)
    train_data, test_data = _load_dataset(args)
    data = test_data if args.split == "test" else train_data
    print(f"{nncore.evaluate_accuracy(model, data):.6f}")
    return 0


def cmd_size(args) -> int:
    tensors = sizing.load_artifact(args.input)
    print(sizing.gzipped_size(sizing.serialize_model(tensors)))
    return 0


def cmd_sweep(args) -> int:
    try:
        cfg = sweep.parse_config(args.config)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    records, failures = sweep.run_sweep(cfg, args.out_dir)
    out_dir = args.out_dir or cfg.out_dir
    print(os.path.join(out_dir, sweep.RESULTS_CSV))
    if failures:
        for s, bits, err in failures:
            print(f"failed cell s={s} p={bits}: {err}", file=sys.stderr)
        return 1
    return 0


def _render_table(rows: list[dict[str, str]], columns: list[str], title: str,
                  fmt: str) -> str:
    lines = []
    if fmt == "markdown":
        lines.append(f"## {title}")
        lines.append("| " + " | ".join(columns) + " |")
        lines.append("|" + "|".join(" --- " for _ in columns) + "|")
        for row in rows:
            lines.append("| " + " | ".join(row[c] for c in columns) + " |")
    else:
        lines.append(f"# {title}")
        lines.append(",".join(columns))
        for row in rows:
            lines.append(",".join(row[c] for c in columns))
    return "\n".join(lines)


def cmd_report(args) -> int:
    with open(args.csv) as f:
        records = metrics.records_from_csv(f.read())
    rows = metrics.build_report_table(records)
    print(_render_table(rows, _SIZE_ACC_COLUMNS, "size-accuracy", args.format))
    print()
    print(_render_table(rows, _QUALITY_COLUMNS, "quality", args.format))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, format="%(message)s",
                        level=logging.WARNING if args.quiet else logging.INFO)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
