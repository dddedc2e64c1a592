"""Command-line interface.

Subcommands: gen-data, train-unet, train-classifier, preprocess, eval,
params. Every command is deterministic under a fixed --seed. Failures
print a single machine-readable JSON line on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(json.dumps({"error": "usage", "message": message}), file=sys.stderr)
        raise SystemExit(2)


def _add_common(p: argparse.ArgumentParser, *, preset: bool = True, training: bool = False):
    p.add_argument("--seed", type=int, default=0, help="master random seed")
    if preset:
        p.add_argument("--preset", choices=["toy", "paper-scale"], default="toy",
                       help="model size preset")
    if training:
        p.add_argument("--epochs", type=int, default=10)
        p.add_argument("--lr", type=float, default=1e-3)
        p.add_argument("--batch-size", type=int, default=16)
        p.add_argument("--target-val-acc", type=float, default=None,
                       help="stop once validation accuracy reaches this value")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wastenet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[], help="generate a synthetic deposit dataset")
    _add_common(p, preset=False)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--deposits", type=int, default=10)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--split", type=str, default="0.7,0.2,0.1",
                   help="train,val,test ratio (episodes stay whole)")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("train-unet", help="train the segmenter on mask samples")
    _add_common(p, training=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-augment", action="store_true")

    p = sub.add_parser("train-classifier", help="train the pair classifier")
    _add_common(p, training=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--frozen-weights", type=Path, default=None,
                   help="FWWT file for the frozen feature path (random-frozen otherwise)")

    p = sub.add_parser("preprocess", help="crop/scale image pairs with a trained segmenter")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--unet", type=Path, required=True, help="segmenter checkpoint")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--target", type=int, default=224)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--limit", type=int, default=8)

    p = sub.add_parser("eval", help="evaluate a classifier checkpoint (or an untrained model)")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--ckpt", type=Path, default=None,
                   help="classifier checkpoint; omitted = freshly initialized model")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")

    p = sub.add_parser("params", help="print parameter counts for a preset")
    _add_common(p)
    p.add_argument("--model", choices=["deltanet", "unet"], default="deltanet")
    return parser


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _cmd_gen_data(args) -> int:
    from ..scenegen import gen_dataset

    ratio = tuple(float(x) for x in args.split.split(","))
    if len(ratio) != 3:
        raise ValueError("--split needs three comma-separated ratios")
    manifest = gen_dataset(args.seed, args.episodes, args.deposits, args.classes,
                           args.image_size, args.out, split_ratio=ratio, workers=args.workers)
    counts = manifest.pair_counts()
    print(f"wrote {len(manifest.episodes)} episodes "
          f"({counts['train']}/{counts['val']}/{counts['test']} train/val/test pairs) to {args.out}")
    return 0


def _cmd_train_unet(args) -> int:
    from ..segmentation import UNetConfig, train_unet
    from . import dataio, report
    from .metrics import MetricsReport

    config = UNetConfig.preset(args.preset)
    manifest = dataio.load_manifest(args.data)
    if manifest.image_size != config.input_size:
        raise ValueError(
            f"dataset images are {manifest.image_size}px but preset {args.preset!r} "
            f"expects {config.input_size}px")
    splits = {s: dataio.load_mask_samples(args.data, s) for s in ("train", "val", "test")}
    result = train_unet(splits["train"], splits["val"], splits["test"], config,
                        epochs=args.epochs, seed=args.seed, lr=args.lr,
                        batch_size=args.batch_size,
                        target_val_accuracy=args.target_val_acc,
                        use_augmentation=not args.no_augment)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.save_checkpoint(result.model, out / "unet.fwwt")
    metrics = MetricsReport(epochs=result.history, test_accuracy=result.test_accuracy)
    report.write_metrics_json(metrics, out / "metrics.json")
    report.write_history_csv(result.history, out / "metrics.csv")
    if result.history:
        report.plot_training_curves(result.history, out / "figures" / "training_curves.png")
    _unet_example_figure(result.model, splits["test"], out / "figures" / "mask_examples.png")
    print(f"test pixel accuracy {result.test_accuracy:.4f} after {len(result.history)} epochs -> {out}")
    return 0


def _unet_example_figure(model, samples, path, limit: int = 4) -> None:
    from ..segmentation import binarize, unet_forward
    from . import report

    subset = samples[:limit]
    probs = unet_forward(model, np.stack([s.image for s in subset]))
    preds = binarize(probs.data)
    report.plot_mask_examples([s.image for s in subset], [s.mask for s in subset],
                              list(preds), path, limit=limit)


def _cmd_train_classifier(args) -> int:
    from ..classifier import DeltaNetConfig, build_deltanet, evaluate_pairs, train_classifier
    from ..core import OptimizerConfig
    from . import dataio, report
    from .metrics import MetricsReport, confusion_matrix

    config = DeltaNetConfig.preset(args.preset)
    manifest = dataio.load_manifest(args.data)
    if manifest.image_size != config.input_size:
        raise ValueError(
            f"dataset images are {manifest.image_size}px but preset {args.preset!r} "
            f"expects {config.input_size}px")
    if manifest.class_count != config.num_classes:
        raise ValueError(
            f"dataset has {manifest.class_count} classes but preset {args.preset!r} "
            f"expects {config.num_classes}")
    train = dataio.load_pair_samples(args.data, "train")
    val = dataio.load_pair_samples(args.data, "val")
    test = dataio.load_pair_samples(args.data, "test")

    model = build_deltanet(config, frozen_weights=args.frozen_weights, seed=args.seed)
    result = train_classifier(model, train, val, epochs=args.epochs,
                              optimizer_config=OptimizerConfig(lr=args.lr),
                              seed=args.seed, batch_size=args.batch_size,
                              target_val_accuracy=args.target_val_acc)

    eval_split = test if test else val
    _, acc, preds = evaluate_pairs(model, eval_split, batch_size=args.batch_size)
    labels = [s.label for s in eval_split]
    confusion = confusion_matrix(preds, labels, config.num_classes)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.save_checkpoint(model, out / "deltanet.fwwt")
    metrics = MetricsReport(epochs=result.history, test_accuracy=acc, confusion=confusion)
    report.write_metrics_json(metrics, out / "metrics.json")
    report.write_history_csv(result.history, out / "metrics.csv")
    if result.history:
        report.plot_training_curves(result.history, out / "figures" / "training_curves.png")
    report.plot_confusion_matrix(confusion, out / "figures" / "confusion_matrix.png")
    print(f"held-out categorical accuracy {acc:.4f} after {len(result.history)} epochs -> {out}")
    return 0


def _cmd_preprocess(args) -> int:
    from ..preprocess import preprocess_pair
    from ..segmentation import UNetConfig
    from . import dataio, report

    config = UNetConfig.preset(args.preset)
    model = dataio.load_checkpoint(args.unet, config)
    pairs = dataio.load_pair_samples(args.data, args.split)[:args.limit]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kept = []
    skipped = 0
    for i, sample in enumerate(pairs):
        processed = preprocess_pair(sample.before, sample.after, model, target=args.target)
        if processed is None:
            skipped += 1
            continue
        dataio.write_sample_file(processed.before, out / f"pair{i:04d}_before.fwds")
        dataio.write_sample_file(processed.after, out / f"pair{i:04d}_after.fwds")
        kept.append((processed.before, processed.after))
    if kept:
        report.plot_pair_examples(kept, out / "figures" / "pair_examples.png")
    print(f"wrote {len(kept)} cropped pairs ({skipped} skipped, no foreground) to {out}")
    return 0


def _cmd_eval(args) -> int:
    from ..classifier import DeltaNetConfig, build_deltanet, evaluate_pairs
    from . import dataio, report
    from .metrics import MetricsReport, confusion_matrix

    config = DeltaNetConfig.preset(args.preset)
    if args.ckpt is not None:
        model = dataio.load_checkpoint(args.ckpt, config)
    else:
        model = build_deltanet(config, seed=args.seed)
    samples = dataio.load_pair_samples(args.data, args.split)
    if not samples:
        raise ValueError(f"no samples in split {args.split!r}")
    loss, acc, preds = evaluate_pairs(model, samples)
    labels = [s.label for s in samples]
    confusion = confusion_matrix(preds, labels, config.num_classes)
    print(f"split={args.split} samples={len(samples)} loss={loss:.4f} accuracy={acc:.4f}")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report.write_metrics_json(MetricsReport(test_accuracy=acc, confusion=confusion),
                                  out / "metrics.json")
        report.plot_confusion_matrix(confusion, out / "figures" / "confusion_matrix.png")
    return 0


def _cmd_params(args) -> int:
    if args.model == "unet":
        from ..segmentation import UNetConfig, build_unet

        counts = build_unet(UNetConfig.preset(args.preset), seed=args.seed).param_counts()
    else:
        from ..classifier import DeltaNetConfig, build_deltanet

        counts = build_deltanet(DeltaNetConfig.preset(args.preset), seed=args.seed).param_counts()
    print(f"total {counts.total}")
    print(f"trainable {counts.trainable}")
    print(f"frozen {counts.frozen}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train-unet": _cmd_train_unet,
    "train-classifier": _cmd_train_classifier,
    "preprocess": _cmd_preprocess,
    "eval": _cmd_eval,
    "params": _cmd_params,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
