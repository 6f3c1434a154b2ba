"""Command line front-end: train the regressor, emit sidecar predictions."""

from __future__ import annotations

import argparse
import glob
import logging
import sys
from pathlib import Path

from .data import BridgeError
from .predict import predict_widths
from .train import TrainingRun, train_width_model


def cmd_train(args) -> None:
    run = TrainingRun(
        manifest_path=args.manifest,
        width_table_path=args.widths,
        images_root=args.images_root,
        out_dir=args.out_dir,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        input_size=args.input_size,
        pretrained=not args.no_pretrained,
        seed=args.seed,
    )
    checkpoint = train_width_model(run)
    print(f"checkpoint written: {checkpoint}")


def cmd_predict(args) -> None:
    paths = []
    for pattern in args.images:
        expanded = sorted(glob.glob(pattern))
        if expanded:
            paths.extend(expanded)
        elif Path(pattern).exists():
            paths.append(pattern)
    if not paths:
        raise BridgeError(f"no images match {args.images}")
    out = predict_widths(args.checkpoint, paths, args.out)
    print(f"sidecar written: {out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="widthbridge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fine-tune the width regressor")
    p.add_argument("--manifest", required=True, help="manifest.csv from the toolkit")
    p.add_argument("--widths", required=True, help="widths.csv from the toolkit")
    p.add_argument("--images-root", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--input-size", type=int, default=224)
    p.add_argument("--no-pretrained", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="emit a sidecar prediction file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", nargs="+", required=True, help="image paths or globs")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except BridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
