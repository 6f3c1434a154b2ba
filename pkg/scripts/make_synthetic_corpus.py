#!/usr/bin/env python3
"""Generate a synthetic stripe-leaf corpus for demos and experiments.

Example:
  python scripts/make_synthetic_corpus.py --out demo_corpus --images 40 --seed 7
"""

import argparse

from leaftile.annotations import DiseaseClass
from leaftile.synth import make_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--images", type=int, default=40)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--width", type=int, default=320, help="image width")
    parser.add_argument("--height", type=int, default=256, help="image height")
    parser.add_argument("--min-leaf", type=float, default=8.0)
    parser.add_argument("--max-leaf", type=float, default=40.0)
    parser.add_argument(
        "--classes",
        default="blast,red",
        help="comma-separated class labels to cycle through",
    )
    args = parser.parse_args()

    classes = tuple(DiseaseClass.from_label(c) for c in args.classes.split(","))
    ids = make_corpus(
        args.out,
        n_images=args.images,
        classes=classes,
        seed=args.seed,
        img_size=(args.width, args.height),
        width_range=(args.min_leaf, args.max_leaf),
    )
    print(f"wrote {len(ids)} images + annotations under {args.out}")


if __name__ == "__main__":
    main()
