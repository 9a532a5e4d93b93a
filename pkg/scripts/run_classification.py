#!/usr/bin/env python3
"""Train the momentum classifier on the synthetic blobs dataset and
print the test accuracy/MCC report."""

import argparse

from momrev import metrics, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="runs/classification")
    args = ap.parse_args()

    cfg = train.classification_defaults(epochs=args.epochs, lr=args.lr,
                                        seed=args.seed, out_dir=args.out)
    result = train.train(cfg)
    test = result["test"]
    rows = [("test", [test["Accuracy"], test["MCC"]])]
    print(metrics.render_markdown(metrics.CLS_COLUMNS, rows))
    print("confusion (rows = true class):")
    print(test["confusion"])


if __name__ == "__main__":
    main()
