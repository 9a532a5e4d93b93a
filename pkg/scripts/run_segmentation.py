#!/usr/bin/env python3
"""Train the momentum U-Net analogue on synthetic shapes, side by side
with a gamma=0 (plain residual) control, and print both test reports."""

import argparse
from pathlib import Path

from momrev import metrics, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--gamma", type=float, default=0.9)
    ap.add_argument("--out", default="runs/segmentation")
    ap.add_argument("--skip-control", action="store_true")
    args = ap.parse_args()

    out = Path(args.out)
    rows = []
    variants = [("momentum", args.gamma, "reversible")]
    if not args.skip_control:
        variants.append(("control", 0.0, "stored"))
    for name, gamma, mode in variants:
        cfg = train.segmentation_defaults(epochs=args.epochs, seed=args.seed,
                                          out_dir=str(out / name))
        for stage in cfg.network["stages"]:
            stage["gamma"] = gamma
            stage["mode"] = mode
        result = train.train(cfg)
        rows.append((f"{name} g={gamma}",
                     [result["test"][c] for c in metrics.SEG_COLUMNS]))
        print(f"{name}: {len(result['history'])} epochs, "
              f"checkpoint {result['checkpoint']}.bin")
    print(metrics.render_markdown(metrics.SEG_COLUMNS, rows))


if __name__ == "__main__":
    main()
