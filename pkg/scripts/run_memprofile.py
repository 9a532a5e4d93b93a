#!/usr/bin/env python3
"""Tabulate retained activation floats vs chain depth for the stored and
reversible backward modes."""

import argparse

import numpy as np

from momrev import memprofile, network


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depths", default="1,2,4,8,16")
    ap.add_argument("--width", type=int, default=8)
    ap.add_argument("--hw", type=int, default=16)
    ap.add_argument("--batch", type=int, default=4)
    args = ap.parse_args()

    descriptor = network.NetworkDescriptor(
        task="classification",
        input_shape=(1, args.hw, args.hw),
        stages=[network.StageSpec(args.width, 1, 0.9, "reversible")],
        num_classes=2,
    )
    batch = np.zeros((args.batch, 1, args.hw, args.hw))
    depths = [int(d) for d in args.depths.split(",")]
    rows = memprofile.compare_modes(descriptor, batch, depths)
    print(memprofile.render_ledger_markdown(rows))


if __name__ == "__main__":
    main()
