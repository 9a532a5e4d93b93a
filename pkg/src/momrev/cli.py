"""Operator surface: `momrev {train,eval,verify,memprofile}`.

Runs are driven by a JSON config plus a few flag overrides; every run
writes its resolved config next to its outputs so it can be reproduced
from the file alone. Exit codes: 0 success, 1 verification failure,
2 config error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import memprofile as memprofile_mod
from . import metrics as metrics_mod
from . import network as network_mod
from . import train as train_mod
from . import verify as verify_mod
from .errors import ConfigError, DataError, NotInvertibleError, NumericError

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _load_config(args) -> train_mod.TrainConfig:
    if args.config:
        cfg = train_mod.TrainConfig.from_json(Path(args.config).read_text())
    elif args.preset == "segmentation":
        cfg = train_mod.segmentation_defaults()
    elif args.preset == "classification":
        cfg = train_mod.classification_defaults()
    else:
        raise ConfigError("config: pass --config FILE or --preset")
    for key in ("lr", "epochs", "batch_size", "patience", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    env_seed = os.environ.get("MOMENTUM_SEED")
    if env_seed is not None:
        cfg.seed = int(env_seed)
    return cfg


def cmd_train(args) -> int:
    cfg = _load_config(args)
    result = train_mod.train(cfg)
    test = result["test"]
    if cfg.task == "segmentation":
        values = [test[c] for c in metrics_mod.SEG_COLUMNS]
        rows = [("test", values)]
        columns = metrics_mod.SEG_COLUMNS
    else:
        rows = [("test", [test["Accuracy"], test["MCC"]])]
        columns = metrics_mod.CLS_COLUMNS
    csv_text = metrics_mod.render_csv(columns, rows)
    (result["out_dir"] / "test_metrics.csv").write_text(csv_text)
    sys.stdout.write(metrics_mod.render_markdown(columns, rows))
    print(f"checkpoint: {result['checkpoint']}.bin")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    if args.hd_variant:
        cfg.hd_variant = args.hd_variant
    if args.threshold is not None:
        cfg.eval_threshold = args.threshold
    samples = train_mod.load_dataset(cfg)
    by_id = {s.id: s for s in samples}
    manifest = train_mod.data_mod.split([s.id for s in samples], cfg.split_seed)
    subset = [by_id[i] for i in getattr(manifest, args.split)]
    net = network_mod.build(cfg.descriptor(), seed=cfg.seed, dtype=cfg.np_dtype())
    net.load(Path(args.checkpoint))
    result = train_mod.evaluate_split(cfg, net, subset)
    if cfg.task == "segmentation":
        columns = metrics_mod.SEG_COLUMNS
        rows = [(args.split, [result[c] for c in columns])]
    else:
        columns = metrics_mod.CLS_COLUMNS
        rows = [(args.split, [result["Accuracy"], result["MCC"]])]
    csv_text = metrics_mod.render_csv(columns, rows)
    sys.stdout.write(metrics_mod.render_markdown(columns, rows))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval_metrics.csv").write_text(csv_text)
        (out / "eval_metrics.md").write_text(metrics_mod.render_markdown(columns, rows))
        (out / "config.json").write_text(cfg.to_json())
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.mode == "reversible" and args.gamma == 0.0:
        # exercised precondition: the reversible sweep divides by gamma
        try:
            verify_mod._make_chain(1, 0.0, "reversible", verify_mod._rng(0))
        except NotInvertibleError as exc:
            print(f"FAIL precondition gamma0_reversible: {exc}")
            return EXIT_VERIFY_FAIL
        print("FAIL precondition gamma0_reversible: expected NotInvertibleError")
        return EXIT_VERIFY_FAIL
    results = verify_mod.run_all(depth=args.depth, gamma=args.gamma, dtype=args.dtype)
    ok = True
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
        ok &= r.passed
    return EXIT_OK if ok else EXIT_VERIFY_FAIL


def cmd_memprofile(args) -> int:
    depths = [int(d) for d in args.depths.split(",")]
    descriptor = network_mod.NetworkDescriptor(
        task="classification",
        input_shape=(1, args.hw, args.hw),
        stages=[network_mod.StageSpec(args.width, 1, 0.9, "reversible")],
        num_classes=2,
    )
    batch = np.zeros((args.batch, 1, args.hw, args.hw))
    rows = memprofile_mod.compare_modes(descriptor, batch, depths)
    csv_text = memprofile_mod.render_ledger_csv(rows)
    sys.stdout.write(csv_text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "memprofile.csv").write_text(csv_text)
        (out / "memprofile.md").write_text(memprofile_mod.render_ledger_markdown(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="momrev",
                                     description="momentum residual training engine")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="JSON training config")
        p.add_argument("--preset", choices=["segmentation", "classification"])
        p.add_argument("--lr", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")

    p_train = sub.add_parser("train", help="train a network from a config")
    add_config_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    add_config_flags(p_eval)
    p_eval.add_argument("--checkpoint", required=True,
                        help="checkpoint path prefix (without .bin/.json)")
    p_eval.add_argument("--split", choices=["train", "val", "test"], default="test")
    p_eval.add_argument("--hd-variant", dest="hd_variant", choices=["max", "hd95"])
    p_eval.add_argument("--threshold", type=float)
    p_eval.set_defaults(func=cmd_eval)

    p_verify = sub.add_parser("verify", help="run the structural property suites")
    p_verify.add_argument("--depth", type=int, default=10)
    p_verify.add_argument("--gamma", type=float, default=0.9)
    p_verify.add_argument("--mode", choices=["stored", "reversible"], default="reversible")
    p_verify.add_argument("--dtype", choices=["f32", "f64"], default="f64")
    p_verify.set_defaults(func=cmd_verify)

    p_mem = sub.add_parser("memprofile", help="activation-memory ledger vs depth")
    p_mem.add_argument("--depths", default="1,2,4,8,16")
    p_mem.add_argument("--width", type=int, default=4)
    p_mem.add_argument("--hw", type=int, default=8)
    p_mem.add_argument("--batch", type=int, default=2)
    p_mem.add_argument("--out")
    p_mem.set_defaults(func=cmd_memprofile)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
