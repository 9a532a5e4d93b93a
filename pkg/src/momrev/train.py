"""Training loop: config dataclass, epoch loop with early stopping,
per-epoch CSV logging, and split evaluation."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import loss as loss_mod
from . import metrics as metrics_mod
from . import network as network_mod
from .errors import ConfigError
from .optim import Adam, EarlyStopper


@dataclass
class DataConfig:
    generator: str = "shapes"  # shapes | blobs | dir
    n: int = 500
    hw: int = 32
    k_classes: int = 4
    path: str | None = None


@dataclass
class TrainConfig:
    task: str = "segmentation"
    network: dict = field(default_factory=dict)
    data: DataConfig = field(default_factory=DataConfig)
    seed: int = 7
    split_seed: int = 7
    dtype: str = "float32"
    lr: float = 1e-4
    batch_size: int = 16
    epochs: int = 500
    patience: int = 50
    weight_decay: float = 0.0
    bce_weight: float = 1.0
    dice_weight: float = 1.0
    dice_smooth: float = 1.0
    early_stop_metric: str = "val_loss"  # val_loss | val_dice | val_accuracy
    eval_threshold: float = 0.5
    hd_variant: str = "max"
    out_dir: str = "runs/run"

    def __post_init__(self):
        if isinstance(self.data, dict):
            self.data = DataConfig(**self.data)
        if self.task not in ("segmentation", "classification"):
            raise ConfigError(f"task: unknown value {self.task!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype: must be float32/float64, got {self.dtype!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.early_stop_metric not in ("val_loss", "val_dice", "val_accuracy"):
            raise ConfigError(f"early_stop_metric: unknown {self.early_stop_metric!r}")

    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def descriptor(self) -> network_mod.NetworkDescriptor:
        if not self.network:
            raise ConfigError("network: descriptor is required")
        return network_mod.NetworkDescriptor(**self.network)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls(**json.loads(text))


def segmentation_defaults(**overrides) -> TrainConfig:
    """Default segmentation recipe at toy scale."""
    cfg = dict(
        task="segmentation",
        network=dict(
            task="segmentation",
            input_shape=[1, 32, 32],
            stages=[dict(width=8, blocks=2, gamma=0.9, mode="reversible"),
                    dict(width=16, blocks=2, gamma=0.9, mode="reversible")],
        ),
        data=dict(generator="shapes", n=500, hw=32),
        lr=1e-4, batch_size=16, epochs=500, patience=50, weight_decay=0.0,
    )
    cfg.update(overrides)
    return TrainConfig(**cfg)


def classification_defaults(**overrides) -> TrainConfig:
    cfg = dict(
        task="classification",
        network=dict(
            task="classification",
            input_shape=[1, 16, 16],
            stages=[dict(width=8, blocks=2, gamma=0.9, mode="reversible"),
                    dict(width=16, blocks=2, gamma=0.9, mode="reversible")],
            num_classes=4,
        ),
        data=dict(generator="blobs", n=2000, hw=16, k_classes=4),
        lr=1e-5, batch_size=32, epochs=500, patience=50, weight_decay=1e-4,
    )
    cfg.update(overrides)
    return TrainConfig(**cfg)


def load_dataset(cfg: TrainConfig) -> list[data_mod.Sample]:
    d = cfg.data
    if d.generator == "shapes":
        return data_mod.gen_shapes_seg(d.n, hw=d.hw, seed=cfg.seed)
    if d.generator == "blobs":
        return data_mod.gen_blobs_cls(d.n, k_classes=d.k_classes, hw=d.hw, seed=cfg.seed)
    if d.generator == "dir":
        if not d.path:
            raise ConfigError("data.path: required for the dir generator")
        return data_mod.load_sample_dir(d.path)
    raise ConfigError(f"data.generator: unknown {d.generator!r}")


def _stack_batch(samples, dtype, task):
    images = np.stack([s.image for s in samples]).astype(dtype)
    if task == "segmentation":
        targets = np.stack([s.target for s in samples]).astype(dtype)
    else:
        targets = np.array([s.target for s in samples], dtype=np.int64)
    return images, targets


def _batch_loss(cfg, net, images, targets, train):
    logits = net.predict(images, train=train)
    if cfg.task == "segmentation":
        lv = loss_mod.hybrid_loss(logits, targets, bce_weight=cfg.bce_weight,
                                  dice_weight=cfg.dice_weight, smooth=cfg.dice_smooth)
    else:
        lv = loss_mod.cross_entropy(logits, targets)
    return logits, lv


def evaluate_split(cfg: TrainConfig, net, samples):
    """Mean loss plus task metrics over one split."""
    dtype = cfg.np_dtype()
    losses = []
    preds, gts, labels, label_preds = [], [], [], []
    for start in range(0, len(samples), cfg.batch_size):
        chunk = samples[start : start + cfg.batch_size]
        images, targets = _stack_batch(chunk, dtype, cfg.task)
        logits, lv = _batch_loss(cfg, net, images, targets, train=False)
        losses.append(lv.total * len(chunk))
        if cfg.task == "segmentation":
            masks = metrics_mod.binarize(logits, cfg.eval_threshold)
            for b in range(len(chunk)):
                preds.append(masks[b, 0])
                gts.append(targets[b, 0])
        else:
            labels.extend(int(t) for t in targets)
            label_preds.extend(int(i) for i in logits.argmax(axis=1))
    mean_loss = float(sum(losses) / len(samples))
    if cfg.task == "segmentation":
        report = metrics_mod.evaluate_masks(preds, gts, hd_variant=cfg.hd_variant)
        means = report.means
        return {"loss": mean_loss, "report": report,
                **dict(zip(metrics_mod.SEG_COLUMNS, means))}
    k = cfg.descriptor().num_classes
    confusion = metrics_mod.confusion_multiclass(np.array(labels), np.array(label_preds), k)
    acc, mcc = metrics_mod.accuracy_mcc(confusion)
    return {"loss": mean_loss, "Accuracy": acc, "MCC": mcc, "confusion": confusion}


def _primary_metric(cfg, val):
    if cfg.early_stop_metric == "val_loss":
        return val["loss"], "min"
    if cfg.early_stop_metric == "val_dice":
        return val["mDSC"], "max"
    return val["Accuracy"], "max"


def train(cfg: TrainConfig, out_dir=None):
    """Run one training episode; returns a result dict.

    Writes into out_dir: resolved config, best checkpoint, per-epoch CSV
    log. The best checkpoint is flushed whenever it improves so a numeric
    abort still leaves the last good one on disk.
    """
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())

    dtype = cfg.np_dtype()
    samples = load_dataset(cfg)
    by_id = {s.id: s for s in samples}
    manifest = data_mod.split([s.id for s in samples], cfg.split_seed)
    (out / "split.json").write_text(manifest.to_json())
    train_set = [by_id[i] for i in manifest.train]
    val_set = [by_id[i] for i in manifest.val]
    test_set = [by_id[i] for i in manifest.test]

    net = network_mod.build(cfg.descriptor(), seed=cfg.seed, dtype=dtype)
    opt = Adam(net.params(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    ckpt_path = out / "checkpoint"
    net.save(ckpt_path)  # initial weights; overwritten on improvement

    log_rows = ["epoch,train_loss,val_loss,val_metric"]
    stopper = None
    history = []
    shuffle_rng = np.random.Generator(np.random.Philox(cfg.seed))
    mode_known = None
    for epoch in range(cfg.epochs):
        order = np.arange(len(train_set))
        shuffle_rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            chunk = [train_set[i] for i in order[start : start + cfg.batch_size]]
            images, targets = _stack_batch(chunk, dtype, cfg.task)
            opt.zero_grad()
            _, lv = _batch_loss(cfg, net, images, targets, train=True)
            net.train_backward(lv.grad)
            opt.step()
            epoch_loss += lv.total * len(chunk)
        epoch_loss /= len(train_set)
        val = evaluate_split(cfg, net, val_set)
        metric, mode = _primary_metric(cfg, val)
        if stopper is None:
            stopper = EarlyStopper(cfg.patience, mode=mode)
            mode_known = mode
        should_stop = stopper.update(metric)
        if stopper.is_best:
            net.save(ckpt_path)
        log_rows.append(f"{epoch},{epoch_loss:.6f},{val['loss']:.6f},{metric:.6f}")
        history.append({"epoch": epoch, "train_loss": epoch_loss,
                        "val_loss": val["loss"], "val_metric": metric})
        if should_stop:
            break
    (out / "train_log.csv").write_text("\n".join(log_rows) + "\n")

    # evaluate the best checkpoint on the test split
    net.load(ckpt_path)
    test = evaluate_split(cfg, net, test_set)
    return {"net": net, "out_dir": out, "history": history, "test": test,
            "splits": manifest, "checkpoint": ckpt_path,
            "val_mode": mode_known}
