"""Task networks assembled from momentum chains.

Two toy architectures share the same building blocks:

* classifier: stem conv -> momentum stages separated by conv+pool
  transitions -> global average pool -> linear logits.
* segmenter: U-Net style encoder/decoder. Encoder stages are momentum
  chains; skips are taken before each downsampling transition and
  concatenated channel-wise in the decoder; a 1x1 conv emits per-pixel
  logits. Pools/upsamples are not invertible, so only the chains run
  reversibly; skip tensors are cached in both modes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, StateError
from .layers import (
    Conv2d,
    GlobalAvgPool,
    Linear,
    MaxPool2,
    ReLU,
    Sequential,
    Upsample2,
    assign_checkpoint,
    build_residual_function,
    load_checkpoint,
    save_checkpoint,
)
from .momentum import MomentumBlock, MomentumChain


@dataclass
class StageSpec:
    width: int
    blocks: int
    gamma: float = 0.9
    mode: str = "reversible"


@dataclass
class NetworkDescriptor:
    task: str  # "classification" | "segmentation"
    input_shape: tuple  # (C, H, W)
    stages: list
    num_classes: int = 2
    v0_policy: str = "zeros"

    def __post_init__(self):
        self.input_shape = tuple(self.input_shape)
        self.stages = [s if isinstance(s, StageSpec) else StageSpec(**s) for s in self.stages]
        if self.task not in ("classification", "segmentation"):
            raise ConfigError(f"unknown task {self.task!r}")
        if len(self.input_shape) != 3:
            raise ConfigError(f"input_shape must be (C,H,W), got {self.input_shape}")
        if not self.stages:
            raise ConfigError("at least one stage is required")
        for s in self.stages:
            if s.width < 1 or s.blocks < 1:
                raise ConfigError(f"invalid stage {s}")
        _, h, w = self.input_shape
        factor = 2 ** (len(self.stages) - 1)
        if h % factor or w % factor:
            raise ConfigError(
                f"spatial dims {h}x{w} not divisible by the {factor}x pooling factor"
            )
        if self.task == "classification" and self.num_classes < 2:
            raise ConfigError("classification needs num_classes >= 2")

    def to_json(self) -> str:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "NetworkDescriptor":
        return cls(**json.loads(text))


def _make_chain(stage: StageSpec, hw, rng, dtype, v0_policy, name):
    blocks = [
        MomentumBlock(
            stage.gamma,
            build_residual_function(
                {"kind": "conv", "channels": stage.width}, rng, dtype, f"{name}.b{j}"
            ),
            mode=stage.mode,
        )
        for j in range(stage.blocks)
    ]
    state_shape = (stage.width,) + tuple(hw)
    return MomentumChain(blocks, v0_policy=v0_policy, state_shape=state_shape,
                         dtype=dtype, name=name)


class Network:
    """Shared plumbing: parameter registry, checkpoints, cache audit."""

    task = None

    def __init__(self, descriptor: NetworkDescriptor):
        self.descriptor = descriptor
        self._pending = False

    def chains(self) -> list[MomentumChain]:
        raise NotImplementedError

    def transition_layers(self) -> list[Sequential]:
        raise NotImplementedError

    def head_layer(self):
        raise NotImplementedError

    def params(self):
        out = []
        for chain in self.chains():
            out.extend(chain.params())
        for layer in self.transition_layers():
            out.extend(layer.params())
        out.extend(self.head_layer().params())
        names = [p.name for p in out]
        if len(names) != len(set(names)):
            raise ConfigError("duplicate parameter registration")
        return out

    def parameter_count(self) -> int:
        return sum(p.value.size for p in self.params())

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def save(self, path):
        save_checkpoint(path, self.params())

    def load(self, path):
        assign_checkpoint(self.params(), load_checkpoint(path))

    def clear_caches(self):
        for chain in self.chains():
            chain.clear()
        for layer in self.transition_layers():
            layer.clear_cache()
        self.head_layer().clear_cache()
        self._pending = False

    def cache_report(self) -> dict:
        chains = self.chains()
        report = {
            "chain_states": sum(c.retained_state_scalars() for c in chains),
            "f_transient_peak": max((c.f_transient_peak for c in chains), default=0),
            "skips": self._skip_scalars(),
            "transitions": sum(l.cache_size() for l in self.transition_layers()),
            "head": self.head_layer().cache_size(),
        }
        report["total"] = sum(report.values()) - report["f_transient_peak"]
        return report

    def _skip_scalars(self) -> int:
        return 0

    def _check_batch(self, batch):
        if batch.ndim != 4 or batch.shape[1:] != self.descriptor.input_shape:
            raise ShapeError(
                f"batch shape {batch.shape} does not match B x {self.descriptor.input_shape}"
            )


class ClassifierNet(Network):
    task = "classification"

    def __init__(self, descriptor, rng, dtype=np.float64):
        super().__init__(descriptor)
        c_in, h, w = descriptor.input_shape
        stages = descriptor.stages
        self.stem = Sequential(
            [Conv2d(c_in, stages[0].width, 3, padding=1, rng=rng, init="he",
                    dtype=dtype, name="stem.conv"), ReLU()],
            name="stem",
        )
        self.stage_chains = []
        self.downs = []
        hw = [h, w]
        for i, s in enumerate(stages):
            self.stage_chains.append(
                _make_chain(s, hw, rng, dtype, descriptor.v0_policy, f"enc{i}")
            )
            if i + 1 < len(stages):
                self.downs.append(
                    Sequential(
                        [Conv2d(s.width, stages[i + 1].width, 3, padding=1, rng=rng,
                                init="he", dtype=dtype, name=f"down{i}.conv"),
                         ReLU(), MaxPool2()],
                        name=f"down{i}",
                    )
                )
                hw = [hw[0] // 2, hw[1] // 2]
        self.head = Sequential(
            [GlobalAvgPool(),
             Linear(stages[-1].width, descriptor.num_classes, rng=rng, init="xavier",
                    dtype=dtype, name="head.fc")],
            name="head",
        )

    def chains(self):
        return self.stage_chains

    def transition_layers(self):
        return [self.stem] + self.downs

    def head_layer(self):
        return self.head

    def predict(self, batch, train=False):
        self._check_batch(batch)
        if train:
            self.clear_caches()
        x = self.stem.forward(batch, train=train)
        for i, chain in enumerate(self.stage_chains):
            x = chain.forward(x, train=train).x
            if i < len(self.downs):
                x = self.downs[i].forward(x, train=train)
        logits = self.head.forward(x, train=train)
        self._pending = train
        return logits

    def train_backward(self, loss_grad):
        if not self._pending:
            raise StateError("train_backward without a pending train-mode predict")
        g = self.head.backward(loss_grad)
        for i in reversed(range(len(self.stage_chains))):
            if i < len(self.downs):
                g = self.downs[i].backward(g)
            g, _ = self.stage_chains[i].backward(g)
        g = self.stem.backward(g)
        self._pending = False
        return g


class SegmenterNet(Network):
    task = "segmentation"

    def __init__(self, descriptor, rng, dtype=np.float64):
        super().__init__(descriptor)
        c_in, h, w = descriptor.input_shape
        stages = descriptor.stages
        m = len(stages)
        self.stem = Sequential(
            [Conv2d(c_in, stages[0].width, 3, padding=1, rng=rng, init="he",
                    dtype=dtype, name="stem.conv"), ReLU()],
            name="stem",
        )
        self.enc_chains = []
        self.downs = []
        hw = [h, w]
        enc_hws = []
        for i, s in enumerate(stages):
            enc_hws.append(list(hw))
            self.enc_chains.append(
                _make_chain(s, hw, rng, dtype, descriptor.v0_policy, f"enc{i}")
            )
            if i + 1 < m:
                self.downs.append(
                    Sequential(
                        [MaxPool2(),
                         Conv2d(s.width, stages[i + 1].width, 3, padding=1, rng=rng,
                                init="he", dtype=dtype, name=f"down{i}.conv"),
                         ReLU()],
                        name=f"down{i}",
                    )
                )
                hw = [hw[0] // 2, hw[1] // 2]
        self.ups = []
        self.fuses = []
        self.dec_chains = []
        for i in reversed(range(m - 1)):
            wi = stages[i].width
            self.ups.append(
                Sequential(
                    [Upsample2(),
                     Conv2d(stages[i + 1].width, wi, 3, padding=1, rng=rng, init="he",
                            dtype=dtype, name=f"up{i}.conv"),
                     ReLU()],
                    name=f"up{i}",
                )
            )
            self.fuses.append(
                Sequential(
                    [Conv2d(2 * wi, wi, 3, padding=1, rng=rng, init="he",
                            dtype=dtype, name=f"fuse{i}.conv"),
                     ReLU()],
                    name=f"fuse{i}",
                )
            )
            self.dec_chains.append(
                _make_chain(stages[i], enc_hws[i], rng, dtype,
                            descriptor.v0_policy, f"dec{i}")
            )
        self.head = Conv2d(stages[0].width, 1, 1, rng=rng, init="xavier",
                           dtype=dtype, name="head.conv")
        self._skips = None

    def chains(self):
        return self.enc_chains + self.dec_chains

    def transition_layers(self):
        return [self.stem] + self.downs + self.ups + self.fuses

    def head_layer(self):
        return self.head

    def _skip_scalars(self):
        if not self._skips:
            return 0
        return sum(s.size for s in self._skips)

    def clear_caches(self):
        super().clear_caches()
        self._skips = None

    def predict(self, batch, train=False):
        self._check_batch(batch)
        if train:
            self.clear_caches()
        m = len(self.enc_chains)
        x = self.stem.forward(batch, train=train)
        skips = []
        for i in range(m):
            x = self.enc_chains[i].forward(x, train=train).x
            if i < m - 1:
                skips.append(x)
                x = self.downs[i].forward(x, train=train)
        for j in range(m - 1):  # ups[j] decodes level m-2-j
            x = self.ups[j].forward(x, train=train)
            skip = skips[m - 2 - j]
            x = np.concatenate([x, skip], axis=1)
            x = self.fuses[j].forward(x, train=train)
            x = self.dec_chains[j].forward(x, train=train).x
        logits = self.head.forward(x, train=train)
        if train:
            self._skips = skips
            self._pending = True
        return logits

    def train_backward(self, loss_grad):
        if not self._pending:
            raise StateError("train_backward without a pending train-mode predict")
        m = len(self.enc_chains)
        g = self.head.backward(loss_grad)
        skip_grads = [None] * (m - 1)
        for j in reversed(range(m - 1)):
            g, _ = self.dec_chains[j].backward(g)
            g = self.fuses[j].backward(g)
            half = g.shape[1] // 2
            skip_grads[m - 2 - j] = g[:, half:]
            g = self.ups[j].backward(g[:, :half])
        for i in reversed(range(m)):
            if i < m - 1:
                g = self.downs[i].backward(g)
                g = g + skip_grads[i]  # fan-out: down path + skip path
            g, _ = self.enc_chains[i].backward(g)
        g = self.stem.backward(g)
        self._pending = False
        self._skips = None
        return g


def build(descriptor: NetworkDescriptor, seed: int, dtype=np.float64) -> Network:
    rng = np.random.Generator(np.random.Philox(seed))
    if descriptor.task == "classification":
        return ClassifierNet(descriptor, rng, dtype=dtype)
    return SegmenterNet(descriptor, rng, dtype=dtype)
