"""Differentiable layers and the residual functions built from them.

Every layer owns its parameters (value + gradient accumulator), caches
whatever its backward pass needs when run in train mode, and exposes the
size of that cache so the memory ledger can audit it. Backward accumulates
parameter gradients and returns the input gradient.

Image tensors are channels-first; a leading batch axis is optional for
the spatial layers (a lone C x H x W input is promoted internally).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor
from .errors import ConfigError, ShapeError, StateError


@dataclass
class Param:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0


def he_uniform(rng, shape, fan_in, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def xavier_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base layer: forward/backward pair with explicit caching."""

    def params(self) -> list[Param]:
        return []

    def forward(self, x, train=True):
        raise NotImplementedError

    def backward(self, gy):
        raise NotImplementedError

    def clear_cache(self):
        pass

    def cache_size(self) -> int:
        """Scalars retained past forward for use in backward."""
        return 0

    def _take_cache(self, name="cache"):
        c = getattr(self, "_cache", None)
        if c is None:
            raise StateError(f"{type(self).__name__}: backward without forward")
        return c


class Linear(Layer):
    def __init__(self, d_in, d_out, rng=None, init="xavier", dtype=np.float64, name="linear"):
        if rng is None:
            w = np.zeros((d_out, d_in), dtype=dtype)
        elif init == "he":
            w = he_uniform(rng, (d_out, d_in), d_in, dtype)
        else:
            w = xavier_uniform(rng, (d_out, d_in), d_in, d_out, dtype)
        self.w = Param(f"{name}.w", w)
        self.b = Param(f"{name}.b", np.zeros(d_out, dtype=dtype))
        self._cache = None

    def params(self):
        return [self.w, self.b]

    def forward(self, x, train=True):
        if x.shape[-1] != self.w.value.shape[1]:
            raise ShapeError(f"linear expects width {self.w.value.shape[1]}, got {x.shape}")
        if train:
            self._cache = x
        return x @ self.w.value.T + self.b.value

    def backward(self, gy):
        x = self._take_cache()
        x2 = x if x.ndim == 2 else x[None]
        g2 = gy if gy.ndim == 2 else gy[None]
        self.w.grad += g2.T @ x2
        self.b.grad += g2.sum(axis=0)
        gx = gy @ self.w.value
        return gx

    def clear_cache(self):
        self._cache = None

    def cache_size(self):
        return 0 if self._cache is None else self._cache.size


class Conv2d(Layer):
    def __init__(self, c_in, c_out, k, stride=1, padding=0, rng=None, init="xavier",
                 dtype=np.float64, name="conv"):
        fan_in = c_in * k * k
        fan_out = c_out * k * k
        shape = (c_out, c_in, k, k)
        if rng is None:
            w = np.zeros(shape, dtype=dtype)
        elif init == "he":
            w = he_uniform(rng, shape, fan_in, dtype)
        else:
            w = xavier_uniform(rng, shape, fan_in, fan_out, dtype)
        self.w = Param(f"{name}.w", w)
        self.b = Param(f"{name}.b", np.zeros(c_out, dtype=dtype))
        self.stride = stride
        self.padding = padding
        self._cache = None

    def params(self):
        return [self.w, self.b]

    def forward(self, x, train=True):
        squeeze = x.ndim == 3
        xb = x[None] if squeeze else x
        y = tensor.conv2d_batched(xb, self.w.value, self.stride, self.padding)
        y += self.b.value[None, :, None, None]
        if train:
            self._cache = (xb, squeeze)
        return y[0] if squeeze else y

    def backward(self, gy):
        xb, squeeze = self._take_cache()
        gyb = gy[None] if squeeze else gy
        s, p = self.stride, self.padding
        co, ci, kh, kw = self.w.value.shape
        b, _, oh, ow = gyb.shape
        if p:
            xp = np.pad(xb, ((0, 0), (0, 0), (p, p), (p, p)))
        else:
            xp = xb
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, :, i : i + s * oh : s, j : j + s * ow : s]
                self.w.grad[:, :, i, j] += np.tensordot(
                    gyb, patch, axes=([0, 2, 3], [0, 2, 3])
                )
                gxp[:, :, i : i + s * oh : s, j : j + s * ow : s] += np.tensordot(
                    gyb, self.w.value[:, :, i, j], axes=([1], [0])
                ).transpose(0, 3, 1, 2)
        self.b.grad += gyb.sum(axis=(0, 2, 3))
        gx = gxp[:, :, p : xp.shape[2] - p, p : xp.shape[3] - p] if p else gxp
        return gx[0] if squeeze else gx

    def clear_cache(self):
        self._cache = None

    def cache_size(self):
        return 0 if self._cache is None else self._cache[0].size


class ReLU(Layer):
    def __init__(self):
        self._cache = None

    def forward(self, x, train=True):
        if train:
            self._cache = x
        return np.maximum(x, 0)

    def backward(self, gy):
        x = self._take_cache()
        # subgradient at 0 is 0
        return gy * (x > 0)

    def clear_cache(self):
        self._cache = None

    def cache_size(self):
        return 0 if self._cache is None else self._cache.size


class Tanh(Layer):
    def __init__(self):
        self._cache = None

    def forward(self, x, train=True):
        y = np.tanh(x)
        if train:
            self._cache = y
        return y

    def backward(self, gy):
        y = self._take_cache()
        return gy * (1.0 - y * y)

    def clear_cache(self):
        self._cache = None

    def cache_size(self):
        return 0 if self._cache is None else self._cache.size


class Sigmoid(Layer):
    def __init__(self):
        self._cache = None

    def forward(self, x, train=True):
        y = sigmoid(x)
        if train:
            self._cache = y
        return y

    def backward(self, gy):
        y = self._take_cache()
        return gy * y * (1.0 - y)

    def clear_cache(self):
        self._cache = None

    def cache_size(self):
        return 0 if self._cache is None else self._cache.size


class MaxPool2(Layer):
    """2x2 max pooling, stride 2."""

    def __init__(self):
        self._cache = None

    def forward(self, x, train=True):
        squeeze = x.ndim == 3
        xb = x[None] if squeeze else x
        b, c, h, w = xb.shape
        if h % 2 or w % 2:
            raise ShapeError(f"maxpool2 needs even spatial dims, got {h}x{w}")
        windows = xb.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        windows = windows.reshape(b, c, h // 2, w // 2, 4)
        idx = windows.argmax(axis=-1)
        y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
        if train:
            self._cache = (idx, xb.shape, squeeze)
        return y[0] if squeeze else y

    def backward(self, gy):
        idx, xshape, squeeze = self._take_cache()
        gyb = gy[None] if squeeze else gy
        b, c, h, w = xshape
        gwin = np.zeros((b, c, h // 2, w // 2, 4), dtype=gyb.dtype)
        np.put_along_axis(gwin, idx[..., None], gyb[..., None], axis=-1)
        gx = gwin.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        gx = gx.reshape(b, c, h, w)
        return gx[0] if squeeze else gx

    def clear_cache(self):
        self._cache = None

    def cache_size(self):
        return 0 if self._cache is None else self._cache[0].size


class Upsample2(Layer):
    """Nearest-neighbor 2x upsampling; needs no cache."""

    def forward(self, x, train=True):
        return x.repeat(2, axis=-2).repeat(2, axis=-1)

    def backward(self, gy):
        h2, w2 = gy.shape[-2], gy.shape[-1]
        shape = gy.shape[:-2] + (h2 // 2, 2, w2 // 2, 2)
        return gy.reshape(shape).sum(axis=(-3, -1))


class GlobalAvgPool(Layer):
    """B x C x H x W -> B x C mean over space."""

    def __init__(self):
        self._cache = None

    def forward(self, x, train=True):
        if train:
            self._cache = x.shape
        return x.mean(axis=(-2, -1))

    def backward(self, gy):
        shape = self._take_cache()
        h, w = shape[-2], shape[-1]
        gx = np.broadcast_to(gy[..., None, None] / (h * w), shape)
        return np.ascontiguousarray(gx)

    def clear_cache(self):
        self._cache = None


class Sequential(Layer):
    def __init__(self, layers, name="seq"):
        self.layers = list(layers)
        self.name = name
        self._ran = False

    def params(self):
        out = []
        for i, layer in enumerate(self.layers):
            for p in layer.params():
                out.append(p)
        return out

    def forward(self, x, train=True):
        for layer in self.layers:
            x = layer.forward(x, train=train)
        self._ran = train
        return x

    def backward(self, gy):
        if not self._ran:
            raise StateError(f"{self.name}: backward without forward")
        for layer in reversed(self.layers):
            gy = layer.backward(gy)
        return gy

    def clear_cache(self):
        for layer in self.layers:
            layer.clear_cache()
        self._ran = False

    def cache_size(self):
        return sum(layer.cache_size() for layer in self.layers)


def sigmoid(z):
    out = np.empty_like(z, dtype=np.result_type(z, np.float32))
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def build_residual_function(desc: dict, rng, dtype=np.float64, name="f") -> Sequential:
    """Shape-preserving residual body from a descriptor.

    Supported kinds:
      {"kind": "conv", "channels": C}  -> conv3x3 -> relu -> conv3x3
      {"kind": "linear", "dim": d}     -> linear -> tanh -> linear
    """
    kind = desc.get("kind")
    if kind == "conv":
        c = desc.get("channels")
        if not isinstance(c, int) or c < 1:
            raise ConfigError(f"residual conv descriptor needs positive channels, got {c!r}")
        return Sequential(
            [
                Conv2d(c, c, 3, padding=1, rng=rng, init="he", dtype=dtype, name=f"{name}.conv1"),
                ReLU(),
                Conv2d(c, c, 3, padding=1, rng=rng, init="xavier", dtype=dtype, name=f"{name}.conv2"),
            ],
            name=name,
        )
    if kind == "linear":
        d = desc.get("dim")
        if not isinstance(d, int) or d < 1:
            raise ConfigError(f"residual linear descriptor needs positive dim, got {d!r}")
        return Sequential(
            [
                Linear(d, d, rng=rng, init="xavier", dtype=dtype, name=f"{name}.lin1"),
                Tanh(),
                Linear(d, d, rng=rng, init="xavier", dtype=dtype, name=f"{name}.lin2"),
            ],
            name=name,
        )
    raise ConfigError(f"unknown residual function kind {kind!r}")


def save_checkpoint(path, params: list[Param]) -> None:
    """Named tensors as concatenated MRT1 blobs plus a JSON manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = bytearray()
    manifest = {}
    for p in params:
        if p.name in manifest:
            raise ConfigError(f"duplicate parameter name {p.name!r}")
        entry = tensor.serialize_mrt1(p.value)
        manifest[p.name] = {
            "offset": len(blob),
            "shape": list(p.value.shape),
            "dtype": str(np.dtype(p.value.dtype)),
        }
        blob += entry
    path.with_suffix(".bin").write_bytes(bytes(blob))
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    blob = path.with_suffix(".bin").read_bytes()
    out = {}
    for name, entry in manifest.items():
        arr, _ = tensor.deserialize_mrt1(blob, entry["offset"])
        out[name] = arr
    return out


def assign_checkpoint(params: list[Param], values: dict[str, np.ndarray]) -> None:
    for p in params:
        if p.name not in values:
            raise ConfigError(f"checkpoint missing parameter {p.name!r}")
        v = values[p.name]
        if tuple(v.shape) != tuple(p.value.shape):
            raise ConfigError(
                f"checkpoint shape mismatch for {p.name!r}: {v.shape} vs {p.value.shape}"
            )
        p.value[...] = v.astype(p.value.dtype)
