"""A small NCHW numpy CNN engine with hand-written backward passes.

Each layer caches what it needs during a train-mode forward and
accumulates parameter gradients in ``layer.grads`` on backward.
"""

from __future__ import annotations

import struct
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeMismatch(ValueError):
    pass


class NonFiniteValue(FloatingPointError):
    pass


class NoCachedForward(RuntimeError):
    pass


class LabelOutOfRange(ValueError):
    pass


class UnsupportedChannels(ValueError):
    pass


class Layer:
    """Base layer. Subclasses fill ``params``, ``grads`` and ``buffers``."""

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.buffers = {}
        self._cache = None

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def _cached(self):
        if self._cache is None:
            raise NoCachedForward(f"{type(self).__name__}.backward called without a train-mode forward")
        return self._cache

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0.0

    def init(self, rng, dtype):
        pass

    def state(self, prefix=""):
        """Yield ``(name, array)`` for parameters then buffers."""
        for k, v in self.params.items():
            yield prefix + k, v
        for k, v in self.buffers.items():
            yield prefix + k, v

    def __call__(self, x, train=False):
        return self.forward(x, train)


def _param(shape, dtype):
    return np.zeros(shape, dtype=dtype), np.zeros(shape, dtype=dtype)


class Conv2d(Layer):
    """Cross-correlation with zero padding."""

    def __init__(self, in_ch, out_ch, k, stride=1, pad=0, bias=True, dtype=np.float32):
        super().__init__()
        self.in_ch, self.out_ch, self.k, self.stride, self.pad = in_ch, out_ch, k, stride, pad
        self.params["weight"], self.grads["weight"] = _param((out_ch, in_ch, k, k), dtype)
        if bias:
            self.params["bias"], self.grads["bias"] = _param((out_ch,), dtype)

    def init(self, rng, dtype):
        fan_in = self.in_ch * self.k * self.k
        w = rng.standard_normal(self.params["weight"].shape) * np.sqrt(2.0 / fan_in)
        self.params["weight"][...] = w.astype(dtype)
        if "bias" in self.params:
            self.params["bias"][...] = 0.0

    def out_shape(self, h, w):
        ho = (h + 2 * self.pad - self.k) // self.stride + 1
        wo = (w + 2 * self.pad - self.k) // self.stride + 1
        return ho, wo

    def forward(self, x, train=False):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeMismatch(f"Conv2d expects (N, {self.in_ch}, H, W), got {x.shape}")
        n, c, h, w = x.shape
        ho, wo = self.out_shape(h, w)
        if ho < 1 or wo < 1:
            raise ShapeMismatch(f"input {h}x{w} too small for kernel {self.k}")
        s, k = self.stride, self.k
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad), (self.pad, self.pad)))
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :ho, :wo]
        # (N, Ho, Wo, C, k, k) -> rows of length C*k*k
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
        wmat = self.params["weight"].reshape(self.out_ch, -1)
        out = cols @ wmat.T
        if "bias" in self.params:
            out += self.params["bias"]
        self._cache = (cols, x.shape, (ho, wo)) if train else None
        return out.reshape(n, ho, wo, self.out_ch).transpose(0, 3, 1, 2)

    def backward(self, grad):
        cols, (n, c, h, w), (ho, wo) = self._cached()
        s, k, p = self.stride, self.k, self.pad
        g = grad.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
        self.grads["weight"] += (g.T @ cols).reshape(self.params["weight"].shape)
        if "bias" in self.params:
            self.grads["bias"] += g.sum(axis=0)
        dcols = (g @ self.params["weight"].reshape(self.out_ch, -1)).reshape(n, ho, wo, c, k, k)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=dcols.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, p : p + h, p : p + w]


class BatchNorm2d(Layer):
    def __init__(self, ch, momentum=0.1, eps=1e-5, dtype=np.float32):
        super().__init__()
        self.ch, self.momentum, self.eps = ch, momentum, eps
        self.params["gamma"], self.grads["gamma"] = _param((ch,), dtype)
        self.params["beta"], self.grads["beta"] = _param((ch,), dtype)
        self.params["gamma"][...] = 1.0
        self.buffers["running_mean"] = np.zeros(ch, dtype=dtype)
        self.buffers["running_var"] = np.ones(ch, dtype=dtype)

    def init(self, rng, dtype):
        self.params["gamma"][...] = 1.0
        self.params["beta"][...] = 0.0
        self.buffers["running_mean"][...] = 0.0
        self.buffers["running_var"][...] = 1.0

    def forward(self, x, train=False):
        if x.ndim != 4 or x.shape[1] != self.ch:
            raise ShapeMismatch(f"BatchNorm2d expects (N, {self.ch}, H, W), got {x.shape}")
        gamma = self.params["gamma"][None, :, None, None]
        beta = self.params["beta"][None, :, None, None]
        if not train:
            self._cache = None
            rm = self.buffers["running_mean"][None, :, None, None]
            rv = self.buffers["running_var"][None, :, None, None]
            return gamma * (x - rm) / np.sqrt(rv + self.eps) + beta
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        m = x.shape[0] * x.shape[2] * x.shape[3]
        unbiased = var * m / max(m - 1, 1)
        self.buffers["running_mean"][...] = (1 - self.momentum) * self.buffers["running_mean"] + self.momentum * mean
        self.buffers["running_var"][...] = (1 - self.momentum) * self.buffers["running_var"] + self.momentum * unbiased
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        self._cache = (xhat, inv_std)
        return gamma * xhat + beta

    def backward(self, grad):
        xhat, inv_std = self._cached()
        self.grads["gamma"] += (grad * xhat).sum(axis=(0, 2, 3))
        self.grads["beta"] += grad.sum(axis=(0, 2, 3))
        dxhat = grad * self.params["gamma"][None, :, None, None]
        mean_d = dxhat.mean(axis=(0, 2, 3), keepdims=True)
        mean_dx = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
        return (dxhat - mean_d - xhat * mean_dx) * inv_std[None, :, None, None]


class ReLU(Layer):
    def forward(self, x, train=False):
        mask = x > 0
        self._cache = mask if train else None
        return x * mask

    def backward(self, grad):
        return grad * self._cached()


class MaxPool2d(Layer):
    """2x2 max pooling, stride 2; odd trailing rows/columns are dropped."""

    def forward(self, x, train=False):
        n, c, h, w = x.shape
        ho, wo = h // 2, w // 2
        if ho < 1 or wo < 1:
            raise ShapeMismatch(f"MaxPool2d needs at least 2x2 input, got {h}x{w}")
        patches = x[:, :, : 2 * ho, : 2 * wo].reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5)
        patches = patches.reshape(n, c, ho, wo, 4)
        idx = patches.argmax(axis=-1)
        self._cache = (idx, x.shape) if train else None
        return np.take_along_axis(patches, idx[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        idx, (n, c, h, w) = self._cached()
        ho, wo = h // 2, w // 2
        onehot = (idx[..., None] == np.arange(4)) * grad[..., None]
        dx = np.zeros((n, c, h, w), dtype=grad.dtype)
        dx[:, :, : 2 * ho, : 2 * wo] = (
            onehot.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
        )
        return dx


class GlobalAvgPool(Layer):
    def forward(self, x, train=False):
        self._cache = x.shape if train else None
        return x.mean(axis=(2, 3))

    def backward(self, grad):
        n, c, h, w = self._cached()
        return np.broadcast_to(grad[:, :, None, None] / (h * w), (n, c, h, w)).copy()


class Flatten(Layer):
    def forward(self, x, train=False):
        self._cache = x.shape if train else None
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._cached())


class Linear(Layer):
    def __init__(self, in_features, out_features, dtype=np.float32):
        super().__init__()
        self.in_features, self.out_features = in_features, out_features
        self.params["weight"], self.grads["weight"] = _param((out_features, in_features), dtype)
        self.params["bias"], self.grads["bias"] = _param((out_features,), dtype)

    def init(self, rng, dtype):
        w = rng.standard_normal(self.params["weight"].shape) * np.sqrt(2.0 / self.in_features)
        self.params["weight"][...] = w.astype(dtype)
        self.params["bias"][...] = 0.0

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeMismatch(f"Linear expects (N, {self.in_features}), got {x.shape}")
        self._cache = x if train else None
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad):
        x = self._cached()
        self.grads["weight"] += grad.T @ x
        self.grads["bias"] += grad.sum(axis=0)
        return grad @ self.params["weight"]


class ResidualBlock(Layer):
    """conv3x3-BN-ReLU-conv3x3-BN plus a skip path, then ReLU.

    The skip path is a 1x1 conv + BN when stride or channel count changes.
    """

    def __init__(self, in_ch, out_ch, stride=1, dtype=np.float32):
        super().__init__()
        self.main = [
            Conv2d(in_ch, out_ch, 3, stride, 1, bias=False, dtype=dtype),
            BatchNorm2d(out_ch, dtype=dtype),
            ReLU(),
            Conv2d(out_ch, out_ch, 3, 1, 1, bias=False, dtype=dtype),
            BatchNorm2d(out_ch, dtype=dtype),
        ]
        if stride != 1 or in_ch != out_ch:
            self.skip = [Conv2d(in_ch, out_ch, 1, stride, 0, bias=False, dtype=dtype), BatchNorm2d(out_ch, dtype=dtype)]
        else:
            self.skip = []
        self.out_relu = ReLU()
        for name, layer in self._named():
            for k in layer.params:
                self.params[f"{name}.{k}"] = layer.params[k]
                self.grads[f"{name}.{k}"] = layer.grads[k]
            for k in layer.buffers:
                self.buffers[f"{name}.{k}"] = layer.buffers[k]

    def _named(self):
        for i, layer in enumerate(self.main):
            yield f"main{i}", layer
        for i, layer in enumerate(self.skip):
            yield f"skip{i}", layer

    def init(self, rng, dtype):
        for _, layer in self._named():
            layer.init(rng, dtype)

    def forward(self, x, train=False):
        h = x
        for layer in self.main:
            h = layer.forward(h, train)
        s = x
        for layer in self.skip:
            s = layer.forward(s, train)
        self._cache = True if train else None
        return self.out_relu.forward(h + s, train)

    def backward(self, grad):
        self._cached()
        g = self.out_relu.backward(grad)
        gm = g
        for layer in reversed(self.main):
            gm = layer.backward(gm)
        gs = g
        for layer in reversed(self.skip):
            gs = layer.backward(gs)
        return gm + gs


def loss_softmax_ce(logits, labels):
    """Mean cross-entropy of softmax(logits); returns ``(loss, dloss/dlogits)``."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.intp)
    n, k = logits.shape
    if labels.shape != (n,) or labels.min() < 0 or labels.max() >= k:
        raise LabelOutOfRange(f"labels must lie in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    logp = z - logsum[:, None]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


class ModelGraph:
    """Sequential model with optional feature taps after selected layers."""

    def __init__(self, layers, block_taps=(), arch="custom", in_channels=None, n_classes=None, input_size=None):
        self.layers = list(layers)
        self.block_taps = tuple(block_taps)
        self.arch = arch
        self.in_channels = in_channels
        self.n_classes = n_classes
        self.input_size = input_size

    @property
    def dtype(self):
        for layer in self.layers:
            for p in layer.params.values():
                return p.dtype
        return np.float64

    def forward(self, x, train=False, taps=None):
        """Logits for a batch; with ``taps`` also return ``{tap_index: activation}``.

        ``taps`` holds 1-based positions into ``block_taps``.
        """
        x = np.asarray(x, dtype=self.dtype)
        wanted = {}
        if taps is not None:
            for t in taps:
                if not 1 <= t <= len(self.block_taps):
                    raise IndexError(f"tap {t} outside 1..{len(self.block_taps)}")
                wanted[self.block_taps[t - 1]] = t
        captured = {}
        for i, layer in enumerate(self.layers):
            x = layer.forward(x, train)
            if not np.isfinite(x).all():
                raise NonFiniteValue(f"non-finite activation after layer {i} ({type(layer).__name__})")
            if i in wanted:
                captured[wanted[i]] = x
        return (x, captured) if taps is not None else x

    def features(self, x, tap):
        """Eval-mode activation after block ``tap`` without running later layers."""
        if not 1 <= tap <= len(self.block_taps):
            raise IndexError(f"tap {tap} outside 1..{len(self.block_taps)}")
        x = np.asarray(x, dtype=self.dtype)
        for layer in self.layers[: self.block_taps[tap - 1] + 1]:
            x = layer.forward(x, False)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def parameters(self):
        """``[(name, param, grad), ...]`` in a stable order."""
        out = []
        for i, layer in enumerate(self.layers):
            for k, p in layer.params.items():
                out.append((f"{i}.{k}", p, layer.grads[k]))
        return out

    def state(self):
        out = []
        for i, layer in enumerate(self.layers):
            out.extend(layer.state(f"{i}."))
        return out

    def predict(self, x, batch_size=256):
        out = [self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out).argmax(axis=1)


ARCHITECTURES = ("MiniCNN", "MiniResNet8")
RESNET_CHANNELS = (16, 16, 32, 32, 64, 64, 128, 128)
RESNET_STRIDE2 = (3, 5, 7)
SUPPORTED_IN_CHANNELS = (1, 8, 16)


def _mini_cnn(in_ch, n_classes, input_size, dtype):
    side = input_size // 2 // 2 // 2
    if side < 1:
        raise ShapeMismatch(f"MiniCNN needs inputs of at least 8 pixels, got {input_size}")
    layers = [
        Conv2d(in_ch, 16, 3, 1, 1, dtype=dtype), ReLU(), MaxPool2d(),
        Conv2d(16, 32, 3, 1, 1, dtype=dtype), ReLU(), MaxPool2d(),
        Conv2d(32, 64, 3, 1, 1, dtype=dtype), ReLU(), MaxPool2d(),
        Flatten(),
        Linear(64 * side * side, 128, dtype=dtype), ReLU(),
        Linear(128, n_classes, dtype=dtype),
    ]
    return layers, ()


def _mini_resnet8(in_ch, n_classes, dtype):
    layers = [Conv2d(in_ch, 16, 3, 1, 1, bias=False, dtype=dtype), BatchNorm2d(16, dtype=dtype), ReLU()]
    taps = []
    prev = 16
    for b, ch in enumerate(RESNET_CHANNELS, start=1):
        layers.append(ResidualBlock(prev, ch, 2 if b in RESNET_STRIDE2 else 1, dtype=dtype))
        taps.append(len(layers) - 1)
        prev = ch
    layers += [GlobalAvgPool(), Linear(prev, n_classes, dtype=dtype)]
    return layers, taps


def build_model(arch, in_channels, n_classes, seed, input_size=32, dtype=np.float32):
    """Seeded MiniCNN or MiniResNet8 with Kaiming fan-in normal init."""
    if in_channels not in SUPPORTED_IN_CHANNELS:
        raise UnsupportedChannels(f"in_channels must be one of {SUPPORTED_IN_CHANNELS}, got {in_channels}")
    if arch == "MiniCNN":
        layers, taps = _mini_cnn(in_channels, n_classes, input_size, dtype)
    elif arch == "MiniResNet8":
        layers, taps = _mini_resnet8(in_channels, n_classes, dtype)
    else:
        raise ValueError(f"unknown architecture {arch!r}")
    rng = np.random.default_rng(seed)
    for layer in layers:
        layer.init(rng, dtype)
    return ModelGraph(layers, taps, arch, in_channels, n_classes, input_size)


# ---------------------------------------------------------------------------
# checkpoints
#
# "GBNN" | u32 version | u32 len + arch utf-8 | u32 in_channels | u32 n_classes
# | u32 input_size | u32 n_entries | entries...
# entry: u32 len + name utf-8 | u32 rank | u32 dims[rank] | f32 LE payload

CHECKPOINT_MAGIC = b"GBNN"
CHECKPOINT_VERSION = 1


def save_checkpoint(model: ModelGraph, path) -> None:
    state = model.state()
    arch = model.arch.encode("utf-8")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<II", CHECKPOINT_VERSION, len(arch)),
        arch,
        struct.pack("<IIII", model.in_channels, model.n_classes, model.input_size, len(state)),
    ]
    for name, arr in state:
        b = name.encode("utf-8")
        parts.append(struct.pack("<I", len(b)) + b)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path, dtype=np.float32) -> ModelGraph:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a GBNN checkpoint")
    pos = 4
    version, alen = struct.unpack_from("<II", buf, pos)
    pos += 8
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    arch = buf[pos : pos + alen].decode("utf-8")
    pos += alen
    in_ch, n_classes, input_size, n_entries = struct.unpack_from("<IIII", buf, pos)
    pos += 16
    model = build_model(arch, in_ch, n_classes, seed=0, input_size=input_size, dtype=dtype)
    targets = dict(model.state())
    for _ in range(n_entries):
        (nlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = buf[pos : pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).reshape(shape)
        pos += 4 * count
        if name not in targets or targets[name].shape != arr.shape:
            raise ShapeMismatch(f"checkpoint entry {name} {shape} does not fit {arch}")
        targets[name][...] = arr
    return model
