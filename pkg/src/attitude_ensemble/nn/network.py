"""Network specs, the layered classifier, loss and prediction."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..attitude import N_CLASSES
from ..errors import InvalidConfigError, InvalidLabelError, ShapeError
from . import layers as L

LOG_CLAMP = 1e-12

# kind -> (argument names, defaults)
_LAYER_ARGS = {
    "conv": (("out_ch", "k", "stride", "pad"), (None, None, 1, 0)),
    "relu": ((), ()),
    "maxpool": (("k", "stride"), (2, None)),
    "batchnorm": (("momentum", "epsilon"), (0.9, 1e-5)),
    "dropout": (("rate",), (0.5,)),
    "flatten": ((), ()),
    "dense": (("out_dim",), (None,)),
    "softmax": (("n_classes",), (N_CLASSES,)),
}
_INT_ARGS = {"out_ch", "k", "stride", "pad", "out_dim", "n_classes"}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    args: tuple = ()

    def __post_init__(self):
        if self.kind not in _LAYER_ARGS:
            raise InvalidConfigError(f"unknown layer kind {self.kind!r}")
        names, defaults = _LAYER_ARGS[self.kind]
        if len(self.args) > len(names):
            raise InvalidConfigError(f"{self.kind} takes at most {len(names)} arguments, got {self.args}")
        full = list(self.args) + list(defaults[len(self.args) :])
        for name, value in zip(names, full):
            if value is None and not (self.kind == "maxpool" and name == "stride"):
                raise InvalidConfigError(f"{self.kind} needs argument {name}")
        object.__setattr__(self, "args", tuple(full))

    def arg(self, name):
        return self.args[_LAYER_ARGS[self.kind][0].index(name)]

    def to_text(self) -> str:
        if not self.args:
            return self.kind
        return f"{self.kind}({','.join(_fmt_arg(a) for a in self.args)})"

    def to_dict(self) -> dict:
        return {"type": self.kind, **dict(zip(_LAYER_ARGS[self.kind][0], self.args))}


def _fmt_arg(a):
    if a is None:
        return "none"
    return repr(a) if isinstance(a, float) else str(a)


def _parse_arg(name, text):
    text = text.strip()
    if text == "none":
        return None
    if name in _INT_ARGS:
        return int(text)
    return float(text)


_TOKEN = re.compile(r"^([a-z]+)(?:\(([^)]*)\))?$")


@dataclass(frozen=True)
class NetworkSpec:
    """Input shape (C, H, W) and an ordered layer list ending in ``softmax(9)``."""

    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        self.shapes()

    def shapes(self) -> list[tuple]:
        """Statically chain shapes through the layers; raises on any mismatch."""
        if not self.layers or self.layers[-1].kind != "softmax":
            raise ShapeError("network must end with a softmax head")
        if self.layers[-1].arg("n_classes") != N_CLASSES:
            raise ShapeError(f"softmax head must have {N_CLASSES} classes")
        if any(ls.kind == "softmax" for ls in self.layers[:-1]):
            raise ShapeError("softmax is only allowed as the final layer")
        shape = self.input_shape
        out = [shape]
        for i, ls in enumerate(self.layers[:-1]):
            layer = _build_layer(ls, shape, i)
            shape = layer.output_shape(shape)
            out.append(shape)
        if shape != (N_CLASSES,):
            raise ShapeError(f"final layer before softmax outputs {shape}, expected ({N_CLASSES},)")
        return out

    def to_text(self) -> str:
        c, h, w = self.input_shape
        return " ".join([f"input({c},{h},{w})"] + [ls.to_text() for ls in self.layers])

    @classmethod
    def from_text(cls, text: str) -> NetworkSpec:
        tokens = text.replace("-", " ").split() if "(" not in text else _split_tokens(text)
        if not tokens:
            raise InvalidConfigError("empty network spec")
        input_shape = None
        layers = []
        for tok in tokens:
            m = _TOKEN.match(tok)
            if not m:
                raise InvalidConfigError(f"cannot parse layer token {tok!r}")
            kind, argtext = m.group(1), m.group(2)
            raw = [a for a in argtext.split(",")] if argtext else []
            if kind == "input":
                input_shape = tuple(int(a) for a in raw)
                continue
            if kind not in _LAYER_ARGS:
                raise InvalidConfigError(f"unknown layer kind {kind!r}")
            names = _LAYER_ARGS[kind][0]
            layers.append(LayerSpec(kind, tuple(_parse_arg(n, a) for n, a in zip(names, raw))))
        if input_shape is None or len(input_shape) != 3:
            raise InvalidConfigError("network spec needs input(C,H,W)")
        return cls(input_shape, tuple(layers))

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": [ls.to_dict() for ls in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> NetworkSpec:
        layers = []
        for entry in d["layers"]:
            entry = dict(entry)
            kind = entry.pop("type")
            names = _LAYER_ARGS.get(kind, ((), ()))[0]
            layers.append(LayerSpec(kind, tuple(entry.get(n) for n in names)))
        return cls(tuple(d["input_shape"]), tuple(layers))


def _split_tokens(text):
    # Tokens are separated by whitespace or '-' outside parentheses.
    out, cur, depth = [], "", 0
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if depth == 0 and (ch.isspace() or ch == "-"):
            if cur:
                out.append(cur)
            cur = ""
        elif not ch.isspace():
            cur += ch
    if cur:
        out.append(cur)
    return out


def _build_layer(ls: LayerSpec, in_shape, index):
    k = ls.kind
    if k == "conv":
        if len(in_shape) != 3:
            raise ShapeError(f"layer {index} ({ls.to_text()}): conv needs (C,H,W) input, got {in_shape}")
        layer = L.Conv2D(in_shape[0], ls.arg("out_ch"), ls.arg("k"), ls.arg("stride"), ls.arg("pad"))
    elif k == "relu":
        layer = L.ReLU()
    elif k == "maxpool":
        if len(in_shape) != 3:
            raise ShapeError(f"layer {index} ({ls.to_text()}): maxpool needs (C,H,W) input, got {in_shape}")
        layer = L.MaxPool2D(ls.arg("k"), ls.arg("stride"))
    elif k == "batchnorm":
        layer = L.BatchNorm(in_shape[0], ls.arg("momentum"), ls.arg("epsilon"))
    elif k == "dropout":
        layer = L.Dropout(ls.arg("rate"))
    elif k == "flatten":
        layer = L.Flatten()
    elif k == "dense":
        if len(in_shape) != 1:
            raise ShapeError(f"layer {index} ({ls.to_text()}): dense needs flat input, got {in_shape}; add flatten")
        layer = L.Dense(in_shape[0], ls.arg("out_dim"))
    else:
        raise InvalidConfigError(f"cannot build layer {k!r}")
    layer.name = f"layer{index}:{ls.to_text()}"
    return layer


ARCHITECTURES = {
    "tiny-cnn-a": "input(3,{h},{w}) conv(8,3,1,1) batchnorm relu maxpool(2,2) "
    "conv(16,3,1,1) batchnorm relu maxpool(2,2) flatten dropout(0.25) dense(64) relu dense(9) softmax(9)",
    "tiny-cnn-b": "input(3,{h},{w}) conv(12,5,1,2) batchnorm relu maxpool(2,2) "
    "conv(16,3,1,1) batchnorm relu maxpool(2,2) conv(24,3,1,1) batchnorm relu maxpool(2,2) "
    "flatten dropout(0.3) dense(48) relu dense(9) softmax(9)",
}


def architecture(tag: str, height: int = 64, width: int = 64) -> NetworkSpec:
    """Named architecture at a given input size; unknown tags are parsed as spec text."""
    template = ARCHITECTURES.get(tag)
    if template is None:
        if "(" in tag:
            return NetworkSpec.from_text(tag)
        raise InvalidConfigError(f"unknown architecture {tag!r}; known: {', '.join(sorted(ARCHITECTURES))}")
    return NetworkSpec.from_text(template.format(h=height, w=width))


class Network:
    """A stack of layers with a softmax head."""

    def __init__(self, spec: NetworkSpec, seed: int = 0, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.seed = seed
        shape = spec.input_shape
        self.layers: list[L.Layer] = []
        for i, ls in enumerate(spec.layers[:-1]):
            layer = _build_layer(ls, shape, i)
            shape = layer.output_shape(shape)
            self.layers.append(layer)
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            layer.init_params(rng, self.dtype)
        if self.layers:
            self.layers[0].needs_input_grad = False
        self.meta: dict = {}

    # parameter views, in layer order
    def named_params(self):
        for i, layer in enumerate(self.layers):
            for key, value in layer.params.items():
                yield f"{i}.{layer.kind}.{key}", layer, key, value

    def named_buffers(self):
        for i, layer in enumerate(self.layers):
            for key, value in layer.buffers.items():
                yield f"{i}.{layer.kind}.{key}", layer, key, value

    @property
    def params(self) -> list[np.ndarray]:
        return [v for _, _, _, v in self.named_params()]

    def grads(self) -> list[np.ndarray]:
        return [layer.grads[key] for _, layer, key, _ in self.named_params()]

    def set_params(self, values) -> None:
        for (_, layer, key, old), new in zip(self.named_params(), values):
            layer.params[key] = np.asarray(new, dtype=old.dtype).reshape(old.shape)

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def _check_input(self, x):
        x = np.asarray(x)
        if x.ndim != 4 or tuple(x.shape[1:]) != self.spec.input_shape:
            raise ShapeError(f"input: expected (N, {', '.join(map(str, self.spec.input_shape))}), got {x.shape}")
        return x.astype(self.dtype, copy=False)

    def logits(self, x, train=False, rng=None):
        h = self._check_input(x)
        for layer in self.layers:
            h = layer.forward(h, train=train, rng=rng)
        return h

    def forward(self, x, mode="eval", rng=None):
        """Class probabilities, shape (N, 9)."""
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        return L.softmax(self.logits(x, train=(mode == "train"), rng=rng))

    def backward(self, dlogits):
        g = dlogits
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g


def _check_labels(labels, n):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"labels: expected shape ({n},), got {labels.shape}")
    if labels.size and (not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= N_CLASSES):
        raise InvalidLabelError(f"labels must be integers in 0..{N_CLASSES - 1}")
    return labels.astype(np.int64)


def cross_entropy(probs, labels) -> float:
    labels = _check_labels(labels, probs.shape[0])
    p_true = probs[np.arange(labels.size), labels]
    return float(-np.mean(np.log(np.maximum(p_true, LOG_CLAMP))))


def loss_and_grads(net: Network, batch, labels, rng=None):
    """Mean categorical cross-entropy in train mode and gradients for ``net.params``.

    Also updates batch-norm running statistics as a side effect of the train-mode pass.
    """
    loss, grads, _ = train_pass(net, batch, labels, rng)
    return loss, grads


def train_pass(net: Network, batch, labels, rng=None):
    """Like :func:`loss_and_grads` but also returns the train-mode probabilities."""
    batch = np.asarray(batch)
    labels = _check_labels(labels, batch.shape[0])
    if rng is None:
        rng = np.random.default_rng(0)
    probs = L.softmax(net.logits(batch, train=True, rng=rng))
    n = labels.size
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(n), labels], LOG_CLAMP))))
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1
    dlogits /= n
    net.backward(dlogits.astype(net.dtype, copy=False))
    return loss, net.grads(), probs


def predict(net: Network, batch, chunk: int = 256):
    """Argmax class (lowest index on ties) and its probability, in eval mode."""
    batch = np.asarray(batch)
    classes, conf = [], []
    for start in range(0, max(batch.shape[0], 1), chunk):
        part = batch[start : start + chunk]
        if part.shape[0] == 0:
            break
        probs = net.forward(part, mode="eval")
        c = probs.argmax(axis=1)
        classes.append(c)
        conf.append(probs[np.arange(c.size), c])
    if not classes:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=net.dtype)
    return np.concatenate(classes).astype(np.int64), np.concatenate(conf)


def images_to_tensor(images, dtype=np.float32) -> np.ndarray:
    """(N, H, W, 3) uint8 -> (N, 3, H, W) in [0, 1]."""
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[None]
    return np.ascontiguousarray(images.transpose(0, 3, 1, 2)).astype(dtype) / 255.0
