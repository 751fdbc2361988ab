"""VGG-BN classifier: conv stages, global average pooling, 256-unit dense head."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import InvalidInputError
from .layers import BatchNorm, Conv3x3, Dense, GlobalAvgPool, MaxPool2, ReLU

# convolutions per stage
STAGE_DEPTHS = {
    "vgg11": (1, 1, 2, 2, 2),
    "vgg13": (2, 2, 2, 2, 2),
    "vgg16": (2, 2, 3, 3, 3),
    "vgg19": (2, 2, 4, 4, 4),
}
PAPER_WIDTHS = (64, 128, 256, 512, 512)
DESK_WIDTHS = (8, 16, 32, 32)
HIDDEN_UNITS = 256
N_CLASSES = 7


@dataclass(frozen=True)
class VggConfig:
    variant: str = "vgg11"
    widths: tuple = DESK_WIDTHS
    input_shape: tuple = (2, 64, 64)
    hidden: int = HIDDEN_UNITS
    n_classes: int = N_CLASSES

    def __post_init__(self):
        if self.variant not in STAGE_DEPTHS:
            raise InvalidInputError(f"unknown variant {self.variant!r}")
        if not 1 <= len(self.widths) <= 5:
            raise InvalidInputError("between 1 and 5 stages supported")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        _, H, W = self.input_shape
        if H % (1 << len(self.widths)) or W % (1 << len(self.widths)):
            raise InvalidInputError("input size must be divisible by 2^stages")

    @property
    def depths(self) -> tuple:
        return STAGE_DEPTHS[self.variant][: len(self.widths)]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(d["variant"], tuple(d["widths"]), tuple(d["input_shape"]), d["hidden"], d["n_classes"])


class VggNet:
    """Batch-normalised VGG over ``[B, 2, S, S]`` inputs.

    ``forward`` returns logits; with ``return_embedding`` it also returns the
    post-ReLU activations of the 256-unit dense layer.
    """

    def __init__(self, config: VggConfig, seed=0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.layers: list[tuple[str, object]] = []
        c_in = config.input_shape[0]
        for s, (depth, width) in enumerate(zip(config.depths, config.widths), start=1):
            for d in range(1, depth + 1):
                self.layers.append((f"conv{s}_{d}", Conv3x3(c_in, width, rng, dtype)))
                self.layers.append((f"bn{s}_{d}", BatchNorm(width, dtype)))
                self.layers.append((f"relu{s}_{d}", ReLU()))
                c_in = width
            self.layers.append((f"pool{s}", MaxPool2()))
        self.layers.append(("gap", GlobalAvgPool()))
        self.layers.append(("fc1", Dense(c_in, config.hidden, rng, dtype)))
        self.layers.append(("relu_fc1", ReLU()))
        self.embed_index = len(self.layers) - 1
        self.layers.append(("fc2", Dense(config.hidden, config.n_classes, rng, dtype)))

    # parameter access -------------------------------------------------------
    def named_params(self):
        for name, layer in self.layers:
            for k, v in layer.params.items():
                yield f"{name}.{k}", layer, k, v

    def parameters(self) -> dict:
        return {n: v for n, _, _, v in self.named_params()}

    def gradients(self) -> dict:
        return {n: layer.grads[k] for n, layer, k, _ in self.named_params()}

    def state(self) -> dict:
        """Trainable parameters plus batch-norm running statistics."""
        out = {}
        for name, layer in self.layers:
            for k, v in layer.params.items():
                out[f"{name}.{k}"] = v
            for k, v in layer.buffers.items():
                out[f"{name}.{k}"] = v
        return out

    def load_state(self, state: dict):
        for name, layer in self.layers:
            for store in (layer.params, layer.buffers):
                for k in store:
                    key = f"{name}.{k}"
                    if key not in state:
                        raise InvalidInputError(f"state lacks {key}")
                    arr = np.asarray(state[key])
                    if arr.shape != store[k].shape:
                        raise InvalidInputError(f"{key}: shape {arr.shape} != {store[k].shape}")
                    store[k] = arr.astype(self.dtype).copy()
        self.zero_grad()

    def param_count(self) -> int:
        return sum(v.size for v in self.parameters().values())

    def zero_grad(self):
        for _, layer in self.layers:
            layer.zero_grad()

    # passes -----------------------------------------------------------------
    def forward(self, x, train=False, return_embedding=False):
        x = np.asarray(x)
        if x.ndim != 4 or tuple(x.shape[1:]) != self.config.input_shape:
            raise InvalidInputError(f"expected [B, {self.config.input_shape}], got {x.shape}")
        h = np.ascontiguousarray(x.transpose(0, 2, 3, 1), dtype=self.dtype)
        emb = None
        for i, (_, layer) in enumerate(self.layers):
            h = layer.forward(h, train)
            if i == self.embed_index:
                emb = h
        return (h, emb) if return_embedding else h

    def backward(self, dlogits, input_grad=False):
        """Accumulate parameter gradients.

        With ``input_grad`` the gradient w.r.t. the ``[B, 2, S, S]`` input is returned.
        """
        first = self.layers[0][1]
        first.input_grad = input_grad
        g = np.asarray(dlogits, dtype=self.dtype)
        for _, layer in reversed(self.layers):
            g = layer.backward(g)
        return g.transpose(0, 3, 1, 2) if input_grad else None

    def predict_proba(self, x, batch_size=64):
        out = []
        for i in range(0, len(x), batch_size):
            out.append(softmax(self.forward(x[i : i + batch_size])))
        return np.concatenate(out) if out else np.zeros((0, self.config.n_classes))

    def embed(self, x, batch_size=64):
        out = []
        for i in range(0, len(x), batch_size):
            out.append(self.forward(x[i : i + batch_size], return_embedding=True)[1])
        return np.concatenate(out) if out else np.zeros((0, self.config.hidden))


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def count_parameters(config: VggConfig) -> int:
    """Closed-form trainable parameter count (conv + BN + dense)."""
    total = 0
    c_in = config.input_shape[0]
    for depth, width in zip(config.depths, config.widths):
        for _ in range(depth):
            total += 9 * c_in * width + width + 2 * width
            c_in = width
    total += c_in * config.hidden + config.hidden
    total += config.hidden * config.n_classes + config.n_classes
    return total
