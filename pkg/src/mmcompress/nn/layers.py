"""Dense, convolutional and transposed-convolutional layers plus containers."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .tensor import (
    DimensionError,
    Tensor,
    add,
    as_tensor,
    conv2d,
    conv_output_size,
    conv_transpose2d,
    deconv_output_size,
    matmul,
    no_grad,
    relu,
    reshape,
)

DEFAULT_DTYPE = np.float32
ACTIVATIONS = ("relu", "linear")


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _activate(y: Tensor, activation: str) -> Tensor:
    return relu(y) if activation == "relu" else y


class Module:
    """Anything holding named parameters."""

    def named_tensors(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        """Every weight tensor, trainable or frozen."""
        out = []
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                out.append((prefix + name, value))
            elif isinstance(value, Module):
                out.extend(value.named_tensors(f"{prefix}{name}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_tensors(f"{prefix}{name}.{i}."))
        return out

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        return [(k, t) for k, t in self.named_tensors(prefix) if t.requires_grad]

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_tensors()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.named_tensors():
            if state[name].shape != p.shape:
                raise DimensionError(f"load {name}", p.shape, state[name].shape)
            p.data = np.array(state[name], dtype=p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, x):
        return self.forward(as_tensor(x))


class Dense(Module):
    def __init__(self, in_dim: int, out_dim: int, activation: str = "linear",
                 rng: np.random.Generator | None = None, dtype=DEFAULT_DTYPE):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim, self.out_dim, self.activation = in_dim, out_dim, activation
        # stored (out, in); forward uses the transposed view
        self.weight = Tensor(glorot_uniform(rng, (out_dim, in_dim), in_dim, out_dim, dtype),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise DimensionError("dense", (self.in_dim,), x.shape[-1:])
        return _activate(add(matmul(x, _transpose(self.weight)), self.bias), self.activation)


def _transpose(w: Tensor) -> Tensor:
    def _backward(g):
        return (g.T,)

    return Tensor(w.data.T, parents=(w,), backward=_backward)


class Conv2d(Module):
    """Kernel-``k`` stride-``s`` convolution; ``pad=1`` halves even extents."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 4, stride: int = 2,
                 pad: int = 1, activation: str = "relu",
                 rng: np.random.Generator | None = None, dtype=DEFAULT_DTYPE):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.pad, self.activation = kernel, stride, pad, activation
        self.weight = Tensor(
            glorot_uniform(rng, (out_ch, in_ch, kernel, kernel),
                           in_ch * kernel * kernel, out_ch * kernel * kernel, dtype),
            requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch, dtype=dtype), requires_grad=True)

    def output_shape(self, h: int, w: int) -> tuple[int, int]:
        return (conv_output_size(h, self.kernel, self.stride, self.pad),
                conv_output_size(w, self.kernel, self.stride, self.pad))

    def forward(self, x: Tensor) -> Tensor:
        y = conv2d(x, self.weight, self.bias, self.stride, self.pad)
        return _activate(y, self.activation)


class Deconv2d(Module):
    """Transposed convolution, the shape inverse of :class:`Conv2d`."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 4, stride: int = 2,
                 pad: int = 1, activation: str = "relu",
                 rng: np.random.Generator | None = None, dtype=DEFAULT_DTYPE):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.pad, self.activation = kernel, stride, pad, activation
        self.weight = Tensor(
            glorot_uniform(rng, (in_ch, out_ch, kernel, kernel),
                           in_ch * kernel * kernel, out_ch * kernel * kernel, dtype),
            requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch, dtype=dtype), requires_grad=True)

    def output_shape(self, h: int, w: int) -> tuple[int, int]:
        return (deconv_output_size(h, self.kernel, self.stride, self.pad),
                deconv_output_size(w, self.kernel, self.stride, self.pad))

    def forward(self, x: Tensor) -> Tensor:
        y = conv_transpose2d(x, self.weight, self.bias, self.stride, self.pad)
        return _activate(y, self.activation)


class Reshape(Module):
    def __init__(self, *shape: int):
        self.shape = shape

    def forward(self, x: Tensor) -> Tensor:
        return reshape(x, (x.shape[0], *self.shape))


class Identity(Module):
    def forward(self, x: Tensor) -> Tensor:
        return x


class Sequential(Module):
    def __init__(self, layers: Iterable[Module]):
        self.layers = list(layers)

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def predict(self, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
        """Gradient-free forward pass in chunks."""
        x = np.asarray(x)
        with no_grad():
            chunks = [self(Tensor(x[i:i + batch_size])).data
                      for i in range(0, len(x), batch_size)]
        return np.concatenate(chunks, axis=0) if chunks else np.zeros((0,))


def mlp(in_dim: int, out_dim: int, rng: np.random.Generator, hidden: int = 200,
        depth: int = 3, dtype=DEFAULT_DTYPE) -> Sequential:
    """``depth`` dense layers; hidden ones are ReLU, the last one linear."""
    dims: Sequence[int] = [in_dim] + [hidden] * (depth - 1) + [out_dim]
    layers = [
        Dense(a, b, "relu" if i < depth - 1 else "linear", rng=rng, dtype=dtype)
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:]))
    ]
    return Sequential(layers)
