"""Trainable layers built on ``Tensor``."""

import numpy as np

from .tensor import Tensor, conv1d, gelu


class Module:
    """Minimal container: named parameters, buffers, and a train/eval flag."""

    training = True

    def children(self):
        return [(k, v) for k, v in vars(self).items() if isinstance(v, Module)]

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + key, value
        for key, child in self.children():
            yield from child.named_parameters(f"{prefix}{key}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for key in getattr(self, "_buffers", ()):
            yield prefix + key, getattr(self, key)
        for key, child in self.children():
            yield from child.named_buffers(f"{prefix}{key}.")

    def state_dict(self):
        """Parameters and buffers as ``name -> ndarray`` (parameters first)."""
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"missing entries: {sorted(missing)}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.copy()
        for name in buffers:
            owner, _, attr = name.rpartition(".")
            module = self
            for part in filter(None, owner.split(".")):
                module = getattr(module, part)
            setattr(module, attr, np.asarray(state[name], dtype=np.float64).copy())

    def train(self, mode=True):
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _uniform(rng, bound, shape, name):
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


class Linear(Module):
    """``y = x W^T + b``, weight initialized uniform in ``+-1/sqrt(fan_in)``."""

    def __init__(self, in_features, out_features, rng):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = _uniform(rng, 1.0 / np.sqrt(in_features),
                               (out_features, in_features), "weight")
        self.bias = Tensor(np.zeros(out_features), requires_grad=True, name="bias")

    def forward(self, x):
        if x.shape[-1] != self.in_features:
            raise ValueError(f"expected {self.in_features} features, got {x.shape[-1]}")
        return x @ self.weight.T + self.bias


class Conv1d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, rng, stride=1, padding=0):
        if kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd")
        if stride not in (1, 2):
            raise ValueError("stride must be 1 or 2")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size
        self.weight = _uniform(rng, 1.0 / np.sqrt(fan_in),
                               (out_channels, in_channels, kernel_size), "weight")
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True, name="bias")

    def forward(self, x):
        return conv1d(x, self.weight, self.bias, self.stride, self.padding)

    def output_length(self, length):
        return (length + 2 * self.padding - self.kernel_size) // self.stride + 1


class BatchNorm1d(Module):
    """Per-channel normalization over (batch, length) with running statistics.

    Running stats follow ``running = (1 - momentum) * running + momentum * batch``
    with the same biased variance used for normalization, so momentum 1 makes
    eval mode reproduce the last training batch exactly.
    """

    _buffers = ("running_mean", "running_var")

    def __init__(self, channels, eps=1e-5, momentum=0.1):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(channels), requires_grad=True, name="gamma")
        self.beta = Tensor(np.zeros(channels), requires_grad=True, name="beta")
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x):
        gamma = self.gamma.reshape(1, -1, 1)
        beta = self.beta.reshape(1, -1, 1)
        if not self.training:
            mean = self.running_mean[None, :, None]
            std = np.sqrt(self.running_var + self.eps)[None, :, None]
            return (x - mean) * (1.0 / std) * gamma + beta

        count = x.shape[0] * x.shape[2]
        if count < 2:
            raise ValueError("batch norm in training mode needs >= 2 values per channel")
        mean = x.mean(axis=(0, 2), keepdims=True)
        centered = x - mean
        var = (centered * centered).mean(axis=(0, 2), keepdims=True)
        out = centered / (var + self.eps).sqrt() * gamma + beta

        m = self.momentum
        batch_var = var.data.reshape(-1)
        self.running_mean = (1 - m) * self.running_mean + m * mean.data.reshape(-1)
        self.running_var = (1 - m) * self.running_var + m * batch_var
        return out


class GELU(Module):
    def __init__(self, approximate=False):
        self.approximate = approximate

    def forward(self, x):
        return gelu(x, self.approximate)
