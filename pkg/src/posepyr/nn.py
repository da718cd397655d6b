"""Layer/module abstractions on top of the autograd engine."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Parameter, Tensor


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def add_module(self, name, module):
        self._modules[name] = module
        object.__setattr__(self, name, module)
        return module

    def register_buffer(self, name, array):
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield (prefix + name, p)
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def named_buffers(self, prefix=""):
        for name, b in self._buffers.items():
            yield (prefix + name, b)
        for name, m in self._modules.items():
            yield from m.named_buffers(prefix + name + ".")

    def modules(self):
        yield self
        for m in self._modules.values():
            yield from m.modules()

    def train(self, flag=True):
        for m in self.modules():
            object.__setattr__(m, "training", flag)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Sequential(Module):
    def __init__(self, *mods):
        super().__init__()
        self.mods = list(mods)
        for i, m in enumerate(mods):
            self._modules[str(i)] = m

    def forward(self, x):
        for m in self.mods:
            x = m(x)
        return x

    def macs(self, h, w):
        total = 0
        for m in self.mods:
            mc, (h, w) = m.macs(h, w)
            total += mc
        return total, (h, w)


class ReLU(Module):
    def forward(self, x):
        return ag.relu(x)

    def macs(self, h, w):
        return 0, (h, w)


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, bias=True,
                 rng=None, dtype=np.float32, init_std=None):
        super().__init__()
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.padding = kernel, stride, padding
        rng = rng or np.random.default_rng(0)
        if init_std is None:
            # Kaiming fan-out for conv followed by ReLU
            init_std = np.sqrt(2.0 / (out_ch * kernel * kernel))
        w = rng.normal(0.0, init_std, (out_ch, in_ch, kernel, kernel))
        self.weight = Parameter(w.astype(dtype))
        self.bias = Parameter(np.zeros(out_ch, dtype=dtype)) if bias else None

    def forward(self, x):
        return ag.conv2d(x, self.weight, self.bias, self.stride, self.padding)

    def macs(self, h, w):
        oh = (h + 2 * self.padding - self.kernel) // self.stride + 1
        ow = (w + 2 * self.padding - self.kernel) // self.stride + 1
        return self.out_ch * self.in_ch * self.kernel ** 2 * oh * ow, (oh, ow)


class ConvTranspose2d(Module):
    def __init__(self, in_ch, out_ch, kernel=4, stride=2, padding=1, bias=False,
                 rng=None, dtype=np.float32):
        super().__init__()
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.padding = kernel, stride, padding
        rng = rng or np.random.default_rng(0)
        std = np.sqrt(2.0 / (out_ch * kernel * kernel))
        w = rng.normal(0.0, std, (in_ch, out_ch, kernel, kernel))
        self.weight = Parameter(w.astype(dtype))
        self.bias = Parameter(np.zeros(out_ch, dtype=dtype)) if bias else None

    def forward(self, x):
        return ag.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)

    def macs(self, h, w):
        oh = (h - 1) * self.stride - 2 * self.padding + self.kernel
        ow = (w - 1) * self.stride - 2 * self.padding + self.kernel
        return self.in_ch * self.out_ch * self.kernel ** 2 * h * w, (oh, ow)


class BatchNorm2d(Module):
    def __init__(self, ch, momentum=0.1, eps=1e-5, dtype=np.float32):
        super().__init__()
        self.ch = ch
        self.momentum, self.eps = momentum, eps
        self.gamma = Parameter(np.ones(ch, dtype=dtype))
        self.beta = Parameter(np.zeros(ch, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(ch, dtype=dtype))
        self.register_buffer("running_var", np.ones(ch, dtype=dtype))

    def forward(self, x):
        return ag.batchnorm2d(x, self.gamma, self.beta, self.running_mean,
                              self.running_var, self.training, self.momentum, self.eps)

    def macs(self, h, w):
        return 0, (h, w)


class Upsample(Module):
    """Bilinear upsample by an integer factor."""

    def __init__(self, factor):
        super().__init__()
        self.factor = factor

    def forward(self, x):
        _, _, h, w = x.data.shape
        return ag.bilinear_upsample(x, h * self.factor, w * self.factor)

    def macs(self, h, w):
        return 0, (h * self.factor, w * self.factor)


def count_params(module):
    """Exact scalar parameter count (running stats excluded)."""
    return sum(p.data.size for p in module.parameters())
