"""Parameter-holding layers and the module tree they live in."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import ops
from .tensor import Tensor


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02, dtype=np.float32) -> np.ndarray:
    """Normal(0, std) samples redrawn until they fall inside +-2 std."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return (out * std).astype(dtype)


class Module:
    """Tree node that registers Tensor parameters and child modules on assignment."""

    def __init__(self) -> None:
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def add_module(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{name}/")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix.rstrip("/"), self
        for name, child in self._children.items():
            yield from child.named_modules(f"{prefix}{name}/")

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        object.__setattr__(self, "_items", [])
        for m in modules:
            self.append(m)

    def append(self, module: Module) -> None:
        self.add_module(str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i: int) -> Module:
        return self._items[i]


def _param(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, stride: int = 1, padding: int | None = None,
                 groups: int = 1, bias: bool = True, *, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        if c_in % groups or c_out % groups:
            raise ValueError(f"Conv2d: channels {c_in}->{c_out} not divisible by groups={groups}")
        self.c_in, self.c_out, self.k = c_in, c_out, k
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        self.groups = groups
        self.weight = _param(trunc_normal(rng, (c_out, c_in // groups, k, k), dtype=dtype))
        self.bias = _param(np.zeros(c_out, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)

    def out_size(self, h: int, w: int) -> tuple[int, int]:
        p, k, s = self.padding, self.k, self.stride
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, bias: bool = True, *, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.d_in, self.d_out = d_in, d_out
        self.weight = _param(trunc_normal(rng, (d_out, d_in), dtype=dtype))
        self.bias = _param(np.zeros(d_out, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class LayerNorm2d(Module):
    """Layer norm across channels at each spatial site."""

    def __init__(self, c: int, eps: float = 1e-5, *, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.weight = _param(np.ones(c, dtype=dtype))
        self.bias = _param(np.zeros(c, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.weight, self.bias, self.eps)


class GRN(Module):
    def __init__(self, c: int, eps: float = 1e-6, *, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.gamma = _param(np.zeros(c, dtype=dtype))
        self.beta = _param(np.zeros(c, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return ops.grn(x, self.gamma, self.beta, self.eps)
