"""Synthetic shape classification used as a learning smoke test.

Each sample is a 32x32 image of one filled shape (disc, rectangle or cross)
near the centre, bright on a dark background, with additive Gaussian noise. The
generator is a pure function of (seed, index) and the label is
``index % num_classes``, so every run of ``num_classes`` consecutive indices
is class balanced.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .config import variant_config
from .model import LWPLGViT, fan_in_init
from .tensor import Tensor, no_grad

SIZE = 32
SHAPES = ("disc", "rectangle", "cross")


class DivergenceError(RuntimeError):
    pass


@dataclass
class ToySample:
    image: np.ndarray  # (1, 3, 32, 32) float32 in roughly [-1, 1]
    label: int


def _mask(kind: str, rng: np.random.Generator, jitter: float = 3.0) -> np.ndarray:
    yy, xx = np.mgrid[0:SIZE, 0:SIZE].astype(np.float64)
    r = rng.uniform(7.0, 11.0)
    cy, cx = SIZE / 2 + rng.uniform(-jitter, jitter, size=2)
    if kind == "disc":
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    if kind == "rectangle":
        ry = r * rng.uniform(0.6, 1.0)
        return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= r)
    t = max(1.5, r / 4)
    return ((np.abs(yy - cy) <= t) & (np.abs(xx - cx) <= r)) | ((np.abs(xx - cx) <= t) & (np.abs(yy - cy) <= r))


def make_sample(seed: int, index: int, num_classes: int = 3) -> ToySample:
    if not 1 <= num_classes <= len(SHAPES):
        raise ValueError(f"num_classes must be in 1..{len(SHAPES)}, got {num_classes}")
    rng = np.random.default_rng([seed, index])
    label = index % num_classes
    mask = _mask(SHAPES[label], rng)
    img = np.where(mask, 1.0, -1.0)[None].repeat(3, axis=0)
    img = img + 0.1 * rng.standard_normal(img.shape)
    return ToySample(img[None].astype(np.float32), label)


def make_dataset(seed: int, n: int, num_classes: int = 3) -> tuple[np.ndarray, np.ndarray]:
    samples = [make_sample(seed, i, num_classes) for i in range(n)]
    return np.concatenate([s.image for s in samples]), np.array([s.label for s in samples])


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    accuracy: float = 0.0
    steps: int = 0

    @property
    def trailing_non_increasing(self) -> bool:
        """Mean loss over the last window is no higher than over the one before."""
        k = max(1, min(50, len(self.losses) // 4))
        if len(self.losses) < 2 * k:
            return True
        return float(np.mean(self.losses[-k:])) <= float(np.mean(self.losses[-2 * k : -k]))


def accuracy(net: LWPLGViT, images: np.ndarray, labels: np.ndarray, batch: int = 64) -> float:
    hits = 0
    with no_grad():
        for i in range(0, len(images), batch):
            logits = net(Tensor(images[i : i + batch])).data
            hits += int((logits.argmax(axis=1) == labels[i : i + batch]).sum())
    return hits / len(images)


def train_toy(num_classes: int = 3, steps: int = 500, lr: float = 3e-3, seed: int = 0, batch: int = 16,
              n_train: int = 48, init: str = "trunc_normal", log=None) -> tuple[LWPLGViT, TrainResult]:
    """Plain SGD on the toy set with the micro configuration.

    Raises :class:`DivergenceError` when a step's loss exceeds ten times the
    first one. Fully deterministic given ``seed``. ``init="fan_in"`` swaps
    the default truncated-normal(0.02) weights for N(0, 1/fan_in) draws.
    """
    if init not in ("trunc_normal", "fan_in"):
        raise ValueError(f"unknown init {init!r}")
    images, labels = make_dataset(seed, n_train, num_classes)
    net = LWPLGViT(variant_config("micro", num_classes=num_classes), seed=seed)
    if init == "fan_in":
        fan_in_init(net, seed)
    params = net.parameters()
    order_rng = np.random.default_rng([seed, 1])
    res = TrainResult()
    order = np.empty(0, dtype=np.int64)
    for step in range(steps):
        if len(order) < batch:
            order = np.concatenate([order, order_rng.permutation(n_train)])
        idx, order = order[:batch], order[batch:]
        net.zero_grad()
        loss = ops.cross_entropy(net(Tensor(images[idx])), labels[idx])
        loss.backward()
        for p in params:
            p.data -= np.asarray(lr, dtype=p.dtype) * p.grad
        val = loss.item()
        res.losses.append(val)
        res.steps = step + 1
        if not np.isfinite(val) or val > 10 * res.losses[0]:
            raise DivergenceError(f"loss {val:.4g} at step {step} exceeds 10x initial {res.losses[0]:.4g}")
        if log is not None and (step % 50 == 0 or step == steps - 1):
            log(f"step {step:4d}  loss {val:.4f}")
    res.accuracy = accuracy(net, images, labels)
    return net, res
