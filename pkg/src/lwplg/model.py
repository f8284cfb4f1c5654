"""Network assembly from a :class:`~lwplg.config.ModelConfig`."""
from __future__ import annotations

import numpy as np

from .blocks import (BaselinePatchEmbed, ChannelExpansion, ClassifierHead, ConvStem, LWPatchEmbed,
                     TransformerBlock)
from .config import ModelConfig
from .nn import Module, ModuleList
from .tensor import ShapeError, Tensor
from .weights import WeightStore, WeightsFormatError

MIN_INPUT = 32


class Stage(Module):
    def __init__(self, c_prev: int, st, cfg: ModelConfig, *, rng, dtype):
        super().__init__()
        self.downsample = None
        if st.downsample_in:
            embed = LWPatchEmbed if cfg.embed == "lw" else BaselinePatchEmbed
            self.downsample = embed(c_prev, st.channels, rng=rng, dtype=dtype)
        self.blocks = ModuleList(
            TransformerBlock(st.channels, st.lsa, st.gsa, cfg.ffn_alpha, cfg.ffn, rng=rng, dtype=dtype)
            for _ in range(st.repeats)
        )

    def forward(self, x: Tensor) -> Tensor:
        if self.downsample is not None:
            x = self.downsample(x)
        for blk in self.blocks:
            x = blk(x)
        return x


class LWPLGViT(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.stem = ConvStem(cfg.stem_channels, cfg.img_channels, rng=rng, dtype=dtype)
        self.stages = ModuleList()
        c = cfg.stem_channels
        for st in cfg.stages:
            self.stages.append(Stage(c, st, cfg, rng=rng, dtype=dtype))
            c = st.channels
        self.expand = ChannelExpansion(c, cfg.expansion_channels, rng=rng, dtype=dtype)
        self.head = ClassifierHead(cfg.expansion_channels, cfg.num_classes, rng=rng, dtype=dtype)

    def _check_input(self, x: Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != self.cfg.img_channels:
            raise ShapeError(f"expected (n, {self.cfg.img_channels}, h, w) input, got {x.shape}")
        if x.shape[2] < MIN_INPUT or x.shape[3] < MIN_INPUT:
            raise ShapeError(f"input must be at least {MIN_INPUT}x{MIN_INPUT}, got {x.shape[2]}x{x.shape[3]}")

    def features(self, x: Tensor) -> list[Tensor]:
        """Stage outputs (after each stage's blocks)."""
        self._check_input(x)
        x = self.stem(x)
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats

    def forward(self, x: Tensor) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        feats = self.features(x)
        return self.head(self.expand(feats[-1]))

    # -- weights ----------------------------------------------------------------
    def state(self) -> WeightStore:
        store = WeightStore()
        for name, p in self.named_parameters():
            store[name] = p.data.copy()
        return store

    def load_state(self, store) -> None:
        params = dict(self.named_parameters())
        missing = [k for k in params if k not in store]
        extra = [k for k in store if k not in params]
        if missing or extra:
            raise WeightsFormatError(f"weight names do not match model: missing={missing[:3]} extra={extra[:3]}")
        for name, p in params.items():
            arr = np.asarray(store[name])
            if arr.shape != p.shape:
                raise WeightsFormatError(f"{name}: shape {arr.shape} != expected {p.shape}")
            p.data = np.ascontiguousarray(arr, dtype=p.dtype)
            p.zero_grad()


def fan_in_init(net: Module, seed: int = 0) -> Module:
    """Redraw every kernel and matrix as N(0, 1/fan_in), leaving vectors alone.

    An opt-in alternative to the default truncated-normal(0.02) draw, used
    for diagnosing optimisation of small models under plain SGD.
    """
    rng = np.random.default_rng([seed, 2])
    for _, p in net.named_parameters():
        if p.ndim >= 2:
            p.data = (rng.standard_normal(p.shape) / np.sqrt(np.prod(p.shape[1:]))).astype(p.dtype)
            p.zero_grad()
    return net


def build_model(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> tuple[LWPLGViT, WeightStore]:
    net = LWPLGViT(cfg, seed, dtype)
    return net, net.state()


def forward(net: LWPLGViT, x) -> Tensor:
    return net(x)
