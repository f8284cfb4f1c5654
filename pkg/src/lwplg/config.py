"""Model configurations and their JSON form."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AttnSpec:
    window: int
    heads: int

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError(f"attention window must be >= 1, got {self.window}")
        if self.heads < 1:
            raise ConfigError(f"attention heads must be >= 1, got {self.heads}")


@dataclass(frozen=True)
class StageConfig:
    channels: int
    repeats: int
    lsa: AttnSpec
    gsa: AttnSpec | None
    downsample_in: bool

    @property
    def split_ratio(self) -> Fraction:
        return split_ratio(self.lsa, self.gsa)

    @property
    def local_channels(self) -> int:
        return branch_channels(self.channels, self.lsa, self.gsa)[0]

    @property
    def global_channels(self) -> int:
        return branch_channels(self.channels, self.lsa, self.gsa)[1]

    @property
    def head_dim(self) -> int:
        return self.local_channels // self.lsa.heads


@dataclass(frozen=True)
class ModelConfig:
    name: str
    stem_channels: int
    stages: tuple[StageConfig, ...]
    expansion_channels: int
    num_classes: int = 1000
    img_channels: int = 3
    # ablation switches: "plus" / "baseline" FFN and "lw" / "baseline" downsampling
    ffn: str = "plus"
    ffn_alpha: int = 3
    embed: str = "lw"

    def __post_init__(self):
        validate(self)

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


def split_ratio(lsa: AttnSpec, gsa: AttnSpec | None) -> Fraction:
    """Fraction of channels routed to the local branch: local heads over all heads."""
    if gsa is None:
        return Fraction(1)
    return Fraction(lsa.heads, lsa.heads + gsa.heads)


def branch_channels(c: int, lsa: AttnSpec, gsa: AttnSpec | None, r: Fraction | None = None) -> tuple[int, int]:
    r = split_ratio(lsa, gsa) if r is None else Fraction(r)
    if gsa is None and r != 1:
        raise ConfigError(f"global branch absent but split ratio is {r}")
    c_l = c * r
    if c_l.denominator != 1:
        raise ConfigError(f"split ratio {r} gives non-integer local channels for C={c}")
    c_l = int(c_l)
    c_g = c - c_l
    if c_l % lsa.heads:
        raise ConfigError(f"local channels {c_l} not divisible by {lsa.heads} heads")
    if gsa is not None and c_g % gsa.heads:
        raise ConfigError(f"global channels {c_g} not divisible by {gsa.heads} heads")
    return c_l, c_g


def validate(cfg: ModelConfig) -> None:
    if len(cfg.stages) != 4:
        raise ConfigError(f"expected 4 stages, got {len(cfg.stages)}")
    if cfg.stem_channels < 2 or cfg.stem_channels % 2:
        raise ConfigError(f"stem channels must be even, got {cfg.stem_channels}")
    if cfg.stages[0].downsample_in:
        raise ConfigError("stage 1 has no downsampling; the stem covers it")
    if cfg.stages[0].channels != cfg.stem_channels:
        raise ConfigError(f"stage 1 width {cfg.stages[0].channels} != stem width {cfg.stem_channels}")
    for i, st in enumerate(cfg.stages):
        if st.repeats < 1:
            raise ConfigError(f"stage {i + 1}: repeats must be >= 1")
        if i and not st.downsample_in:
            raise ConfigError(f"stage {i + 1}: stages 2-4 start with a downsampling embed")
        branch_channels(st.channels, st.lsa, st.gsa)
    if cfg.num_classes < 1:
        raise ConfigError("num_classes must be >= 1")
    if cfg.ffn not in ("plus", "baseline"):
        raise ConfigError(f"unknown ffn kind {cfg.ffn!r}")
    if cfg.embed not in ("lw", "baseline"):
        raise ConfigError(f"unknown embed kind {cfg.embed!r}")
    if cfg.ffn_alpha < 1:
        raise ConfigError("ffn_alpha must be >= 1")


def _stages(rows) -> tuple[StageConfig, ...]:
    out = []
    for i, (c, n, lsa, gsa) in enumerate(rows):
        out.append(StageConfig(c, n, AttnSpec(*lsa), AttnSpec(*gsa) if gsa else None, downsample_in=i > 0))
    return tuple(out)


VARIANTS = {
    "A": dict(
        stem_channels=64,
        stages=[(64, 3, (7, 1), (7, 1)), (96, 4, (7, 1), (14, 2)), (128, 12, (7, 2), (14, 2)), (192, 4, (7, 3), (7, 3))],
        expansion_channels=576,
    ),
    "R": dict(
        stem_channels=48,
        stages=[(48, 1, (7, 1), None), (96, 1, (7, 1), (14, 1)), (240, 3, (7, 2), (14, 3)), (384, 1, (7, 4), (7, 4))],
        expansion_channels=960,
    ),
    # desk-scale model for the toy task and end-to-end gradient checks
    "micro": dict(
        stem_channels=16,
        stages=[(16, 1, (4, 1), (4, 1)), (24, 1, (4, 1), (8, 2)), (32, 1, (4, 2), (8, 2)), (48, 1, (4, 3), (4, 3))],
        expansion_channels=64,
    ),
}


def variant_config(name: str, num_classes: int = 1000, **overrides) -> ModelConfig:
    try:
        spec = VARIANTS[name]
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}") from None
    cfg = ModelConfig(
        name=name,
        stem_channels=spec["stem_channels"],
        stages=_stages(spec["stages"]),
        expansion_channels=spec["expansion_channels"],
        num_classes=num_classes,
    )
    return cfg.replace(**overrides) if overrides else cfg


# -- JSON ---------------------------------------------------------------------------

_MODEL_KEYS = {f.name for f in dataclasses.fields(ModelConfig)}
_STAGE_KEYS = {f.name for f in dataclasses.fields(StageConfig)}
_ATTN_KEYS = {f.name for f in dataclasses.fields(AttnSpec)}


def to_dict(cfg: ModelConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["stages"] = list(d["stages"])
    return d


def _check_keys(d: dict, allowed: set[str], where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _attn(d, where: str) -> AttnSpec | None:
    if d is None:
        return None
    _check_keys(d, _ATTN_KEYS, where)
    return AttnSpec(int(d["window"]), int(d["heads"]))


def from_dict(d: dict) -> ModelConfig:
    _check_keys(d, _MODEL_KEYS, "config")
    stages = []
    for i, s in enumerate(d["stages"]):
        _check_keys(s, _STAGE_KEYS, f"stages[{i}]")
        stages.append(StageConfig(
            channels=int(s["channels"]),
            repeats=int(s["repeats"]),
            lsa=_attn(s["lsa"], f"stages[{i}].lsa"),
            gsa=_attn(s.get("gsa"), f"stages[{i}].gsa"),
            downsample_in=bool(s["downsample_in"]),
        ))
    kwargs = {k: v for k, v in d.items() if k != "stages"}
    try:
        return ModelConfig(stages=tuple(stages), **kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def save_config(cfg: ModelConfig, path) -> None:
    Path(path).write_text(json.dumps(to_dict(cfg), indent=2) + "\n")


def load_config(path) -> ModelConfig:
    return from_dict(json.loads(Path(path).read_text()))
