from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from dsvpr.errors import ConfigurationError


@dataclass(frozen=True)
class DsFormerConfig:
    """Architecture hyperparameters.

    Full-scale values are 3 layers, 16 heads, 512-d descriptors at 320 px;
    ``embed_dim`` and ``input_side`` default to desk scale.
    """

    num_layers: int = 3
    num_heads: int = 16
    embed_dim: int = 128
    ffn_ratio: int = 4
    rpe_clip: int = 7
    descriptor_dim: int = 512
    input_side: int = 64
    use_irpe: bool = True
    use_self_encoder: bool = True
    use_cross_encoder: bool = True
    gem_p_init: float = 3.0
    backbone_channels: tuple[int, int] = (32, 64)
    stem_channels: tuple[int, int] = (8, 16)

    def __post_init__(self):
        if self.num_layers < 0:
            raise ConfigurationError("num_layers must be >= 0")
        if self.num_heads < 1 or self.embed_dim % self.num_heads:
            raise ConfigurationError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}"
            )
        if self.rpe_clip < 1:
            raise ConfigurationError("rpe_clip must be >= 1")
        if self.descriptor_dim < 1 or self.ffn_ratio < 1:
            raise ConfigurationError("descriptor_dim and ffn_ratio must be >= 1")
        if self.input_side < 16 or self.input_side % 16:
            raise ConfigurationError(f"input_side {self.input_side} must be a positive multiple of 16")
        if self.gem_p_init <= 0:
            raise ConfigurationError("gem_p_init must be positive")
        object.__setattr__(self, "backbone_channels", tuple(int(c) for c in self.backbone_channels))
        object.__setattr__(self, "stem_channels", tuple(int(c) for c in self.stem_channels))

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    @property
    def grids(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """Token grids (H, W) of the stride-8 and stride-16 streams."""
        s1 = self.input_side // 8
        s2 = self.input_side // 16
        return (s1, s1), (s2, s2)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["backbone_channels"] = list(self.backbone_channels)
        d["stem_channels"] = list(self.stem_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DsFormerConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in d.items() if k in known}
        for key in ("backbone_channels", "stem_channels"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)
