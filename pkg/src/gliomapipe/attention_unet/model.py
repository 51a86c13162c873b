from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
from torch import nn

from ..errors import ConfigError
from .attention import FUSIONS, SkipAttention3d


@dataclass
class NetworkConfig:
    in_channels: int = 4
    num_classes: int = 4
    base_filters: int = 16
    depth: int = 4
    reduction_ratio: int = 2
    attention_enabled: bool = True
    fusion: str = "parallel_add"
    seed: int = 0

    def validate(self):
        if self.depth < 2:
            raise ConfigError(f"depth must be >= 2, got {self.depth}")
        for name in ("in_channels", "num_classes", "base_filters", "reduction_ratio"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.fusion not in FUSIONS:
            raise ConfigError(f"unknown fusion {self.fusion!r}")
        if self.attention_enabled:
            for c in self.decoder_channels():
                if c % self.reduction_ratio:
                    raise ConfigError(f"decoder channels {c} not divisible by reduction ratio {self.reduction_ratio}")

    def encoder_channels(self) -> list:
        return [self.base_filters * 2 ** level for level in range(self.depth)]

    def decoder_channels(self) -> list:
        return self.encoder_channels()[:-1][::-1]

    @property
    def min_footprint(self) -> int:
        # The bottleneck must keep at least 2 voxels per axis for instance norm.
        return 2 ** self.depth

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown network config keys: {sorted(unknown)}")
        return cls(**d)


class ConvBlock(nn.Module):
    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv3d(in_channels, out_channels, 3, padding=1),
            nn.InstanceNorm3d(out_channels, affine=True),
            nn.LeakyReLU(0.01, inplace=True),
            nn.Conv3d(out_channels, out_channels, 3, padding=1),
            nn.InstanceNorm3d(out_channels, affine=True),
            nn.LeakyReLU(0.01, inplace=True),
        )

    def forward(self, x):
        return self.body(x)


class DecoderBlock(nn.Module):
    def __init__(self, in_channels, out_channels, attention: SkipAttention3d | None):
        super().__init__()
        self.up = nn.ConvTranspose3d(in_channels, out_channels, 2, stride=2)
        self.conv = ConvBlock(2 * out_channels, out_channels)
        self.attention = attention

    def forward(self, x, skip):
        x = self.conv(torch.cat([self.up(x), skip], dim=1))
        if self.attention is not None:
            x = self.attention(x)
        return x


class UNet3d(nn.Module):
    """3D UNet; with ``attention_enabled`` every decoder block ends in a skip-attention unit."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        config.validate()
        self.config = config
        chans = config.encoder_channels()
        self.encoders = nn.ModuleList([ConvBlock(config.in_channels, chans[0])])
        for lo, hi in zip(chans[:-1], chans[1:]):
            self.encoders.append(ConvBlock(lo, hi))
        self.pool = nn.MaxPool3d(2)
        self.decoders = nn.ModuleList()
        for level in range(config.depth - 2, -1, -1):
            c = chans[level]
            att = SkipAttention3d(c, config.reduction_ratio, config.fusion) if config.attention_enabled else None
            self.decoders.append(DecoderBlock(chans[level + 1], c, att))
        self.head = nn.Conv3d(chans[0], config.num_classes, 1)

    def forward(self, x):
        skips = []
        for i, enc in enumerate(self.encoders):
            if i:
                x = self.pool(x)
            x = enc(x)
            skips.append(x)
        x = skips.pop()
        for dec in self.decoders:
            x = dec(x, skips.pop())
        return self.head(x)

    def attention_units(self) -> list:
        return [d.attention for d in self.decoders if d.attention is not None]


def build_model(config: NetworkConfig) -> UNet3d:
    config.validate()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        return UNet3d(config)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
