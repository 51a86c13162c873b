"""3D skip-attention unit: parallel spatial and channel gates fused with an identity path.

The functional forms take explicit parameters so they can be checked in
isolation (finite differences, closed-form cases); :class:`SkipAttention3d`
owns the parameters and delegates to them.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from ..errors import ConfigError, ShapeError

FUSIONS = ("parallel_add", "sequential")


@dataclass
class AttentionParams:
    spatial_weight: torch.Tensor  # (C,)
    spatial_bias: torch.Tensor  # ()
    w1: torch.Tensor  # (C // r, C)
    b1: torch.Tensor  # (C // r,)
    w2: torch.Tensor  # (C, C // r)
    b2: torch.Tensor  # (C,)

    @property
    def channels(self) -> int:
        return self.spatial_weight.shape[0]

    @classmethod
    def zeros(cls, channels: int, reduction: int = 2, dtype=torch.float64):
        hidden = channels // reduction
        z = lambda *s: torch.zeros(*s, dtype=dtype)  # noqa: E731
        return cls(z(channels), z(()), z(hidden, channels), z(hidden), z(channels, hidden), z(channels))

    @classmethod
    def random(cls, channels: int, reduction: int = 2, generator=None, dtype=torch.float64, scale=0.5):
        hidden = channels // reduction
        r = lambda *s: scale * torch.randn(*s, generator=generator, dtype=dtype)  # noqa: E731
        return cls(r(channels), r(()), r(hidden, channels), r(hidden), r(channels, hidden), r(channels))

    def tensors(self) -> list:
        return [self.spatial_weight, self.spatial_bias, self.w1, self.b1, self.w2, self.b2]


def _check_channels(features: torch.Tensor, params: AttentionParams):
    if features.dim() < 4:
        raise ShapeError(f"expected (..., C, D, H, W) features, got shape {tuple(features.shape)}")
    c = features.shape[-4]
    if c != params.channels or params.w1.shape[1] != c or params.w2.shape[0] != c:
        raise ShapeError(f"feature channels {c} do not match attention parameters ({params.channels})")


def spatial_attention(features: torch.Tensor, params: AttentionParams) -> torch.Tensor:
    """sigmoid of a 1x1x1 convolution C -> 1; returns shape (..., 1, D, H, W)."""
    _check_channels(features, params)
    logits = torch.einsum("...cdhw,c->...dhw", features, params.spatial_weight) + params.spatial_bias
    return torch.sigmoid(logits).unsqueeze(-4)


def channel_attention(features: torch.Tensor, params: AttentionParams) -> torch.Tensor:
    """Global average pool, then sigmoid(W2 relu(W1 z + b1) + b2); returns shape (..., C)."""
    _check_channels(features, params)
    z = features.mean(dim=(-3, -2, -1))
    hidden = torch.relu(z @ params.w1.T + params.b1)
    return torch.sigmoid(hidden @ params.w2.T + params.b2)


def skip_attention_forward(features: torch.Tensor, params: AttentionParams,
                           fusion: str = "parallel_add") -> torch.Tensor:
    if fusion == "parallel_add":
        s = spatial_attention(features, params)
        e = channel_attention(features, params)[..., None, None, None]
        return features + features * s + features * e
    if fusion == "sequential":
        e = channel_attention(features, params)[..., None, None, None]
        excited = features * e
        return features + excited * spatial_attention(excited, params)
    raise ConfigError(f"unknown fusion {fusion!r}; expected one of {FUSIONS}")


class SkipAttention3d(nn.Module):
    def __init__(self, channels: int, reduction: int = 2, fusion: str = "parallel_add"):
        super().__init__()
        if channels % reduction:
            raise ConfigError(f"channels {channels} not divisible by reduction ratio {reduction}")
        if fusion not in FUSIONS:
            raise ConfigError(f"unknown fusion {fusion!r}")
        self.fusion = fusion
        self.spatial = nn.Conv3d(channels, 1, kernel_size=1)
        self.fc1 = nn.Linear(channels, channels // reduction)
        self.fc2 = nn.Linear(channels // reduction, channels)

    def params(self) -> AttentionParams:
        return AttentionParams(
            self.spatial.weight.reshape(-1),
            self.spatial.bias.reshape(()),
            self.fc1.weight,
            self.fc1.bias,
            self.fc2.weight,
            self.fc2.bias,
        )

    def forward(self, x):
        return skip_attention_forward(x, self.params(), self.fusion)
