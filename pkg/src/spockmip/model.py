"""3D UNet and UNet-MSS with LeakyReLU activations and sigmoid heads.

The MSS variant emits probability maps at the top ``mss_levels`` scales:
full resolution, 1/2, and 1/4 for the defaults. Input extents must divide
by 2**(depth-1).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import torch
from torch import nn


class Variant(Enum):
    UNET = "unet"
    UNET_MSS = "unet_mss"


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 1
    base_features: int = 16
    depth: int = 3
    mss_levels: int = 3
    leaky_slope: float = 0.01
    variant: Variant = Variant.UNET_MSS

    def __post_init__(self):
        if self.base_features < 1:
            raise ValueError("base_features must be >= 1")
        if self.mss_levels > self.depth:
            raise ValueError(
                f"mss_levels {self.mss_levels} cannot exceed depth {self.depth}"
            )

    @property
    def n_outputs(self) -> int:
        return self.mss_levels if self.variant is Variant.UNET_MSS else 1


def _double_conv(cin: int, cout: int, slope: float) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv3d(cin, cout, 3, padding=1),
        nn.InstanceNorm3d(cout, affine=True),
        nn.LeakyReLU(slope, inplace=True),
        nn.Conv3d(cout, cout, 3, padding=1),
        nn.InstanceNorm3d(cout, affine=True),
        nn.LeakyReLU(slope, inplace=True),
    )


class UNet3d(nn.Module):
    """Encoder-decoder over (B, C, D, H, W) patches.

    forward returns a list of probability tensors ordered full resolution
    first, shapes halving per level.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        f = config.base_features
        slope = config.leaky_slope
        widths = [f * 2**i for i in range(config.depth)]

        self.encoders = nn.ModuleList()
        cin = config.in_channels
        for w in widths:
            self.encoders.append(_double_conv(cin, w, slope))
            cin = w
        self.pool = nn.MaxPool3d(2)

        self.upsamplers = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for i in range(config.depth - 1, 0, -1):
            self.upsamplers.append(nn.ConvTranspose3d(widths[i], widths[i - 1], 2, stride=2))
            self.decoders.append(_double_conv(2 * widths[i - 1], widths[i - 1], slope))

        # heads from full resolution down; deepest head sits on the
        # bottom encoder output
        self.heads = nn.ModuleList(
            nn.Conv3d(widths[i], 1, 1) for i in range(config.n_outputs)
        )
        self._init_weights(slope)

    def _init_weights(self, slope: float) -> None:
        for m in self.modules():
            if isinstance(m, (nn.Conv3d, nn.ConvTranspose3d)):
                nn.init.kaiming_normal_(m.weight, a=slope, nonlinearity="leaky_relu")
                if m.bias is not None:
                    nn.init.zeros_(m.bias)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        div = 2 ** (self.config.depth - 1)
        if any(s % div for s in x.shape[2:]):
            raise ValueError(
                f"input extents {tuple(x.shape[2:])} not divisible by {div}"
            )
        skips = []
        for i, enc in enumerate(self.encoders):
            x = enc(x)
            skips.append(x)
            if i < len(self.encoders) - 1:
                x = self.pool(x)

        # level features indexed by scale: [full, 1/2, ..., deepest]
        features = [None] * self.config.depth
        features[self.config.depth - 1] = x
        for j, (up, dec) in enumerate(zip(self.upsamplers, self.decoders)):
            level = self.config.depth - 2 - j
            x = up(x)
            x = dec(torch.cat([skips[level], x], dim=1))
            features[level] = x

        return [
            torch.sigmoid(self.heads[i](features[i]))
            for i in range(self.config.n_outputs)
        ]


def build_model(config: ModelConfig) -> UNet3d:
    return UNet3d(config)


def parameter_count(config: ModelConfig) -> int:
    return sum(p.numel() for p in build_model(config).parameters())
