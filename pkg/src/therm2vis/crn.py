"""Cascaded refinement generator: coarse-to-fine chain of 3-layer modules.

Each module works at one resolution of the ladder (doubling from the base
up to the target). Its input is the source image bilinearly downsampled to
that resolution, concatenated with the previous module's output upsampled
2x. The final head is a 1x1 projection to 3 channels with a logistic
squashing, so outputs are structurally bounded to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, ContractError

DEFAULT_SCHEDULE = (512, 512, 512, 256, 128, 64)


@dataclass
class CrnConfig:
    base_resolution: int = 4
    target_resolution: int = 128
    channel_schedule: tuple = DEFAULT_SCHEDULE
    leaky_slope: float = 0.2
    seed: int = 0

    def __post_init__(self):
        self.channel_schedule = tuple(self.channel_schedule)

    def validate(self):
        if self.base_resolution < 1 or self.target_resolution < self.base_resolution:
            raise ConfigurationError("resolutions must satisfy 1 <= base <= target")
        ratio = self.target_resolution // self.base_resolution
        if self.base_resolution * ratio != self.target_resolution or ratio & (ratio - 1):
            raise ConfigurationError(
                f"target/base ratio must be a power of 2, got "
                f"{self.target_resolution}/{self.base_resolution}"
            )
        if len(self.channel_schedule) != self.num_modules:
            raise ConfigurationError(
                f"channel schedule length {len(self.channel_schedule)} != "
                f"module count {self.num_modules}"
            )

    @property
    def num_modules(self) -> int:
        ratio = self.target_resolution // self.base_resolution
        return ratio.bit_length()  # log2(ratio) + 1 for power-of-two ratios

    @property
    def resolutions(self) -> list[int]:
        return [self.base_resolution * (1 << i) for i in range(self.num_modules)]


class RefinementModule(nn.Module):
    """Three conv layers (input/intermediate/output) at one resolution."""

    def __init__(self, resolution: int, prev_channels: int, out_channels: int, slope: float):
        super().__init__()
        self.resolution = resolution
        in_channels = 3 + prev_channels
        self.layers = nn.ModuleList()
        ch = in_channels
        for _ in range(3):
            self.layers.append(
                nn.ModuleDict(
                    {
                        "conv": nn.Conv2d(ch, out_channels, kernel_size=3, padding=1),
                        "norm": nn.GroupNorm(1, out_channels),
                    }
                )
            )
            ch = out_channels
        self.slope = slope

    def forward(self, prev: torch.Tensor | None, source: torch.Tensor) -> torch.Tensor:
        down = source
        if source.shape[-1] != self.resolution:
            down = F.interpolate(
                source, size=(self.resolution, self.resolution),
                mode="bilinear", align_corners=False,
            )
        if prev is None:
            x = down
        else:
            if prev.shape[-1] * 2 != self.resolution:
                raise ContractError(
                    f"previous features at {prev.shape[-1]} do not feed a "
                    f"{self.resolution} module"
                )
            up = F.interpolate(prev, scale_factor=2, mode="bilinear", align_corners=False)
            x = torch.cat([down, up], dim=1)
        for layer in self.layers:
            x = F.leaky_relu(layer["norm"](layer["conv"](x)), self.slope)
        return x


class CrnModel(nn.Module):
    def __init__(self, config: CrnConfig):
        super().__init__()
        config.validate()
        self.config = config
        modules = []
        prev_ch = 0
        for res, ch in zip(config.resolutions, config.channel_schedule):
            modules.append(RefinementModule(res, prev_ch, ch, config.leaky_slope))
            prev_ch = ch
        self.refiners = nn.ModuleList(modules)
        self.head = nn.Conv2d(prev_ch, 3, kernel_size=1)

    def forward(self, source: torch.Tensor) -> torch.Tensor:
        squeeze = source.ndim == 3
        if squeeze:
            source = source.unsqueeze(0)
        t = self.config.target_resolution
        if source.ndim != 4 or source.shape[1] != 3 or source.shape[-2:] != (t, t):
            raise ContractError(
                f"expected (3, {t}, {t}) input, got shape {tuple(source.shape)}"
            )
        x = None
        for module in self.refiners:
            x = module(x, source)
        out = torch.sigmoid(self.head(x))
        return out[0] if squeeze else out


def build_crn(config: CrnConfig) -> CrnModel:
    """Construct the generator with seed-deterministic initialization."""
    config.validate()
    model = CrnModel(config)
    gen = torch.Generator().manual_seed(config.seed)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, nn.Conv2d):
                fan_in = module.weight.shape[1] * module.weight.shape[2] * module.weight.shape[3]
                module.weight.normal_(0.0, (2.0 / fan_in) ** 0.5, generator=gen)
                module.bias.zero_()
    return model


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
