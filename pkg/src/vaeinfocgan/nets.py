"""Convolutional building blocks shared by the main model and the baselines."""

from __future__ import annotations

import math

import torch
from torch import nn

MAX_MULT = 4


def effective_stages(n: int, stages: int) -> int:
    """Number of stride-2 stages actually used for an ``n x n`` input (>= 2x2 left)."""
    if n < 4 or n & (n - 1):
        raise ValueError(f"patch side {n} must be a power of two >= 4")
    return max(1, min(stages, int(math.log2(n)) - 1))


def _channels(width: int, i: int) -> int:
    return width * min(2 ** i, MAX_MULT)


class ConvEncoder(nn.Module):
    """Stride-2 conv stack followed by a linear map to ``out_features``."""

    def __init__(self, in_ch: int, n: int, width: int, stages: int, out_features: int,
                 spectral: bool = False):
        super().__init__()
        s = effective_stages(n, stages)
        wrap = sn if spectral else (lambda m: m)
        layers: list[nn.Module] = []
        ch = in_ch
        for i in range(s):
            layers += [wrap(nn.Conv2d(ch, _channels(width, i), 4, 2, 1)), nn.LeakyReLU(0.2)]
            ch = _channels(width, i)
        self.conv = nn.Sequential(*layers)
        self.flat = ch * (n >> s) ** 2
        self.fc = wrap(nn.Linear(self.flat, out_features))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc(self.conv(x).flatten(1))


class ConvDecoder(nn.Module):
    """Linear map to a coarse grid followed by stride-2 transposed convs."""

    def __init__(self, in_features: int, n: int, width: int, stages: int, out_ch: int):
        super().__init__()
        s = effective_stages(n, stages)
        self.ch0 = _channels(width, s - 1)
        self.side = n >> s
        self.fc = nn.Linear(in_features, self.ch0 * self.side ** 2)
        layers: list[nn.Module] = [nn.LeakyReLU(0.2)]
        ch = self.ch0
        for i in reversed(range(s - 1)):
            layers += [nn.ConvTranspose2d(ch, _channels(width, i), 4, 2, 1), nn.LeakyReLU(0.2)]
            ch = _channels(width, i)
        layers += [nn.ConvTranspose2d(ch, ch, 4, 2, 1), nn.LeakyReLU(0.2),
                   nn.Conv2d(ch, out_ch, 3, 1, 1)]
        self.net = nn.Sequential(*layers)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        h = self.fc(z).view(-1, self.ch0, self.side, self.side)
        return self.net(h)


def sn(m: nn.Module) -> nn.Module:
    """Spectral normalization (one power iteration per training forward)."""
    return nn.utils.parametrizations.spectral_norm(m)


def init_weights(module: nn.Module) -> None:
    """N(0, 0.02) conv kernels, zero conv biases; linear layers keep torch defaults."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            if nn.utils.parametrize.is_parametrized(m, "weight"):
                nn.init.normal_(m.parametrizations.weight.original, 0.0, 0.02)
            else:
                nn.init.normal_(m.weight, 0.0, 0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def n_params(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
