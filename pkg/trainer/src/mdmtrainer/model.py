"""Encoder-decoder segmentation network.

A generic U-net: four encoder stages at the configured channel widths,
the last one acting as the bottleneck, a mirrored decoder with skip
connections, and one output channel of logits.  Spatial dimensions must
be divisible by 8 (three pooling stages).
"""

import torch
from torch import nn


def _block(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, padding=1, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
        nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class UNet(nn.Module):
    def __init__(self, in_channels: int = 4, features=(64, 128, 256, 512)):
        super().__init__()
        features = tuple(features)
        self.in_channels = in_channels
        self.features = features
        self.encoders = nn.ModuleList()
        ch = in_channels
        for width in features:
            self.encoders.append(_block(ch, width))
            ch = width
        self.pool = nn.MaxPool2d(2)
        self.ups = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for width in reversed(features[:-1]):
            self.ups.append(nn.ConvTranspose2d(ch, width, 2, stride=2))
            self.decoders.append(_block(width * 2, width))
            ch = width
        self.head = nn.Conv2d(ch, 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Logits of shape (n, 1, h, w) for input (n, in_channels, h, w)."""
        h, w = x.shape[-2:]
        if h % 8 or w % 8:
            raise ValueError(f"spatial dims must be divisible by 8, got {(h, w)}")
        skips = []
        for encoder in self.encoders[:-1]:
            x = encoder(x)
            skips.append(x)
            x = self.pool(x)
        x = self.encoders[-1](x)
        for up, decoder, skip in zip(self.ups, self.decoders, reversed(skips)):
            x = up(x)
            x = decoder(torch.cat([skip, x], dim=1))
        return self.head(x)

    def predict_proba(self, x: torch.Tensor) -> torch.Tensor:
        """Sigmoid probabilities in (0, 1), same shape as the logits."""
        return torch.sigmoid(self.forward(x))


def stage_widths(model: UNet) -> list[int]:
    """Output channels of each encoder stage, read off the parameters."""
    return [stage[0].out_channels for stage in model.encoders]
