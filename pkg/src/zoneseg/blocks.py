"""Reusable convolutional building blocks for the segmentation model zoo.

All blocks preserve batch size and spatial size (pyramid levels inside the
FPA are internal), use same-padding 3x3/5x5/7x7 convolutions with biases,
ReLU as the only hidden activation, and no normalization layers.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, ShapeError


def _check_channels(name, tensor, expected):
    if tensor.dim() != 4:
        raise ShapeError(f"{name}: expected a (N,C,H,W) tensor, got {tuple(tensor.shape)}")
    if tensor.shape[1] != expected:
        raise ConfigError(
            f"{name}: expected {expected} input channels, got {tensor.shape[1]}"
        )


class DoubleConv(nn.Module):
    """Two same-padding 3x3 convolutions, each followed by ReLU."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        if in_channels <= 0 or out_channels <= 0:
            raise ConfigError(f"DoubleConv: channels must be positive, got {in_channels}->{out_channels}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)

    def forward(self, x):
        _check_channels("DoubleConv", x, self.in_channels)
        x = F.relu(self.conv1(x))
        return F.relu(self.conv2(x))


class AttentionGate(nn.Module):
    """Additive attention gate rescaling a skip-connection feature map.

    The skip feature x (C channels, size S) is combined with a coarser
    gating signal g (2C channels by default, size S/2): the x branch is a
    1x1 stride-2 convolution, the g branch a 1x1 convolution, both mapping
    to ``inter_channels``; their ReLU'd sum passes through a 1x1 convolution
    to one channel and a sigmoid, giving an attention map in [0, 1] at S/2
    that is nearest-upsampled back to S and multiplied into x.
    """

    def __init__(self, skip_channels: int, gate_channels: int | None = None,
                 inter_channels: int | None = None):
        super().__init__()
        if skip_channels <= 0:
            raise ConfigError(f"AttentionGate: skip_channels must be positive, got {skip_channels}")
        self.skip_channels = skip_channels
        self.gate_channels = 2 * skip_channels if gate_channels is None else gate_channels
        self.inter_channels = skip_channels if inter_channels is None else inter_channels
        if self.gate_channels <= 0 or self.inter_channels <= 0:
            raise ConfigError("AttentionGate: gate/inter channel counts must be positive")
        self.theta_x = nn.Conv2d(skip_channels, self.inter_channels, 1, stride=2)
        self.theta_g = nn.Conv2d(self.gate_channels, self.inter_channels, 1)
        self.psi = nn.Conv2d(self.inter_channels, 1, 1)

    def attention_map(self, x, g):
        """Attention coefficients in [0, 1], upsampled to x's spatial size."""
        _check_channels("AttentionGate(x)", x, self.skip_channels)
        _check_channels("AttentionGate(g)", g, self.gate_channels)
        if x.shape[2] != 2 * g.shape[2] or x.shape[3] != 2 * g.shape[3]:
            raise ShapeError(
                "AttentionGate: skip and gating spatial sizes must be in exact 2:1 "
                f"ratio, got x {tuple(x.shape[2:])} vs g {tuple(g.shape[2:])}"
            )
        a = torch.sigmoid(self.psi(F.relu(self.theta_x(x) + self.theta_g(g))))
        return F.interpolate(a, scale_factor=2, mode="nearest")

    def forward(self, x, g):
        return x * self.attention_map(x, g)


class FeaturePyramidAttention(nn.Module):
    """Multi-scale attention over the finest skip connection.

    A three-level pyramid downsamples the input with stride-2 convolutions
    of kernel 7/5/3 (to S/2, S/4, S/8), each followed by a second
    same-kernel same-padding convolution. The maps are integrated smaller
    to larger by x2 nearest upsampling and addition, yielding a per-channel
    map at full size; its sigmoid multiplies a 1x1 convolution of the input.
    """

    def __init__(self, channels: int):
        super().__init__()
        if channels <= 0:
            raise ConfigError(f"FeaturePyramidAttention: channels must be positive, got {channels}")
        self.channels = channels
        self.down7 = nn.Conv2d(channels, channels, 7, stride=2, padding=3)
        self.conv7 = nn.Conv2d(channels, channels, 7, padding=3)
        self.down5 = nn.Conv2d(channels, channels, 5, stride=2, padding=2)
        self.conv5 = nn.Conv2d(channels, channels, 5, padding=2)
        self.down3 = nn.Conv2d(channels, channels, 3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(channels, channels, 3, padding=1)
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        _check_channels("FeaturePyramidAttention", x, self.channels)
        h, w = x.shape[2], x.shape[3]
        if h % 8 != 0 or w % 8 != 0:
            raise ShapeError(
                f"FeaturePyramidAttention: spatial size must be divisible by 8, got {h}x{w}"
            )
        d1 = F.relu(self.down7(x))
        c1 = F.relu(self.conv7(d1))
        d2 = F.relu(self.down5(d1))
        c2 = F.relu(self.conv5(d2))
        d3 = F.relu(self.down3(d2))
        c3 = F.relu(self.conv3(d3))
        up = F.interpolate(c3, scale_factor=2, mode="nearest") + c2
        up = F.interpolate(up, scale_factor=2, mode="nearest") + c1
        up = F.interpolate(up, scale_factor=2, mode="nearest")
        return torch.sigmoid(up) * self.proj(x)


class DenseBlock(nn.Module):
    """Densely connected 3x3 layers plus a 1x1 transition.

    Layer i consumes the block input concatenated with all previous layer
    outputs (in + i * growth channels) and produces ``growth`` channels;
    the transition maps the final concatenation to ``out_channels``.
    """

    def __init__(self, in_channels: int, out_channels: int,
                 growth: int = 8, layers: int = 4):
        super().__init__()
        if growth <= 0:
            raise ConfigError(f"DenseBlock: growth rate must be positive, got {growth}")
        if layers <= 0:
            raise ConfigError(f"DenseBlock: layer count must be positive, got {layers}")
        if in_channels <= 0 or out_channels <= 0:
            raise ConfigError(f"DenseBlock: channels must be positive, got {in_channels}->{out_channels}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.growth = growth
        self.layers = nn.ModuleList(
            nn.Conv2d(in_channels + i * growth, growth, 3, padding=1)
            for i in range(layers)
        )
        self.transition = nn.Conv2d(in_channels + layers * growth, out_channels, 1)

    def forward(self, x):
        _check_channels("DenseBlock", x, self.in_channels)
        features = [x]
        for layer in self.layers:
            features.append(F.relu(layer(torch.cat(features, dim=1))))
        return F.relu(self.transition(torch.cat(features, dim=1)))


class RecurrentUnit(nn.Module):
    """t+1 successive 3x3 convolutions; iteration j > 0 sees input + previous output.

    Each iteration has its own convolution weights.
    """

    def __init__(self, channels: int, steps: int = 2):
        super().__init__()
        if steps < 1:
            raise ConfigError(f"RecurrentUnit: recurrence steps must be >= 1, got {steps}")
        self.channels = channels
        self.steps = steps
        self.convs = nn.ModuleList(
            nn.Conv2d(channels, channels, 3, padding=1) for _ in range(steps + 1)
        )

    def forward(self, x):
        out = F.relu(self.convs[0](x))
        for conv in self.convs[1:]:
            out = F.relu(conv(x + out))
        return out


class RecurrentResidualBlock(nn.Module):
    """Two recurrent convolution units with a 1x1-projected residual of the input."""

    def __init__(self, in_channels: int, out_channels: int, steps: int = 2):
        super().__init__()
        if steps < 1:
            raise ConfigError(f"RecurrentResidualBlock: recurrence steps must be >= 1, got {steps}")
        if in_channels <= 0 or out_channels <= 0:
            raise ConfigError(
                f"RecurrentResidualBlock: channels must be positive, got {in_channels}->{out_channels}"
            )
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.proj = nn.Conv2d(in_channels, out_channels, 1)
        self.unit1 = RecurrentUnit(out_channels, steps)
        self.unit2 = RecurrentUnit(out_channels, steps)

    def forward(self, x):
        _check_channels("RecurrentResidualBlock", x, self.in_channels)
        p = self.proj(x)
        return self.unit2(self.unit1(p)) + p
