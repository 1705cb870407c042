"""Builders for the seven segmentation architectures and parameter accounting.

All architectures share the same encoder/decoder scaffold: ``depth``
max-pooling stages with channel widths doubling from ``base_channels``,
transposed-convolution upsampling, skip concatenation, and a 1x1 output
head. They differ in the convolution block used at every stage and in how
skip connections are attended:

==================  =================  ===========================
arch                stage block        skip attention
==================  =================  ===========================
unet                double conv        none
att_unet            double conv        gates on all skips
fau_net             double conv        gates on coarse skips, FPA on finest
dense_unet          dense block        none
att_dense_unet      dense block        gates on all skips
r2unet              recurrent residual none
att_r2unet          recurrent residual gates on all skips
==================  =================  ===========================
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .blocks import (
    AttentionGate,
    DenseBlock,
    DoubleConv,
    FeaturePyramidAttention,
    RecurrentResidualBlock,
)
from .errors import ConfigError, DataError, ShapeError

ARCH_NAMES = (
    "unet",
    "att_unet",
    "fau_net",
    "dense_unet",
    "att_dense_unet",
    "r2unet",
    "att_r2unet",
)

# Reference trainable-parameter counts used as regression targets for the
# default configuration, with the relative tolerance each architecture must
# stay within. swin_unet has no builder here and is kept for context only.
REFERENCE_PARAM_COUNTS = {
    "unet": 1_940_885,
    "att_unet": 1_995_409,
    "fau_net": 2_158_505,
    "dense_unet": 4_238_389,
    "att_dense_unet": 4_271_521,
    "r2unet": 6_003_077,
    "att_r2unet": 6_036_081,
    "swin_unet": 26_598_344,
}
PARAM_COUNT_TOLERANCE = {
    "unet": 0.005,
    "att_unet": 0.03,
    "fau_net": 0.08,
    "dense_unet": 0.20,
    "att_dense_unet": 0.20,
    "r2unet": 0.20,
    "att_r2unet": 0.20,
}

RRC_STEPS = 2
DENSE_LAYERS = 4


@dataclass
class ModelConfig:
    """Shared architecture hyperparameters for every builder."""

    arch: str = "unet"
    in_channels: int = 1
    num_classes: int = 5
    depth: int = 4
    base_channels: int = 16
    upsample: str = "transposed"

    def __post_init__(self):
        if self.arch not in ARCH_NAMES:
            raise ConfigError(f"unknown architecture {self.arch!r}; expected one of {ARCH_NAMES}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.in_channels < 1 or self.base_channels < 1:
            raise ConfigError("in_channels and base_channels must be positive")
        if self.upsample != "transposed":
            raise ConfigError(f"unsupported upsample mode {self.upsample!r}")

    @property
    def widths(self):
        """Encoder widths per level, bottleneck last."""
        return [self.base_channels * 2 ** i for i in range(self.depth + 1)]


def _stage_block(arch, in_ch, out_ch):
    if arch in ("dense_unet", "att_dense_unet"):
        return DenseBlock(in_ch, out_ch, growth=max(1, out_ch // 2), layers=DENSE_LAYERS)
    if arch in ("r2unet", "att_r2unet"):
        return RecurrentResidualBlock(in_ch, out_ch, steps=RRC_STEPS)
    return DoubleConv(in_ch, out_ch)


class SegUNet(nn.Module):
    """Encoder/decoder segmentation network parameterized by ModelConfig."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        widths = config.widths
        gated = config.arch in ("att_unet", "att_dense_unet", "att_r2unet")
        fpa = config.arch == "fau_net"

        self.pool = nn.MaxPool2d(2)
        self.encoders = nn.ModuleList()
        prev = config.in_channels
        for w in widths[:-1]:
            self.encoders.append(_stage_block(config.arch, prev, w))
            prev = w
        self.bottleneck = _stage_block(config.arch, widths[-2], widths[-1])

        # decoder stage i (1 = finest) upsamples from widths[i] to widths[i-1]
        self.ups = nn.ModuleList()
        self.decoders = nn.ModuleList()
        self.gates = nn.ModuleList()
        for i in range(config.depth, 0, -1):
            self.ups.append(nn.ConvTranspose2d(widths[i], widths[i - 1], 2, stride=2))
            self.decoders.append(_stage_block(config.arch, 2 * widths[i - 1], widths[i - 1]))
            finest = i == 1
            if fpa and finest:
                self.gates.append(FeaturePyramidAttention(widths[0]))
            elif gated or (fpa and not finest):
                self.gates.append(AttentionGate(widths[i - 1], widths[i]))
            else:
                self.gates.append(nn.Identity())
        self.head = nn.Conv2d(widths[0], config.num_classes, 1)

    def forward(self, x):
        if x.shape[1] != self.config.in_channels:
            raise ShapeError(
                f"expected {self.config.in_channels} input channels, got {x.shape[1]}"
            )
        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for up, dec, gate, skip in zip(self.ups, self.decoders, self.gates, reversed(skips)):
            if isinstance(gate, AttentionGate):
                skip = gate(skip, x)
            elif isinstance(gate, FeaturePyramidAttention):
                skip = gate(skip)
            x = dec(torch.cat([skip, up(x)], dim=1))
        return self.head(x)


def _he_uniform_init(model):
    # fan-in uniform He initialization for conv weights, zero biases
    for m in model.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.kaiming_uniform_(m.weight, mode="fan_in", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def build(config: ModelConfig, seed: int | None = None) -> SegUNet:
    """Assemble an architecture; ``seed`` makes the initialization reproducible."""
    if seed is not None:
        torch.manual_seed(seed)
    model = SegUNet(config)
    _he_uniform_init(model)
    return model


@dataclass
class ParamReport:
    """Exact trainable-parameter count with a per-tensor breakdown."""

    arch: str
    total: int
    breakdown: list = field(default_factory=list)  # (parameter path, count)


def count_parameters(model: SegUNet) -> ParamReport:
    breakdown = [
        (name, p.numel()) for name, p in model.named_parameters() if p.requires_grad
    ]
    return ParamReport(
        arch=model.config.arch,
        total=sum(n for _, n in breakdown),
        breakdown=breakdown,
    )


def param_table_rows(archs=ARCH_NAMES):
    """Parameter regression table: count, reference, relative delta, tolerance flag."""
    rows = []
    for arch in archs:
        model = build(ModelConfig(arch=arch))
        total = count_parameters(model).total
        ref = REFERENCE_PARAM_COUNTS[arch]
        tol = PARAM_COUNT_TOLERANCE[arch]
        delta = (total - ref) / ref
        rows.append(
            {
                "arch": arch,
                "parameters": total,
                "reference": ref,
                "delta_pct": 100.0 * delta,
                "tolerance_pct": 100.0 * tol,
                "within_tolerance": abs(delta) <= tol,
            }
        )
    return rows


def predict_labels(model: SegUNet, images: np.ndarray) -> np.ndarray:
    """Per-pixel argmax labels for a batch of [0,1] grayscale images.

    ``images`` is (N, H, W) with H and W divisible by 2**depth. Ties go to
    the smallest class index.
    """
    images = np.asarray(images, dtype=np.float32)
    if images.ndim == 2:
        images = images[None]
    if images.ndim != 3:
        raise ShapeError(f"expected images shaped (N,H,W), got {images.shape}")
    factor = 2 ** model.config.depth
    h, w = images.shape[1], images.shape[2]
    if h % factor != 0 or w % factor != 0:
        raise ShapeError(
            f"image spatial size must be divisible by {factor} "
            f"(depth {model.config.depth}), got {h}x{w}"
        )
    model.eval()
    with torch.no_grad():
        logits = model(torch.from_numpy(images).unsqueeze(1))
    # np.argmax returns the first (smallest-index) maximum
    return np.argmax(logits.numpy(), axis=1).astype(np.uint8)


CONFIG_FILE = "config.txt"
WEIGHTS_FILE = "weights.pt"
PARAMS_FILE = "param_report.csv"


def save_checkpoint(path, model: SegUNet):
    """Write a checkpoint directory: config.txt, weights.pt, param_report.csv."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    cfg = model.config
    lines = [
        f"arch={cfg.arch}",
        f"in_channels={cfg.in_channels}",
        f"num_classes={cfg.num_classes}",
        f"depth={cfg.depth}",
        f"base_channels={cfg.base_channels}",
        f"upsample={cfg.upsample}",
    ]
    (path / CONFIG_FILE).write_text("\n".join(lines) + "\n")
    torch.save(model.state_dict(), path / WEIGHTS_FILE)
    report = count_parameters(model)
    with open(path / PARAMS_FILE, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["layer", "parameters"])
        for name, n in report.breakdown:
            writer.writerow([name, n])
        writer.writerow(["total", report.total])


def load_checkpoint(path) -> SegUNet:
    path = Path(path)
    cfg_file = path / CONFIG_FILE
    weights_file = path / WEIGHTS_FILE
    if not cfg_file.is_file() or not weights_file.is_file():
        raise DataError(f"not a checkpoint directory: {path}")
    fields = {}
    for line in cfg_file.read_text().splitlines():
        line = line.strip()
        if line and "=" in line:
            key, value = line.split("=", 1)
            fields[key.strip()] = value.strip()
    try:
        config = ModelConfig(
            arch=fields["arch"],
            in_channels=int(fields["in_channels"]),
            num_classes=int(fields["num_classes"]),
            depth=int(fields["depth"]),
            base_channels=int(fields["base_channels"]),
            upsample=fields.get("upsample", "transposed"),
        )
    except (KeyError, ValueError) as exc:
        raise DataError(f"invalid checkpoint config {cfg_file}: {exc}") from exc
    model = SegUNet(config)
    model.load_state_dict(torch.load(weights_file, map_location="cpu", weights_only=True))
    model.eval()
    return model
