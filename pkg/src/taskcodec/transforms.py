"""Analysis and synthesis transforms.

Both are purely convolutional: four factor-2 scaling operations interleaved
with stacks of residual bottleneck blocks, ELU activations throughout, no
attention. Channel width doubles per analysis stage (capped at the latent
width M); synthesis mirrors the progression with transposed convolutions and
ends in a task head. Reconstruction and depth heads saturate to [0, 1] with a
clamp; segmentation heads emit raw per-class scores.

The auxiliary reconstruction transform is the block-free member of the same
family, so its parameter tree embeds injectively into any synthesis transform
of equal widths (see `aux_spec_from` / `check_subsumption`).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import torch
import torch.nn as nn
import torch.nn.functional as F

NUM_STAGES = 4
SCALE_FACTOR = 2 ** NUM_STAGES

TASK_KINDS = ("reconstruction", "depth_regression", "segmentation")


class ShapeError(ValueError):
    """Spatial or channel dimensions violate a transform contract."""


@dataclass(frozen=True)
class TransformSpec:
    latent_channels: int = 64  # M; 192 reproduces the full-scale setting
    base_width: int = 32
    blocks_per_stage: int = 1

    def __post_init__(self):
        if self.latent_channels < 1 or self.base_width < 1:
            raise ValueError("channel counts must be positive")
        if self.blocks_per_stage < 0:
            raise ValueError("blocks_per_stage must be >= 0")

    @property
    def stage_widths(self) -> tuple[int, ...]:
        widths = [min(self.base_width * 2**i, self.latent_channels)
                  for i in range(NUM_STAGES - 1)]
        return tuple(widths) + (self.latent_channels,)


@dataclass(frozen=True)
class TaskHeadSpec:
    kind: str
    num_classes: int = 4  # segmentation only

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"kind must be one of {TASK_KINDS}, got {self.kind!r}")
        if self.kind == "segmentation" and self.num_classes < 2:
            raise ValueError("segmentation needs >= 2 classes")

    @property
    def out_channels(self) -> int:
        return {"reconstruction": 3, "depth_regression": 1,
                "segmentation": self.num_classes}[self.kind]

    @property
    def bounded(self) -> bool:
        return self.kind in ("reconstruction", "depth_regression")


class ResidualBottleneckBlock(nn.Module):
    """1x1 reduce, 3x3, 1x1 expand with an identity skip."""

    def __init__(self, channels: int):
        super().__init__()
        mid = max(channels // 2, 1)
        self.reduce = nn.Conv2d(channels, mid, kernel_size=1)
        self.conv = nn.Conv2d(mid, mid, kernel_size=3, padding=1)
        self.expand = nn.Conv2d(mid, channels, kernel_size=1)

    def forward(self, x):
        h = F.elu(self.reduce(x))
        h = F.elu(self.conv(h))
        return x + self.expand(h)


class _AnalysisStage(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, blocks: int):
        super().__init__()
        self.down = nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=2, padding=1)
        self.blocks = nn.ModuleList(ResidualBottleneckBlock(out_ch) for _ in range(blocks))

    def forward(self, x):
        x = F.elu(self.down(x))
        for block in self.blocks:
            x = block(x)
        return x


class AnalysisTransform(nn.Module):
    """Image (N,3,H,W) -> latent (N,M,H/16,W/16); H, W divisible by 16."""

    def __init__(self, spec: TransformSpec, in_channels: int = 3):
        super().__init__()
        self.spec = spec
        widths = spec.stage_widths
        stages = []
        prev = in_channels
        for width in widths:
            stages.append(_AnalysisStage(prev, width, spec.blocks_per_stage))
            prev = width
        self.stages = nn.ModuleList(stages)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] % SCALE_FACTOR or x.shape[-2] % SCALE_FACTOR:
            raise ShapeError(
                f"spatial dims must be divisible by {SCALE_FACTOR}, got {tuple(x.shape[-2:])}"
            )
        for stage in self.stages:
            x = stage(x)
        return x


class _SynthesisStage(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, blocks: int):
        super().__init__()
        self.up = nn.ConvTranspose2d(in_ch, out_ch, kernel_size=4, stride=2, padding=1)
        self.blocks = nn.ModuleList(ResidualBottleneckBlock(out_ch) for _ in range(blocks))

    def forward(self, x):
        x = F.elu(self.up(x))
        for block in self.blocks:
            x = block(x)
        return x


class SynthesisTransform(nn.Module):
    """Latent (N,M,h,w) -> task output (N,out,16h,16w)."""

    def __init__(self, spec: TransformSpec, head: TaskHeadSpec):
        super().__init__()
        self.spec = spec
        self.head_spec = head
        widths = tuple(reversed(spec.stage_widths))  # M first
        stages = []
        for in_ch, out_ch in zip(widths, widths[1:] + (widths[-1],)):
            stages.append(_SynthesisStage(in_ch, out_ch, spec.blocks_per_stage))
        self.stages = nn.ModuleList(stages)
        self.head = nn.Conv2d(widths[-1], head.out_channels, kernel_size=3, padding=1)
        if head.bounded:
            # Start mid-range so the clamp does not freeze gradients at init.
            nn.init.constant_(self.head.bias, 0.5)

    def forward(self, latent: torch.Tensor) -> torch.Tensor:
        if latent.shape[-3] != self.spec.latent_channels:
            raise ShapeError(
                f"latent has {latent.shape[-3]} channels, spec wants {self.spec.latent_channels}"
            )
        x = latent
        for stage in self.stages:
            x = stage(x)
        x = self.head(x)
        if self.head_spec.bounded:
            x = torch.clamp(x, 0.0, 1.0)
        return x


def aux_spec_from(spec: TransformSpec) -> TransformSpec:
    """Spec of the auxiliary reconstruction transform: the block-free (hence
    strictly simpler) member of the same family."""
    return replace(spec, blocks_per_stage=0)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def count_params(spec: TransformSpec, head: TaskHeadSpec | None = None) -> int:
    """Exact learnable-parameter count of the transform the spec describes:
    analysis when `head` is None, synthesis (+head) otherwise."""
    if head is None:
        return count_parameters(AnalysisTransform(spec))
    return count_parameters(SynthesisTransform(spec, head))


def check_subsumption(aux: SynthesisTransform, enh: SynthesisTransform) -> dict[str, str]:
    """Injective map from the auxiliary transform's parameter tree into the
    enhancement transform's; raises ValueError when no such map exists."""
    enh_params = dict(enh.named_parameters())
    mapping = {}
    for name, param in aux.named_parameters():
        if name not in enh_params:
            raise ValueError(f"auxiliary parameter {name} has no counterpart")
        if enh_params[name].shape != param.shape:
            raise ValueError(
                f"shape mismatch for {name}: {tuple(param.shape)} vs "
                f"{tuple(enh_params[name].shape)}"
            )
        mapping[name] = name
    return mapping
