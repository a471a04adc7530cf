"""2.5D encoder-decoder for anisotropic pullback segmentation.

Six levels with skip connections: the first four levels convolve in-plane
only (2D residual blocks with parallel atrous branches) and downsample
in-plane by 2 each; the last two levels convolve all three axes (3D blocks)
at constant resolution. The frame axis is never downsampled, so output depth
always equals input depth. A four-level 3D pyramid pooling module sits at the
bottleneck and again before the output head.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

ALLOWED_DILATIONS = frozenset({1, 3, 15, 31})

_DEFAULT_DILATIONS = ((1, 3), (1, 3), (1, 3, 15), (1, 3, 15),
                      (1, 3, 15, 31), (1, 3, 15, 31))


@dataclass(frozen=True)
class NetConfig:
    channels: tuple[int, ...] = (32, 64, 128, 256, 256, 256)
    dilations: tuple[tuple[int, ...], ...] = _DEFAULT_DILATIONS
    two_d_levels: int = 4
    ppm_bins: tuple[int, ...] = (1, 2, 3, 6)
    in_channels: int = 1
    toy_scale: int = 1   # divides channel widths for desk-scale runs

    def __post_init__(self):
        if len(self.channels) != 6 or len(self.dilations) != 6:
            raise ValueError("the network has exactly six levels")
        if self.two_d_levels != 4:
            raise ValueError("the first four levels are 2D, the last two 3D")
        for ds in self.dilations:
            bad = set(ds) - ALLOWED_DILATIONS
            if bad:
                raise ValueError(f"dilations {sorted(bad)} not in {sorted(ALLOWED_DILATIONS)}")
            if not ds:
                raise ValueError("each level needs at least one dilation")
        if self.toy_scale < 1:
            raise ValueError("toy_scale must be >= 1")
        if any(c < 1 for c in self.channels):
            raise ValueError("channel widths must be positive")

    @property
    def effective_channels(self) -> tuple[int, ...]:
        return tuple(max(1, c // self.toy_scale) for c in self.channels)


def inplane_receptive_field(dilations: tuple[int, ...]) -> int:
    """In-plane extent (pixels) of one block's widest 3-tap atrous branch."""
    return max(2 * d + 1 for d in dilations)


class PlaneNorm(nn.Module):
    """Frame-wise normalization over channels and in-plane dims only, so 2D
    blocks stay strictly independent of the depth axis."""

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mean = x.mean(dim=(1, 2, 3), keepdim=True)
        var = x.var(dim=(1, 2, 3), keepdim=True, unbiased=False)
        xhat = (x - mean) / torch.sqrt(var + self.eps)
        shape = (1, -1, 1, 1, 1)
        return xhat * self.weight.view(shape) + self.bias.view(shape)


def _norm(channels: int, three_d: bool) -> nn.Module:
    return nn.GroupNorm(1, channels) if three_d else PlaneNorm(channels)


class ResidualAtrousBlock(nn.Module):
    """Pre-activation residual unit with parallel atrous branches.

    Each branch is a 3x3 convolution at one dilation rate (in-plane only);
    the 3D variant also convolves the frame axis with a 3-tap undilated
    kernel. Branch outputs are concatenated, projected back by a 1x1x1
    convolution, and added to the identity path. Spatial shape is preserved.
    """

    def __init__(self, in_channels: int, out_channels: int,
                 dilations: tuple[int, ...], three_d: bool):
        super().__init__()
        kz, pz = (3, 1) if three_d else (1, 0)
        self.pre = nn.Sequential(_norm(in_channels, three_d), nn.ReLU(inplace=True))
        self.branches = nn.ModuleList([
            nn.Conv3d(in_channels, out_channels, (3, 3, kz),
                      padding=(d, d, pz), dilation=(d, d, 1))
            for d in dilations
        ])
        self.project = nn.Conv3d(out_channels * len(dilations), out_channels, 1)
        self.shortcut = (nn.Identity() if in_channels == out_channels
                         else nn.Conv3d(in_channels, out_channels, 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.pre(x)
        y = self.project(torch.cat([b(h) for b in self.branches], dim=1))
        if y.shape[2:] != x.shape[2:]:
            raise RuntimeError(f"residual paths disagree: {y.shape} vs {x.shape}")
        return self.shortcut(x) + y


def adaptive_pool3d_clamped(x: torch.Tensor, bin_size: int) -> torch.Tensor:
    """Adaptive average pool to (bin, bin, bin), clamped per-dimension so the
    bin never exceeds the feature map."""
    size = tuple(min(bin_size, s) for s in x.shape[2:])
    return F.adaptive_avg_pool3d(x, size)


class PyramidPooling3D(nn.Module):
    """Four-level 3D pyramid pooling: pool, 1x1x1 conv, upsample, fuse.

    With ``clamp_bins`` off, a bin larger than any feature-map dimension is
    an error; inside the network bins clamp so arbitrary depths work.
    """

    def __init__(self, channels: int, bins: tuple[int, ...] = (1, 2, 3, 6),
                 clamp_bins: bool = True):
        super().__init__()
        self.bins = tuple(bins)
        self.clamp_bins = clamp_bins
        branch_ch = max(1, channels // len(self.bins))
        self.branch_convs = nn.ModuleList([
            nn.Conv3d(channels, branch_ch, 1) for _ in self.bins])
        self.project = nn.Conv3d(channels + branch_ch * len(self.bins), channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = [x]
        for bin_size, conv in zip(self.bins, self.branch_convs):
            if not self.clamp_bins and any(bin_size > s for s in x.shape[2:]):
                raise ValueError(
                    f"pooling bin {bin_size} exceeds feature map {tuple(x.shape[2:])}")
            pooled = conv(adaptive_pool3d_clamped(x, bin_size))
            feats.append(F.interpolate(pooled, size=x.shape[2:],
                                       mode="trilinear", align_corners=False))
        return self.project(torch.cat(feats, dim=1))


class _Down(nn.Module):
    """In-plane stride-2 convolution; the frame axis keeps its length."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv = nn.Conv3d(in_channels, out_channels, (3, 3, 1),
                              stride=(2, 2, 1), padding=(1, 1, 0))

    def forward(self, x):
        return self.conv(x)


class _Up(nn.Module):
    """Nearest-neighbor in-plane upsample followed by a convolution."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv = nn.Conv3d(in_channels, out_channels, (3, 3, 1),
                              padding=(1, 1, 0))

    def forward(self, x):
        x = F.interpolate(x, scale_factor=(2, 2, 1), mode="nearest")
        return self.conv(x)


class SpatialMatchNet(nn.Module):
    """U-shaped 2.5D network; forward maps (B, C, X, Y, F) probabilities of
    the same spatial shape, X and Y divisible by 16."""

    def __init__(self, config: NetConfig):
        super().__init__()
        self.config = config
        c1, c2, c3, c4, c5, c6 = config.effective_channels
        dil = config.dilations
        self.down1 = _Down(config.in_channels, c1)
        self.enc1 = ResidualAtrousBlock(c1, c1, dil[0], three_d=False)
        self.down2 = _Down(c1, c2)
        self.enc2 = ResidualAtrousBlock(c2, c2, dil[1], three_d=False)
        self.down3 = _Down(c2, c3)
        self.enc3 = ResidualAtrousBlock(c3, c3, dil[2], three_d=False)
        self.down4 = _Down(c3, c4)
        self.enc4 = ResidualAtrousBlock(c4, c4, dil[3], three_d=False)
        self.deep5 = ResidualAtrousBlock(c4, c5, dil[4], three_d=True)
        self.deep6 = ResidualAtrousBlock(c5, c6, dil[5], three_d=True)
        self.ppm_mid = PyramidPooling3D(c6, config.ppm_bins)
        self.up3 = _Up(c6, c3)
        self.dec3 = ResidualAtrousBlock(2 * c3, c3, dil[2], three_d=False)
        self.up2 = _Up(c3, c2)
        self.dec2 = ResidualAtrousBlock(2 * c2, c2, dil[1], three_d=False)
        self.up1 = _Up(c2, c1)
        self.dec1 = ResidualAtrousBlock(2 * c1, c1, dil[0], three_d=False)
        self.up0 = _Up(c1, c1)
        self.dec0 = ResidualAtrousBlock(c1, c1, dil[0], three_d=False)
        self.ppm_out = PyramidPooling3D(c1, config.ppm_bins)
        self.head = nn.Conv3d(c1, 1, 1)

    def forward_logits(self, x: torch.Tensor) -> torch.Tensor:
        """Pre-sigmoid scores; the training loss uses these for gradient
        stability at extreme class imbalance."""
        if x.shape[2] % 16 or x.shape[3] % 16:
            raise ValueError(f"in-plane dims must be divisible by 16, got {tuple(x.shape)}")
        e1 = self.enc1(self.down1(x))
        e2 = self.enc2(self.down2(e1))
        e3 = self.enc3(self.down3(e2))
        e4 = self.enc4(self.down4(e3))
        b = self.ppm_mid(self.deep6(self.deep5(e4)))
        d3 = self.dec3(torch.cat([self.up3(b), e3], dim=1))
        d2 = self.dec2(torch.cat([self.up2(d3), e2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), e1], dim=1))
        d0 = self.dec0(self.up0(d1))
        return self.head(self.ppm_out(d0))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.forward_logits(x))


def build_network(config: NetConfig, seed: int = 0) -> SpatialMatchNet:
    """Construct the network with seeded, order-independent initialization."""
    torch.manual_seed(seed)
    return SpatialMatchNet(config)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
