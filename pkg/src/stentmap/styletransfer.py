"""Dual-layer training via neural style transfer on strut patches.

After a first training round, ground-truth struts the network found become
content patches and the ones it missed become style patches. Each content
patch is re-rendered by iterative optimization against a frozen convolutional
feature extractor (deep-feature distance to the content, Gram-matrix distance
to the style), then pasted back over its source box in a copy of the frame.
The challenged copies join the original data for a second training round.

The extractor is pluggable: a pretrained VGG-19 (torchvision, cached weights)
for real runs, or a small frozen randomly-initialized CNN that exercises the
same mechanics offline.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .metrics import extract_struts, match_struts
from .net import NetConfig, build_network
from .train import Checkpoint, TrainConfig, infer_volume, make_chunks, threshold, train
from .volume import LabelVolume, Volume

MIN_REGION_PX = 15
REGION_PAD_PX = 3


@dataclass(frozen=True)
class StyleTransferConfig:
    iterations: int = 200
    style_weight: float = 1e3
    content_weight: float = 1.0
    lr: float = 0.05
    resize: int = 256
    extractor: str = "tiny"          # "tiny" or "vgg19"
    vgg_weights_path: str | None = None
    seed: int = 0


class TinyFeatureExtractor(nn.Module):
    """Frozen random CNN standing in for VGG-19 when no weights are cached."""

    content_layer = "c3"
    style_layers = ("c1", "c2", "c3", "c4")

    def __init__(self, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.c1 = nn.Conv2d(3, 8, 3, padding=1)
        self.c2 = nn.Conv2d(8, 16, 3, padding=1)
        self.c3 = nn.Conv2d(16, 32, 3, padding=1)
        self.c4 = nn.Conv2d(32, 64, 3, padding=1)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def features(self, x: torch.Tensor) -> dict[str, torch.Tensor]:
        f1 = F.relu(self.c1(x))
        f2 = F.relu(self.c2(F.avg_pool2d(f1, 2)))
        f3 = F.relu(self.c3(F.avg_pool2d(f2, 2)))
        f4 = F.relu(self.c4(F.avg_pool2d(f3, 2)))
        return {"c1": f1, "c2": f2, "c3": f3, "c4": f4}


class Vgg19FeatureExtractor(nn.Module):
    """Gatys-style layer taps on torchvision's VGG-19 (weights fetched once
    and cached, or loaded from a local file)."""

    content_layer = "conv4_2"
    style_layers = ("conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1")
    _taps = {0: "conv1_1", 5: "conv2_1", 10: "conv3_1",
             19: "conv4_1", 21: "conv4_2", 28: "conv5_1"}

    def __init__(self, weights_path: str | None = None):
        super().__init__()
        from torchvision import models

        if weights_path:
            vgg = models.vgg19()
            vgg.load_state_dict(torch.load(weights_path, weights_only=True))
        else:
            vgg = models.vgg19(weights=models.VGG19_Weights.IMAGENET1K_V1)
        self.layers = vgg.features[:29]
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def features(self, x: torch.Tensor) -> dict[str, torch.Tensor]:
        out = {}
        for idx, layer in enumerate(self.layers):
            x = layer(x)
            if idx in self._taps:
                out[self._taps[idx]] = x
        return out


def make_extractor(config: StyleTransferConfig) -> nn.Module:
    if config.extractor == "tiny":
        return TinyFeatureExtractor(seed=config.seed)
    if config.extractor == "vgg19":
        return Vgg19FeatureExtractor(config.vgg_weights_path)
    raise ValueError(f"unknown extractor {config.extractor!r}")


def gram_matrix(feat: torch.Tensor) -> torch.Tensor:
    """Channel correlation matrix normalized by spatial size: for a constant
    feature map this is the outer product of the channel means."""
    b, c, h, w = feat.shape
    flat = feat.reshape(b, c, h * w)
    return flat @ flat.transpose(1, 2) / (h * w)


def _to_rgb_tensor(patch: np.ndarray, size: int) -> torch.Tensor:
    t = torch.from_numpy(np.ascontiguousarray(patch, dtype=np.float32))
    t = t[None, None].expand(1, 3, -1, -1)
    return F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False)


def _style_losses(feats: dict[str, torch.Tensor], grams: dict[str, torch.Tensor],
                  layers) -> torch.Tensor:
    return sum(F.mse_loss(gram_matrix(feats[l]), grams[l]) for l in layers)


def optimize_style_transfer(content: np.ndarray, style: np.ndarray,
                            config: StyleTransferConfig = StyleTransferConfig(),
                            extractor: nn.Module | None = None
                            ) -> tuple[torch.Tensor, dict[str, float]]:
    """Core Gatys-style optimization at the working resolution.

    Starts from the content patch and minimizes content-feature distance plus
    weighted Gram-matrix style distance. Returns the best iterate (as a 2D
    tensor in [0, 1]) and a diagnostics dict with initial/final loss terms.
    """
    if extractor is None:
        extractor = make_extractor(config)
    content_t = _to_rgb_tensor(content, config.resize)
    style_t = _to_rgb_tensor(style, config.resize)
    with torch.no_grad():
        target_content = extractor.features(content_t)[extractor.content_layer]
        style_grams = {l: gram_matrix(f)
                       for l, f in extractor.features(style_t).items()
                       if l in extractor.style_layers}

    x = content_t.clone().requires_grad_(True)
    optimizer = torch.optim.Adam([x], lr=config.lr)

    def loss_terms(img):
        feats = extractor.features(img)
        c = F.mse_loss(feats[extractor.content_layer], target_content)
        s = _style_losses(feats, style_grams, extractor.style_layers)
        return c, s

    def total(c, s):
        return config.content_weight * c + config.style_weight * s

    with torch.no_grad():
        c0, s0 = loss_terms(x)
        initial = float(total(c0, s0))
    best_loss = initial
    best = x.detach().clone()

    for _ in range(config.iterations):
        optimizer.zero_grad()
        c, s = loss_terms(x)
        loss = total(c, s)
        if float(loss.detach()) < best_loss:
            best_loss = float(loss.detach())
            best = x.detach().clone()
        loss.backward()
        optimizer.step()
        with torch.no_grad():
            x.clamp_(0.0, 1.0)
    with torch.no_grad():
        c, s = loss_terms(x)
        if float(total(c, s)) < best_loss:
            best_loss = float(total(c, s))
            best = x.detach().clone()

    if best_loss >= initial and config.iterations > 0:
        warnings.warn("style transfer did not reduce the loss; returning the "
                      "best iterate", RuntimeWarning)

    with torch.no_grad():
        cf, sf = loss_terms(best)
    diagnostics = {
        "initial_total": initial,
        "final_total": best_loss,
        "initial_content": float(c0), "final_content": float(cf),
        "initial_style": float(s0), "final_style": float(sf),
    }
    return best[0].mean(dim=0), diagnostics


def stylize(content: np.ndarray, style: np.ndarray,
            config: StyleTransferConfig = StyleTransferConfig(),
            extractor: nn.Module | None = None) -> np.ndarray:
    """Restyle a content patch; the result comes back at the content patch's
    original size."""
    best, _ = optimize_style_transfer(content, style, config, extractor)
    out = F.interpolate(best[None, None], size=content.shape,
                        mode="bilinear", align_corners=False)
    return out[0, 0].clamp(0.0, 1.0).numpy().astype(np.float32)


@dataclass(frozen=True)
class StrutRegion:
    """Padded bounding box around one ground-truth strut in one frame."""

    frame: int
    box: tuple[int, int, int, int]   # (x0, y0, x1, y1), half-open
    source: str                      # "content" or "style"

    def crop(self, data: np.ndarray) -> np.ndarray:
        x0, y0, x1, y1 = self.box
        return data[x0:x1, y0:y1, self.frame]


def _padded_box(xs: np.ndarray, ys: np.ndarray,
                shape: tuple[int, int]) -> tuple[int, int, int, int]:
    """Dilate the component bbox, grow it to at least MIN_REGION_PX, and
    shift it back inside the frame."""
    def axis_box(lo, hi, n):
        lo, hi = lo - REGION_PAD_PX, hi + 1 + REGION_PAD_PX
        short = MIN_REGION_PX - (hi - lo)
        if short > 0:
            lo -= short // 2
            hi += short - short // 2
        if lo < 0:
            hi -= lo
            lo = 0
        if hi > n:
            lo -= hi - n
            hi = n
        return max(lo, 0), hi

    x0, x1 = axis_box(int(xs.min()), int(xs.max()), shape[0])
    y0, y1 = axis_box(int(ys.min()), int(ys.max()), shape[1])
    return (x0, y0, x1, y1)


def harvest_regions(pred: LabelVolume, gt: LabelVolume,
                    images: Volume) -> tuple[list[StrutRegion], list[StrutRegion]]:
    """Split ground-truth struts into recognized (content) and missed (style)
    regions using the 50-µm centroid matching rule against the prediction."""
    if pred.shape != gt.shape or gt.shape != images.shape:
        raise ValueError("prediction, ground truth, and images must share a shape")
    gt_struts = extract_struts(gt)
    if not gt_struts:
        raise ValueError("ground truth has no struts to harvest")
    pred_struts = extract_struts(pred)
    counts = match_struts(pred_struts, gt_struts)
    matched_gt = {gi for _, gi, _ in counts.pairs}

    shape = (gt.shape[0], gt.shape[1])
    content, style = [], []
    for gi, strut in enumerate(gt_struts):
        box = _padded_box(strut.voxels[:, 0], strut.voxels[:, 1], shape)
        if gi in matched_gt:
            content.append(StrutRegion(strut.frame, box, "content"))
        else:
            style.append(StrutRegion(strut.frame, box, "style"))
    return content, style


def build_challenging_dataset(
        images: Volume, labels: dict[str, LabelVolume],
        content: list[StrutRegion], style: list[StrutRegion],
        config: StyleTransferConfig = StyleTransferConfig(),
        extractor: nn.Module | None = None,
        seed: int = 0) -> tuple[Volume, dict[str, LabelVolume], list[int]]:
    """Append a challenged copy of every frame that holds a content region.

    Each content region is restyled against a seeded random choice of style
    region and pasted over its own box; pixels outside content boxes and all
    labels stay untouched. Returns the merged volume, merged labels, and the
    source index of each appended frame.
    """
    if not content:
        return images, labels, []
    if not style:
        raise ValueError("need at least one style region")
    if extractor is None:
        extractor = make_extractor(config)
    rng = np.random.default_rng(seed)
    pairing = rng.integers(0, len(style), size=len(content))

    by_frame: dict[int, list[tuple[StrutRegion, StrutRegion]]] = {}
    for region, style_idx in zip(content, pairing):
        by_frame.setdefault(region.frame, []).append((region, style[style_idx]))

    affected = sorted(by_frame)
    new_frames = []
    for f in affected:
        frame = np.array(images.data[:, :, f])
        for region, style_region in by_frame[f]:
            patch = stylize(region.crop(images.data),
                            style_region.crop(images.data), config, extractor)
            x0, y0, x1, y1 = region.box
            frame[x0:x1, y0:y1] = patch
        new_frames.append(frame)

    merged = np.concatenate([images.data, np.stack(new_frames, axis=2)], axis=2)
    merged_labels = {
        target: LabelVolume(
            np.concatenate([lbl.mask, lbl.mask[:, :, affected]], axis=2),
            lbl.target, lbl.spacing)
        for target, lbl in labels.items()
    }
    return (Volume(merged, images.spacing, images.coord_system),
            merged_labels, affected)


def dual_layer_train(
        volume: Volume, stent: LabelVolume,
        net_config: NetConfig, train_config: TrainConfig,
        style_config: StyleTransferConfig = StyleTransferConfig(),
        val: tuple[Volume, LabelVolume] | None = None,
        extractor: nn.Module | None = None,
        out_dir=None) -> tuple[Checkpoint, Checkpoint]:
    """Round 1 on the original data; harvest, restyle, and retrain from the
    round-1 weights on the merged data. Returns both checkpoints.

    If round 1 already recognizes every strut (no style regions), round 2
    simply continues training on the original data.
    """
    chunks = make_chunks(volume, stent, train_config.chunk_depth)
    val_chunks = (make_chunks(val[0], val[1], train_config.chunk_depth)
                  if val is not None else None)

    model = build_network(net_config, seed=train_config.seed)
    ckpt1 = train(model, chunks, train_config, val_set=val_chunks)

    prob = infer_volume(model, volume, train_config.chunk_depth,
                        train_config.chunk_depth)
    pred = threshold(prob, train_config.threshold, target="stent")
    content, style = harvest_regions(pred, stent, volume)

    if style:
        merged_vol, merged_labels, _ = build_challenging_dataset(
            volume, {"stent": stent}, content, style, style_config, extractor,
            seed=style_config.seed)
        round2_chunks = make_chunks(merged_vol, merged_labels["stent"],
                                    train_config.chunk_depth)
    else:
        round2_chunks = chunks

    model.load_state_dict(ckpt1.state_dict)
    ckpt2 = train(model, round2_chunks, train_config, val_set=val_chunks)

    if out_dir is not None:
        out_dir = Path(out_dir)
        ckpt1.save(out_dir / "round1")
        ckpt2.save(out_dir / "round2")
    return ckpt1, ckpt2
