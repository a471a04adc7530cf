"""Loss, training loop, checkpointing, and chunked volumetric inference."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .net import NetConfig, build_network
from .volume import LabelVolume, Volume


class NumericalError(RuntimeError):
    """Training hit a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 1
    chunk_depth: int = 32
    w_tversky: float = 0.5
    w_bce: float = 0.5
    tversky_alpha: float = 0.5
    tversky_beta: float = 0.5
    smooth: float = 1e-6
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if abs(self.w_tversky + self.w_bce - 1.0) > 1e-12:
            raise ValueError("loss weights must sum to 1")
        if self.tversky_alpha <= 0 or self.tversky_beta <= 0:
            raise ValueError("tversky alpha and beta must be > 0")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie strictly inside (0, 1)")


def tversky_loss(pred: torch.Tensor, gt: torch.Tensor, alpha: float = 0.5,
                 beta: float = 0.5, smooth: float = 1e-6) -> torch.Tensor:
    """1 - (sum pg) / (sum pg + alpha*sum p(1-g) + beta*sum (1-p)g), smoothed.

    With alpha = beta = 0.5 this is the soft-Dice loss.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {tuple(pred.shape)} vs {tuple(gt.shape)}")
    pg = (pred * gt).sum()
    fp = (pred * (1.0 - gt)).sum()
    fn = ((1.0 - pred) * gt).sum()
    return 1.0 - (pg + smooth) / (pg + alpha * fp + beta * fn + smooth)


def combined_loss(pred: torch.Tensor, gt: torch.Tensor,
                  config: TrainConfig) -> torch.Tensor:
    """Equal-weight BCE + Tversky by default, per the training recipe."""
    eps = 1e-7
    bce = nn.functional.binary_cross_entropy(pred.clamp(eps, 1.0 - eps), gt)
    tv = tversky_loss(pred, gt, config.tversky_alpha, config.tversky_beta,
                      config.smooth)
    return config.w_bce * bce + config.w_tversky * tv


def combined_loss_from_logits(logits: torch.Tensor, gt: torch.Tensor,
                              config: TrainConfig) -> torch.Tensor:
    """Same value as ``combined_loss(sigmoid(logits), ...)`` but with the BCE
    term evaluated from logits, whose gradient stays exact when the sigmoid
    saturates (struts occupy well under 1% of the voxels)."""
    bce = nn.functional.binary_cross_entropy_with_logits(logits, gt)
    tv = tversky_loss(torch.sigmoid(logits), gt, config.tversky_alpha,
                      config.tversky_beta, config.smooth)
    return config.w_bce * bce + config.w_tversky * tv


def soft_dice(pred: torch.Tensor, gt: torch.Tensor, smooth: float = 1e-6) -> float:
    inter = (pred * gt).sum()
    return float((2.0 * inter + smooth) / (pred.sum() + gt.sum() + smooth))


Chunk = tuple[np.ndarray, np.ndarray]   # (image, mask), both (X, Y, D)


def make_chunks(volume: Volume, label: LabelVolume,
                chunk_depth: int) -> list[Chunk]:
    """Split a pullback into non-overlapping depth chunks (remainder dropped)."""
    if volume.shape != label.shape:
        raise ValueError(f"volume/label shapes differ: {volume.shape} vs {label.shape}")
    chunks = []
    for start in range(0, volume.n_frames - chunk_depth + 1, chunk_depth):
        chunks.append((np.ascontiguousarray(volume.data[:, :, start:start + chunk_depth]),
                       np.ascontiguousarray(label.mask[:, :, start:start + chunk_depth])))
    return chunks


def _to_batch(chunks: list[Chunk]) -> tuple[torch.Tensor, torch.Tensor]:
    xs = np.stack([c[0] for c in chunks])[:, None].astype(np.float32)
    ys = np.stack([c[1] for c in chunks])[:, None].astype(np.float32)
    return torch.from_numpy(xs), torch.from_numpy(ys)


@dataclass
class Checkpoint:
    """Best-validation weights plus the configs and training log that made
    them. Loading reproduces forward outputs bitwise."""

    state_dict: dict
    net_config: NetConfig
    train_config: TrainConfig
    log: list[dict] = field(default_factory=list)

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        torch.save(self.state_dict, directory / "weights.pt")
        (directory / "config.json").write_text(json.dumps({
            "net": asdict(self.net_config),
            "train": asdict(self.train_config),
        }, indent=2, sort_keys=True))
        write_log(self.log, directory / "log.csv")
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "Checkpoint":
        directory = Path(directory)
        cfg = json.loads((directory / "config.json").read_text())
        net_kwargs = dict(cfg["net"])
        net_kwargs["dilations"] = tuple(tuple(d) for d in net_kwargs["dilations"])
        net_kwargs["channels"] = tuple(net_kwargs["channels"])
        net_kwargs["ppm_bins"] = tuple(net_kwargs["ppm_bins"])
        log = read_log(directory / "log.csv")
        return cls(torch.load(directory / "weights.pt", weights_only=True),
                   NetConfig(**net_kwargs), TrainConfig(**cfg["train"]), log)

    def build_model(self) -> nn.Module:
        model = build_network(self.net_config)
        model.load_state_dict(self.state_dict)
        model.eval()
        return model


def write_log(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "step", "loss", "val_dice"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_log(path: str | Path) -> list[dict]:
    if not Path(path).exists():
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def train(model: nn.Module, train_set: list[Chunk], config: TrainConfig,
          val_set: list[Chunk] | None = None,
          log_path: str | Path | None = None) -> Checkpoint:
    """Deterministic Adam training; keeps the best-validation weights.

    Without a validation set the lowest epoch-mean training loss wins. A
    non-finite loss aborts with a NumericalError naming the epoch and step.
    """
    if not train_set:
        raise ValueError("training set is empty")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)

    log: list[dict] = []
    best_score = -np.inf
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}

    step = 0
    for epoch in range(config.epochs):
        model.train()
        order = rng.permutation(len(train_set))
        epoch_losses = []
        for i in range(0, len(order), config.batch_size):
            batch = [train_set[j] for j in order[i:i + config.batch_size]]
            x, y = _to_batch(batch)
            optimizer.zero_grad()
            if hasattr(model, "forward_logits"):
                logits = model.forward_logits(x)
                if not torch.isfinite(logits).all():
                    raise NumericalError(
                        f"non-finite predictions at epoch {epoch}, step {step}")
                loss = combined_loss_from_logits(logits, y, config)
            else:
                pred = model(x)
                if not torch.isfinite(pred).all():
                    raise NumericalError(
                        f"non-finite predictions at epoch {epoch}, step {step}")
                loss = combined_loss(pred, y, config)
            if not torch.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, step {step}")
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.detach()))
            log.append({"epoch": epoch, "step": step,
                        "loss": f"{epoch_losses[-1]:.6f}", "val_dice": ""})
            step += 1

        if val_set is not None:
            score = validation_dice(model, val_set)
            log.append({"epoch": epoch, "step": step,
                        "loss": f"{float(np.mean(epoch_losses)):.6f}",
                        "val_dice": f"{score:.6f}"})
        else:
            score = -float(np.mean(epoch_losses))
        if score > best_score:
            best_score = score
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        if log_path is not None:
            write_log(log, log_path)

    model.load_state_dict(best_state)
    return Checkpoint(best_state, model.config, config, log)


def validation_dice(model: nn.Module, val_set: list[Chunk]) -> float:
    model.eval()
    scores = []
    with torch.no_grad():
        for chunk in val_set:
            x, y = _to_batch([chunk])
            scores.append(soft_dice(model(x), y))
    return float(np.mean(scores))


def _pad_to_multiple(data: np.ndarray, multiple: int) -> tuple[np.ndarray, tuple[int, int]]:
    nx, ny = data.shape[:2]
    px = (-nx) % multiple
    py = (-ny) % multiple
    if px or py:
        data = np.pad(data, ((0, px), (0, py), (0, 0)), mode="reflect")
    return data, (px, py)


def infer_volume(model: nn.Module, volume: Volume, chunk_depth: int = 32,
                 stride: int = 16) -> Volume:
    """Probability volume from depth-wise sliding chunks, overlaps averaged.

    Volumes shallower than one chunk are reflect-padded in depth and cropped
    back; in-plane dims are reflect-padded to a multiple of 16 if needed.
    """
    if stride > chunk_depth or stride < 1:
        raise ValueError("need 1 <= stride <= chunk_depth")
    data = volume.data
    nx, ny, nf = data.shape
    data, (px, py) = _pad_to_multiple(data, 16)

    pad_f = max(0, chunk_depth - nf)
    if pad_f:
        mode = "reflect" if nf > 1 else "edge"
        data = np.pad(data, ((0, 0), (0, 0), (0, pad_f)), mode=mode)
    depth = data.shape[2]

    starts = list(range(0, depth - chunk_depth + 1, stride))
    if starts[-1] != depth - chunk_depth:
        starts.append(depth - chunk_depth)

    acc = np.zeros(data.shape, dtype=np.float64)
    cnt = np.zeros(depth, dtype=np.float64)
    model.eval()
    with torch.no_grad():
        for s in starts:
            x = torch.from_numpy(
                np.array(data[None, None, :, :, s:s + chunk_depth]))
            prob = model(x)[0, 0].numpy()
            acc[:, :, s:s + chunk_depth] += prob
            cnt[s:s + chunk_depth] += 1.0

    out = (acc / cnt[None, None, :])[:nx, :ny, :nf]
    return Volume(np.clip(out, 0.0, 1.0).astype(np.float32),
                  volume.spacing, volume.coord_system)


def threshold(prob: Volume, tau: float, target: str = "stent") -> LabelVolume:
    """Binarize a probability volume at tau (mask = prob >= tau)."""
    return LabelVolume(prob.data >= tau, target, prob.spacing)
