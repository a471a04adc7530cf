"""End-to-end runs: configuration, stage functions, artifacts, manifest.

A run directory is laid out as::

    run/
      manifest.json            inputs, config hash, seed, stage timings
      phantoms/                polar containers (train_***, val_***)
      augmented/               windowed pullbacks (polar)
      cartesian/               scan-converted cases fed to the network
      checkpoints/<target>/    round1/ (and round2/ for the stent model)
      predictions/             probability + mask containers per val case
      reports/                 metrics.txt, apposition JSON, PLY exports

Every stage is deterministic given the config seed; two runs with the same
config produce byte-identical reports and PLY files.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import augment as aug
from .apposition import (AppositionConfig, apposition_report, color_stents,
                         distance_field)
from .meshing import export_ply, lumen_mesh
from .metrics import extract_struts, match_struts, strut_metrics, voxel_metrics
from .net import NetConfig, build_network
from .phantom import (Optics, PhantomSpec, SegmentScript, Speckle, StentPattern,
                      generate_phantom)
from .scanconv import scan_convert_labels, scan_convert_volume
from .styletransfer import StyleTransferConfig, dual_layer_train, make_extractor
from .train import (Checkpoint, TrainConfig, infer_volume, make_chunks,
                    threshold, train)
from .volume import (LabelVolume, Volume, VoxelSpacing, load_case,
                     load_label_volume, save_case, save_label_volume, save_volume)

TARGETS = ("stent", "lumen")


class PipelineError(Exception):
    """A data-level failure (missing inputs, malformed artifacts)."""


DEFAULT_CONFIG = {
    "seed": 0,
    "phantom": {
        "train_count": 8,
        "val_count": 2,
        "frames": 32,
        "samples_per_aline": 128,
        "alines_per_frame": 256,
        "spacing_um": [18.0, 18.0, 200.0],
        "lumen_radius_mm": 0.6,
        "stent": {"pitch_frames": 12.0, "struts_per_turn": 72,
                  "strut_radius_mm": 0.04, "jitter": 0.2},
        "optics": {},
        "speckle": {"strength": 1.0},
    },
    "cartesian": {"out_size": 128},
    "augment": {"offsets": []},
    "net": {"toy_scale": 8},
    "train": {"epochs": 6, "chunk_depth": 8, "lr": 1e-3, "seed": 0},
    "style": {"enabled": False, "iterations": 40, "extractor": "tiny"},
    "infer": {"stride": 8},
    "apposition": {"clamp_mm": 0.3, "per_strut_uniform": False},
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None = None,
                overrides: dict | None = None) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text())
        if not isinstance(loaded, dict):
            raise PipelineError(f"config {path} is not a mapping")
        cfg = _deep_merge(cfg, loaded)
    if overrides:
        cfg = _deep_merge(cfg, overrides)
    return cfg


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


@dataclass
class RunPaths:
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    @property
    def phantoms(self) -> Path:
        return self.root / "phantoms"

    @property
    def augmented(self) -> Path:
        return self.root / "augmented"

    @property
    def cartesian(self) -> Path:
        return self.root / "cartesian"

    @property
    def checkpoints(self) -> Path:
        return self.root / "checkpoints"

    @property
    def predictions(self) -> Path:
        return self.root / "predictions"

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    def manifest(self) -> Path:
        return self.root / "manifest.json"


class Manifest:
    def __init__(self, paths: RunPaths, config: dict):
        self.paths = paths
        self.data = {"config_hash": config_hash(config),
                     "seed": config.get("seed", 0),
                     "stages": {}}

    def record(self, stage: str, seconds: float, inputs: list[str],
               outputs: list[str]) -> None:
        self.data["stages"][stage] = {
            "seconds": round(seconds, 3),
            "inputs": sorted(inputs),
            "outputs": sorted(outputs),
        }
        self.paths.root.mkdir(parents=True, exist_ok=True)
        self.paths.manifest().write_text(json.dumps(self.data, indent=2,
                                                    sort_keys=True))


def _segment_plan(rng: np.random.Generator, frames: int) -> tuple[SegmentScript, ...]:
    """Random per-pullback script: an apposed head, one malapposed run, one
    covered run, and an apposed tail."""
    quarter = frames // 4
    cut1 = int(rng.integers(quarter, 2 * quarter))
    cut2 = int(rng.integers(cut1 + quarter // 2 + 1, frames - quarter // 2))
    gap = float(rng.uniform(0.35, 0.5))
    thick = float(rng.uniform(0.33, 0.45))
    return (SegmentScript(cut1, cut2, "malapposed", round(gap, 3)),
            SegmentScript(cut2, frames, "covered", round(thick, 3)))


def phantom_spec_from_config(config: dict, index: int) -> PhantomSpec:
    p = config["phantom"]
    seed = int(config.get("seed", 0)) * 1000 + index
    rng = np.random.default_rng(seed)
    segments = (tuple(SegmentScript(*s) for s in p["segments"])
                if "segments" in p else _segment_plan(rng, p["frames"]))
    return PhantomSpec(
        frames=p["frames"],
        samples_per_aline=p["samples_per_aline"],
        alines_per_frame=p["alines_per_frame"],
        spacing=VoxelSpacing(*p["spacing_um"]),
        lumen_radius_mm=p["lumen_radius_mm"],
        stent=StentPattern(**p["stent"]),
        segments=segments,
        optics=Optics(**p["optics"]),
        speckle=Speckle(**p["speckle"]),
        seed=seed,
    )


def synth_stage(config: dict, paths: RunPaths) -> list[Path]:
    """Generate training and held-out pullbacks as polar containers."""
    p = config["phantom"]
    out = []
    for kind, count in (("train", p["train_count"]), ("val", p["val_count"])):
        for i in range(count):
            index = i if kind == "train" else 10_000 + i
            spec = phantom_spec_from_config(config, index)
            volume, stent, lumen = generate_phantom(spec)
            stem = save_case(volume, {"stent": stent, "lumen": lumen},
                             paths.phantoms / f"{kind}_{i:03d}")
            out.append(stem)
    return out


def _case_stems(directory: Path, prefix: str = "") -> list[Path]:
    """Image-container stems under ``directory`` (label/probability sidecars
    share the prefix but carry a .stent/.lumen/.prob suffix)."""
    stems = []
    for meta in sorted(directory.glob(f"{prefix}*.meta")):
        stem = meta.with_suffix("")
        if stem.suffix in (".stent", ".lumen", ".prob"):
            continue
        stems.append(stem)
    return stems


def augment_stage(config: dict, paths: RunPaths) -> list[Path]:
    """Window-shift every training pullback at the configured offsets."""
    offsets = config["augment"].get("offsets", [])
    out = []
    for stem in _case_stems(paths.phantoms, "train_"):
        volume, labels = load_case(stem)
        for offset in offsets:
            shifted, shifted_labels = aug.windowed_case(volume, labels, int(offset))
            out.append(save_case(shifted, shifted_labels,
                                 paths.augmented / f"{stem.name}_o{int(offset):04d}"))
    return out


def _cartesianize(stem: Path, out_dir: Path, out_size: int) -> Path:
    volume, labels = load_case(stem)
    cart = scan_convert_volume(volume, out_size)
    cart_labels = {t: scan_convert_labels(l, out_size) for t, l in labels.items()}
    return save_case(cart, cart_labels, out_dir / stem.name)


def cartesian_stage(config: dict, paths: RunPaths) -> list[Path]:
    out_size = config["cartesian"]["out_size"]
    stems = _case_stems(paths.phantoms) if paths.phantoms.exists() else []
    if paths.augmented.exists():
        stems += _case_stems(paths.augmented)
    if not stems:
        raise PipelineError("no pullbacks found; run synth first")
    return [_cartesianize(s, paths.cartesian, out_size) for s in stems]


def _load_split(paths: RunPaths, prefix: str) -> list[tuple[Volume, dict[str, LabelVolume]]]:
    if not paths.cartesian.exists():
        raise PipelineError(f"no {prefix} cases in {paths.cartesian}")
    cases = [load_case(s) for s in _case_stems(paths.cartesian, prefix)]
    if not cases:
        raise PipelineError(f"no {prefix} cases in {paths.cartesian}")
    return cases


def _net_config(config: dict) -> NetConfig:
    return NetConfig(**config.get("net", {}))


def _train_config(config: dict, target: str | None = None) -> TrainConfig:
    known = {k: v for k, v in config.get("train", {}).items()}
    if target is not None:
        known.update(config.get("train_overrides", {}).get(target, {}))
    known.setdefault("seed", config.get("seed", 0))
    return TrainConfig(**known)


def train_stage(config: dict, paths: RunPaths, target: str) -> Checkpoint:
    """Round-1 training for one target; the last training pullback serves as
    the checkpoint-selection split when more than one is available."""
    if target not in TARGETS:
        raise PipelineError(f"unknown target {target!r}")
    cases = _load_split(paths, "train")
    net_cfg = _net_config(config)
    train_cfg = _train_config(config, target)

    chunk_sets = [make_chunks(vol, labels[target], train_cfg.chunk_depth)
                  for vol, labels in cases]
    if len(chunk_sets) > 1:
        val_chunks = chunk_sets[-1]
        train_chunks = [c for cs in chunk_sets[:-1] for c in cs]
    else:
        val_chunks = None
        train_chunks = chunk_sets[0]

    model = build_network(net_cfg, seed=train_cfg.seed)
    ckpt = train(model, train_chunks, train_cfg, val_set=val_chunks)
    ckpt.save(paths.checkpoints / target / "round1")
    return ckpt


def style_train_stage(config: dict, paths: RunPaths) -> Checkpoint:
    """Dual-layer round for the stent model; requires stacked training cases."""
    cases = _load_split(paths, "train")
    net_cfg = _net_config(config)
    train_cfg = _train_config(config, "stent")
    s = config.get("style", {})
    style_cfg = StyleTransferConfig(
        iterations=s.get("iterations", 40),
        extractor=s.get("extractor", "tiny"),
        vgg_weights_path=s.get("vgg_weights_path"),
        seed=config.get("seed", 0),
    )

    volume = Volume(np.concatenate([v.data for v, _ in cases], axis=2),
                    cases[0][0].spacing, cases[0][0].coord_system)
    stent = LabelVolume(np.concatenate([l["stent"].mask for _, l in cases], axis=2),
                        "stent", cases[0][0].spacing)
    _, ckpt2 = dual_layer_train(volume, stent, net_cfg, train_cfg, style_cfg,
                                extractor=make_extractor(style_cfg),
                                out_dir=paths.checkpoints / "stent")
    return ckpt2


def _best_checkpoint(paths: RunPaths, target: str) -> Checkpoint:
    base = paths.checkpoints / target
    round2 = base / "round2"
    round1 = base / "round1"
    if round2.exists():
        return Checkpoint.load(round2)
    if round1.exists():
        return Checkpoint.load(round1)
    raise PipelineError(f"no checkpoint for {target} under {base}")


def infer_stage(config: dict, paths: RunPaths) -> list[Path]:
    """Segment every held-out pullback with both models; writes probability
    and mask containers."""
    if not paths.cartesian.exists():
        raise PipelineError("no val cases; run synth + cartesian stages first")
    cases = _case_stems(paths.cartesian, "val_")
    if not cases:
        raise PipelineError("no val cases; run synth + cartesian stages first")
    stride = config["infer"].get("stride", 8)
    out = []
    for target in TARGETS:
        ckpt = _best_checkpoint(paths, target)
        model = ckpt.build_model()
        for stem in cases:
            volume, _ = load_case(stem)
            prob = infer_volume(model, volume, ckpt.train_config.chunk_depth, stride)
            mask = threshold(prob, ckpt.train_config.threshold, target=target)
            pred_stem = paths.predictions / f"{stem.name}.{target}"
            save_volume(prob, pred_stem.parent / f"{pred_stem.name}.prob")
            save_label_volume(mask, pred_stem, coord_system=volume.coord_system)
            out.append(pred_stem)
    return out


def eval_case(pred_stent: LabelVolume, gt_stent: LabelVolume,
              pred_lumen: LabelVolume, gt_lumen: LabelVolume) -> dict:
    counts = match_struts(extract_struts(pred_stent), extract_struts(gt_stent))
    return {
        "strut": {"counts": {"tp": counts.tp, "fp": counts.fp, "fn": counts.fn},
                  **{k: v for k, v in strut_metrics(counts).items()}},
        "lumen": voxel_metrics(pred_lumen, gt_lumen),
    }


def _fmt(value) -> str:
    return "absent" if value is None else f"{value:.6f}"


def render_metrics_report(per_case: dict[str, dict]) -> str:
    """Stable text table: per-volume rows plus aggregate mean +/- std."""
    lines = ["strut-level (50 um centroid rule)",
             "volume\tprecision\tdice\tiou\ttp\tfp\tfn"]
    agg: dict[str, list[float]] = {"precision": [], "dice": [], "iou": []}
    for name in sorted(per_case):
        s = per_case[name]["strut"]
        lines.append(f"{name}\t{_fmt(s['precision'])}\t{_fmt(s['dice'])}\t"
                     f"{_fmt(s['iou'])}\t{s['counts']['tp']}\t{s['counts']['fp']}\t"
                     f"{s['counts']['fn']}")
        for k in agg:
            if s[k] is not None:
                agg[k].append(s[k])
    lines.append("aggregate\t" + "\t".join(
        f"{np.mean(agg[k]):.6f}+/-{np.std(agg[k]):.6f}" if agg[k] else "absent"
        for k in ("precision", "dice", "iou")))

    lines.append("")
    lines.append("lumen voxel-level")
    lines.append("volume\tprecision\trecall\tdice\tiou")
    vagg: dict[str, list[float]] = {"precision": [], "recall": [], "dice": [], "iou": []}
    for name in sorted(per_case):
        v = per_case[name]["lumen"]
        lines.append(f"{name}\t" + "\t".join(
            _fmt(v[k]) for k in ("precision", "recall", "dice", "iou")))
        for k in vagg:
            vagg[k].append(v[k])
    lines.append("aggregate\t" + "\t".join(
        f"{np.mean(vagg[k]):.6f}+/-{np.std(vagg[k]):.6f}"
        for k in ("precision", "recall", "dice", "iou")))
    return "\n".join(lines) + "\n"


def eval_stage(config: dict, paths: RunPaths) -> dict:
    if not paths.cartesian.exists() or not paths.predictions.exists():
        raise PipelineError("nothing to evaluate; run infer first")
    per_case = {}
    for stem in _case_stems(paths.cartesian, "val_"):
        _, gt = load_case(stem)
        preds = {t: load_label_volume(paths.predictions / f"{stem.name}.{t}")
                 for t in TARGETS}
        per_case[stem.name] = eval_case(preds["stent"], gt["stent"],
                                        preds["lumen"], gt["lumen"])
    if not per_case:
        raise PipelineError("no evaluated cases; run infer first")
    paths.reports.mkdir(parents=True, exist_ok=True)
    (paths.reports / "metrics.txt").write_text(render_metrics_report(per_case))
    (paths.reports / "metrics.json").write_text(
        json.dumps(per_case, indent=2, sort_keys=True))
    return per_case


def apposition_stage(config: dict, paths: RunPaths) -> list[Path]:
    """Distance-color the predicted stents against the predicted lumens and
    export PLY + JSON reports per held-out pullback."""
    a = config["apposition"]
    app_cfg = AppositionConfig(clamp_mm=a.get("clamp_mm", 0.3),
                               per_strut_uniform=a.get("per_strut_uniform", False))
    if not paths.predictions.exists():
        raise PipelineError("no predictions; run infer first")
    out = []
    for stem in _case_stems(paths.cartesian, "val_"):
        preds = {t: load_label_volume(paths.predictions / f"{stem.name}.{t}")
                 for t in TARGETS}
        if not preds["lumen"].mask.any():
            raise PipelineError(f"empty predicted lumen for {stem.name}")
        df = distance_field(preds["lumen"])
        cloud = color_stents(preds["stent"], df, app_cfg)
        report = apposition_report(preds["stent"], df, app_cfg)
        paths.reports.mkdir(parents=True, exist_ok=True)
        ply_stent = export_ply(cloud, paths.reports / f"{stem.name}.stent_colored.ply")
        ply_lumen = export_ply(lumen_mesh(preds["lumen"]),
                               paths.reports / f"{stem.name}.lumen.ply")
        report_path = paths.reports / f"{stem.name}.apposition.json"
        report_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        out += [ply_stent, ply_lumen, report_path]
    return out


_STAGES = ("synth", "augment", "cartesian", "train", "style-train",
           "infer", "eval", "dcca")


def run_pipeline(config: dict, run_dir: str | Path) -> Manifest:
    """Chain all stages into a fresh or existing run directory."""
    paths = RunPaths(Path(run_dir))
    manifest = Manifest(paths, config)

    def timed(stage, fn, inputs, outputs):
        t0 = time.perf_counter()
        result = fn()
        manifest.record(stage, time.perf_counter() - t0, inputs, outputs)
        return result

    timed("synth", lambda: synth_stage(config, paths), [], ["phantoms/"])
    timed("augment", lambda: augment_stage(config, paths), ["phantoms/"],
          ["augmented/"])
    timed("cartesian", lambda: cartesian_stage(config, paths),
          ["phantoms/", "augmented/"], ["cartesian/"])
    for target in TARGETS:
        timed(f"train-{target}", lambda t=target: train_stage(config, paths, t),
              ["cartesian/"], [f"checkpoints/{target}/round1/"])
    if config.get("style", {}).get("enabled", False):
        timed("style-train", lambda: style_train_stage(config, paths),
              ["cartesian/", "checkpoints/stent/round1/"],
              ["checkpoints/stent/round2/"])
    timed("infer", lambda: infer_stage(config, paths),
          ["cartesian/", "checkpoints/"], ["predictions/"])
    timed("eval", lambda: eval_stage(config, paths),
          ["cartesian/", "predictions/"], ["reports/metrics.txt"])
    timed("dcca", lambda: apposition_stage(config, paths),
          ["predictions/"], ["reports/"])
    return manifest
