"""Train a desk-scale strut segmenter on synthetic pullbacks.

The 2.5D network downsamples in-plane only (the frame axis keeps its length
end to end), mixes 2D and 3D residual blocks with parallel atrous branches,
and pools a four-level 3D pyramid at the bottleneck and the head. The loss is
equal parts BCE and Tversky. A few hundred Adam steps on CPU are enough for
clean phantoms.

Run:  python demos/03_train_toy_segmenter.py      (about two minutes on CPU)
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from stentmap.net import NetConfig, build_network, parameter_count
from stentmap.phantom import PhantomSpec, StentPattern, generate_phantom
from stentmap.scanconv import scan_convert_labels, scan_convert_volume
from stentmap.train import TrainConfig, infer_volume, make_chunks, threshold, train

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)
torch.set_num_threads(2)

spec = PhantomSpec(frames=16, samples_per_aline=96, alines_per_frame=192,
                   lumen_radius_mm=0.55,
                   stent=StentPattern(pitch_frames=8.0, struts_per_turn=48,
                                      strut_radius_mm=0.045),
                   seed=9)
volume, stent, _ = generate_phantom(spec)
cart = scan_convert_volume(volume, 96)
cart_stent = scan_convert_labels(stent, 96)

chunks = make_chunks(cart, cart_stent, chunk_depth=4)
net_cfg = NetConfig(toy_scale=8)
model = build_network(net_cfg, seed=0)
print(f"{parameter_count(model)} parameters, {len(chunks)} training chunks")

train_cfg = TrainConfig(lr=3e-3, epochs=60, chunk_depth=4, seed=0)
checkpoint = train(model, chunks, train_cfg, log_path=OUT / "training_log.csv")
losses = [float(r["loss"]) for r in checkpoint.log if r["loss"]]

fig, ax = plt.subplots(figsize=(7, 4))
ax.plot(losses)
ax.set_xlabel("step")
ax.set_ylabel("0.5 BCE + 0.5 Tversky")
ax.set_title("toy strut segmenter training loss")
fig.tight_layout()
fig.savefig(OUT / "training_loss.png", dpi=110)
print(f"wrote {OUT / 'training_loss.png'} and {OUT / 'training_log.csv'}")

prob = infer_volume(model, cart, chunk_depth=4, stride=2)
pred = threshold(prob, train_cfg.threshold)
f = 8
fig, axes = plt.subplots(1, 3, figsize=(12, 4))
axes[0].imshow(cart.frame(f).T, cmap="gray")
axes[0].set_title("input frame")
axes[1].imshow(cart_stent.mask[:, :, f].T)
axes[1].set_title("ground truth struts")
axes[2].imshow(pred.mask[:, :, f].T)
axes[2].set_title("prediction")
for ax in axes:
    ax.set_xticks([])
    ax.set_yticks([])
fig.tight_layout()
fig.savefig(OUT / "segmentation_example.png", dpi=110)
print(f"wrote {OUT / 'segmentation_example.png'}")
