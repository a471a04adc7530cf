"""Restyle recognized strut patches with the look of missed ones.

After a first training round, struts the model found become content patches
and the missed ones become style patches. Iterative optimization against a
frozen feature extractor rewrites each content patch with the style patch's
Gram statistics, and the restyled patches are pasted back to build a harder
second-round dataset.

This demo uses the small frozen random extractor (no pretrained weights
needed); swap extractor="vgg19" in StyleTransferConfig for the classic
VGG-19 behavior when its weights are available locally.

Run:  python demos/04_patch_restyling.py
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from stentmap.styletransfer import (StyleTransferConfig, TinyFeatureExtractor,
                                    optimize_style_transfer, stylize)

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

rng = np.random.default_rng(4)

# a bright apposed-looking strut patch (content) ...
content = np.clip(rng.random((15, 15)) * 0.15, 0, 1).astype(np.float32)
content[5:10, 5:10] = 1.0

# ... and a dim, tissue-buried strut patch (style)
style = np.clip(0.35 + 0.2 * rng.standard_normal((15, 15)), 0, 1).astype(np.float32)
style[6:9, 6:9] = 0.55

cfg = StyleTransferConfig(iterations=200, seed=0)
extractor = TinyFeatureExtractor(seed=0)
restyled = stylize(content, style, cfg, extractor)
_, diag = optimize_style_transfer(content, style, cfg, extractor)
print(f"style loss: {diag['initial_style']:.3g} -> {diag['final_style']:.3g} "
      f"({diag['final_style'] / diag['initial_style']:.1%} of initial)")

fig, axes = plt.subplots(1, 3, figsize=(9, 3.2))
for ax, (img, title) in zip(axes, ((content, "content (recognized strut)"),
                                   (style, "style (missed strut)"),
                                   (restyled, "restyled content"))):
    ax.imshow(img.T, cmap="gray", vmin=0, vmax=1)
    ax.set_title(title, fontsize=10)
    ax.set_xticks([])
    ax.set_yticks([])
fig.tight_layout()
fig.savefig(OUT / "patch_restyling.png", dpi=110)
print(f"wrote {OUT / 'patch_restyling.png'}")
