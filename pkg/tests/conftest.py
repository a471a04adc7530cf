from __future__ import annotations

import numpy as np
import pytest
import torch

from stentmap.phantom import (Optics, PhantomSpec, SegmentScript, Speckle,
                              StentPattern, generate_phantom)

# Two threads can reorder float reductions between runs on some BLAS builds;
# the determinism contracts are exercised single-threaded.
torch.set_num_threads(1)


def small_spec(seed: int = 0, frames: int = 12, **kwargs) -> PhantomSpec:
    defaults = dict(
        frames=frames,
        samples_per_aline=96,
        alines_per_frame=128,
        stent=StentPattern(pitch_frames=6.0, struts_per_turn=30,
                           strut_radius_mm=0.04),
        segments=(SegmentScript(0, frames // 2, "apposed"),
                  SegmentScript(frames // 2, frames - 2, "malapposed", 0.4)),
        speckle=Speckle(strength=0.6),
        seed=seed,
    )
    defaults.update(kwargs)
    return PhantomSpec(**defaults)


@pytest.fixture(scope="session")
def small_phantom():
    spec = small_spec()
    volume, stent, lumen = generate_phantom(spec)
    return spec, volume, stent, lumen


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
