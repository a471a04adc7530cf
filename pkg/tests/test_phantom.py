from __future__ import annotations

import numpy as np
import pytest

from conftest import small_spec
from oracles import brute_force_point_distances
from stentmap.metrics import extract_struts
from stentmap.phantom import (Bifurcation, Optics, PhantomSpec, SegmentScript,
                              Speckle, StentPattern, expected_apposition,
                              generate_phantom, plan_struts)
from stentmap.scanconv import scan_convert_labels
from stentmap.volume import POLAR, VoxelSpacing


def test_same_seed_is_bitwise_identical():
    v1, s1, l1 = generate_phantom(small_spec(seed=5))
    v2, s2, l2 = generate_phantom(small_spec(seed=5))
    assert v1.data.tobytes() == v2.data.tobytes()
    assert np.array_equal(s1.mask, s2.mask)
    assert np.array_equal(l1.mask, l2.mask)
    v3, _, _ = generate_phantom(small_spec(seed=6))
    assert v3.data.tobytes() != v1.data.tobytes()


def test_zero_struts_gives_empty_stent_mask():
    spec = small_spec(stent=StentPattern(struts_per_turn=0))
    _, stent, _ = generate_phantom(spec)
    assert not stent.mask.any()


def test_output_shapes_and_coord_system(small_phantom):
    spec, volume, stent, lumen = small_phantom
    expected = (spec.samples_per_aline, spec.alines_per_frame, spec.frames)
    assert volume.shape == expected
    assert volume.coord_system == POLAR
    assert stent.shape == expected and lumen.shape == expected


def test_struts_present_in_every_frame(small_phantom):
    spec, _, stent, _ = small_phantom
    per_frame = stent.mask.any(axis=(0, 1))
    assert per_frame.all()
    # around struts_per_turn / pitch_frames strut sites per frame
    sites = plan_struts(spec)
    counts = np.bincount([s.frame for s in sites], minlength=spec.frames)
    assert counts.min() >= 3 and counts.max() <= 8


def test_malapposed_struts_float_inside_lumen(small_phantom):
    spec, _, stent, lumen = small_phantom
    mal_frames = range(6, 10)
    inter = stent.mask & lumen.mask
    for f in mal_frames:
        assert inter[:, :, f].any()


def test_covered_struts_leave_lumen_untouched():
    spec = small_spec(segments=(SegmentScript(0, 12, "covered", 0.35),),
                      samples_per_aline=128)
    _, stent, lumen = generate_phantom(spec)
    assert not (stent.mask & lumen.mask).any()
    assert stent.mask.any()


def _cartesian_strut_distances(spec, stent, lumen, frames):
    """Scan-convert the masks and measure centroid distances against the
    brute-force distance oracle."""
    out_size = 96
    cart_stent = scan_convert_labels(stent, out_size)
    cart_lumen = scan_convert_labels(lumen, out_size)
    dx, dy = cart_stent.spacing.dx_um, cart_stent.spacing.dy_um
    points = []
    for strut in extract_struts(cart_stent):
        if strut.frame not in frames:
            continue
        points.append((int(round(strut.centroid_um[0] / dx)),
                       int(round(strut.centroid_um[1] / dy)),
                       strut.frame))
    return list(brute_force_point_distances(cart_lumen.mask,
                                            cart_lumen.spacing.as_um, points))


def test_apposed_strut_centroids_touch_boundary(small_phantom):
    spec, _, stent, lumen = small_phantom
    distances = _cartesian_strut_distances(spec, stent, lumen, range(0, 6))
    assert distances
    slack = spec.spacing.dx_um * np.sqrt(2) / 1000.0
    for d in distances:
        assert abs(d) <= spec.stent.strut_radius_mm + slack


def test_malapposed_strut_centroids_at_scripted_gap(small_phantom):
    spec, _, stent, lumen = small_phantom
    distances = _cartesian_strut_distances(spec, stent, lumen, range(6, 10))
    assert distances
    half_diameter = spec.stent.strut_radius_mm
    slack = spec.spacing.dx_um * np.sqrt(2) / 1000.0
    for d in distances:
        assert d > 0   # inside the lumen
        assert abs(d - 0.4) <= half_diameter + slack


def test_shadow_attenuation_behind_struts():
    spec = small_spec(speckle=Speckle(strength=0.0))
    volume, stent, _ = generate_phantom(spec)
    radii = spec.radius_profile()
    dr_mm = spec.spacing.dx_um / 1000.0
    checked = 0
    for f in range(spec.frames):
        frame = volume.data[:, :, f]
        s_mask = stent.mask[:, :, f]
        strut_cols = np.nonzero(s_mask.any(axis=0))[0]
        clear_cols = np.nonzero(~s_mask.any(axis=0))[0]
        wall_row = int(np.ceil(radii[f] / dr_mm))
        for col in strut_cols:
            exit_row = int(np.nonzero(s_mask[:, col])[0].max())
            lo = max(exit_row + 1, wall_row + 2)
            if lo >= spec.samples_per_aline - 4:
                continue
            shadowed = frame[lo:, col].mean()
            reference = frame[lo:, clear_cols].mean()
            assert shadowed <= 0.10 * reference
            checked += 1
    assert checked > 10


def test_bifurcation_sector_has_no_wall():
    spec = small_spec(
        bifurcations=(Bifurcation(2, 5, 0.5, 1.2),),
        speckle=Speckle(strength=0.0),
        stent=StentPattern(struts_per_turn=0),
    )
    volume, _, lumen = generate_phantom(spec)
    na = spec.alines_per_frame
    theta = 2 * np.pi * np.arange(na) / na
    sector = (theta >= 0.5) & (theta < 1.2)
    assert np.all(volume.data[:, sector, 3] == 0.0)
    assert np.all(lumen.mask[:, sector, 3])
    assert volume.data[:, ~sector, 3].max() > 0.3


def test_expected_apposition_reads_script():
    spec = small_spec(frames=12)
    expected = expected_apposition(spec)
    assert expected[0] == ("apposed", 0.0)
    assert expected[7] == ("malapposed", 0.4)
    assert expected[11] == ("apposed", 0.0)
    spec2 = small_spec(frames=12, segments=(SegmentScript(0, 12, "covered", 0.35),),
                       samples_per_aline=128)
    assert expected_apposition(spec2)[5] == ("covered", 0.35)


def test_spec_validation():
    with pytest.raises(ValueError, match="smaller than the lumen"):
        small_spec(stent=StentPattern(strut_radius_mm=0.7))
    with pytest.raises(ValueError, match="overlap"):
        small_spec(segments=(SegmentScript(0, 8, "apposed"),
                             SegmentScript(6, 12, "covered", 0.35)))
    with pytest.raises(ValueError, match="catheter axis"):
        small_spec(segments=(SegmentScript(0, 12, "malapposed", 0.58),))
    with pytest.raises(ValueError, match="imaging depth"):
        small_spec(segments=(SegmentScript(0, 12, "covered", 2.0),))
    with pytest.raises(ValueError, match="offset_mm"):
        SegmentScript(0, 4, "malapposed", 0.0)
    with pytest.raises(ValueError, match="exceeds frame count"):
        small_spec(segments=(SegmentScript(0, 40, "apposed"),))


def test_speckle_strength_zero_is_noise_free():
    spec = small_spec(speckle=Speckle(strength=0.0),
                      stent=StentPattern(struts_per_turn=0))
    volume, _, _ = generate_phantom(spec)
    # identical frames except for per-frame wall radius (constant here)
    assert np.array_equal(volume.data[:, :, 0], volume.data[:, :, 1])
