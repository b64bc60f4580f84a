"""Centerline extraction, straightening, and ridge-tracking checks.

Oracles: analytic tube axes, brute-force tree-path enumeration, and
above-half-maximum width/centroid measurements on raw slices.
"""
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial import cKDTree

from coroscreen import geometry as geo
from coroscreen import phantom as ph
from coroscreen.phantom import PlaqueAnnotation, polyline_arc_lengths

from helpers import (
    blob_centroid_offset_texels,
    bent_tube_tree,
    primary_vessel_tree,
    slice_fwhm_diameter_texels,
    straight_tube_tree,
)

VOXEL_MM = 0.5


def _leaf_chains(tree):
    """Brute-force enumeration of every ostium-to-leaf id sequence."""
    chains = []
    parents = {s.id for s in tree.segments if tree.children_of(s.id)}
    for seg in tree.segments:
        if seg.id in parents:
            continue
        chain = [seg.id]
        cur = seg
        while cur.parent_id is not None:
            cur = tree.by_id(cur.parent_id)
            chain.insert(0, cur.id)
        chains.append(chain)
    return chains


# ---------------------------------------------------------------------------
# Ground-truth extractions
# ---------------------------------------------------------------------------

def test_shared_root_tree_yields_four_left_extractions():
    tree = primary_vessel_tree()
    exts = geo.ground_truth_extractions(tree)
    by_terminal = {e.terminal_name: e for e in exts}
    assert set(by_terminal) == {"LAD", "D1", "LCx", "OM1", "RCA"}
    left = [e for e in exts if e.path[0][0] == "LMCA"]
    assert len(left) == 4
    right = [e for e in exts if e.path[0][0] == "RCA"]
    assert len(right) >= 1
    assert by_terminal["RCA"].path == [("RCA", (0.0, pytest.approx(tree.by_id("RCA").length_mm)))]


def test_single_tube_single_extraction():
    tree = straight_tube_tree(length_mm=40.0)
    exts = geo.ground_truth_extractions(tree)
    assert len(exts) == 1
    (sid, (a, b)), = exts[0].path
    assert sid == "T" and a == 0.0
    assert b == pytest.approx(40.0, abs=1e-6)
    assert exts[0].length_mm == pytest.approx(40.0, rel=1e-3)


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4, 5])
def test_extraction_paths_cover_tree(seed):
    tree = ph.generate_tree(seed)
    exts = geo.ground_truth_extractions(tree)
    chains = _leaf_chains(tree)
    assert len(exts) >= len(chains)
    ext_id_paths = {tuple(sid for sid, _ in e.path) for e in exts}
    for chain in chains:
        assert tuple(chain) in ext_id_paths
    covered = {sid for e in exts for sid, _ in e.path}
    assert covered == {s.id for s in tree.segments}
    for e in exts:
        assert e.path[0][0] in tree.ostia
        for (pid, _), (cid, _) in zip(e.path, e.path[1:]):
            assert tree.by_id(cid).parent_id == pid


def test_extraction_step_uniform_within_one_percent():
    tree = ph.generate_tree(0)
    for e in geo.ground_truth_extractions(tree):
        steps = np.linalg.norm(np.diff(e.centerline, axis=0), axis=1)
        assert steps.max() - steps.min() <= 0.01 * steps.mean()
        assert len(e.radius_mm) == len(e.centerline)


@given(st.integers(0, 10**6), st.floats(0.3, 1.0))
def test_resample_preserves_endpoints_and_uniformity(seed, step):
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, 400)
    k = np.arange(1, 4)
    # bounded harmonic amplitudes keep curvature in the vessel-like regime
    amp = rng.uniform(-0.7, 0.7, size=(3, 3)) / k**2
    phase = rng.uniform(0.0, 2 * np.pi, size=(3, 3))
    pts = np.column_stack(
        [15.0 * t + (amp[d] * np.sin(2 * np.pi * np.outer(t, k) + phase[d])).sum(axis=1)
         for d in range(3)]
    )
    out, _ = geo.resample_polyline(pts, step)
    assert np.allclose(out[0], pts[0])
    assert np.allclose(out[-1], pts[-1])
    steps = np.linalg.norm(np.diff(out, axis=0), axis=1)
    if len(steps) > 1:
        assert steps.max() - steps.min() <= 0.02 * steps.mean()


# ---------------------------------------------------------------------------
# Straightening
# ---------------------------------------------------------------------------

def test_straight_tube_slices_identical_and_bright():
    tree = straight_tube_tree(point_spacing=0.1)
    vol = ph.rasterize_volume(tree, noise_sigma=0.0, seed=0)
    mpr = geo.straighten(vol, geo.ground_truth_extractions(tree)[0])
    assert np.allclose(mpr.samples, mpr.samples[0], atol=1.0)
    c = (mpr.samples.shape[1] - 1) // 2
    assert mpr.samples[:, c, c].min() >= 395.0


def test_plaque_slice_width_halves():
    clean = straight_tube_tree(radius_mm=1.6, length_mm=40.0, point_spacing=0.2)
    tree, placed = ph.place_plaques(clean, 1, (50.0, 50.0), seed=9, span_range_mm=(8.0, 8.0))
    assert placed[0].stenosis_pct == 50.0
    vol = ph.rasterize_volume(tree, noise_sigma=0.0, seed=0)
    mpr = geo.straighten(vol, geo.ground_truth_extractions(tree)[0])
    center_arc = 0.5 * (placed[0].span[0] + placed[0].span[1])
    ref_arc = center_arc + 12.0 if center_arc <= 20.0 else center_arc - 12.0
    ref = slice_fwhm_diameter_texels(mpr.samples[int(round(ref_arc / mpr.step_mm))])
    narrowed = slice_fwhm_diameter_texels(mpr.samples[int(round(center_arc / mpr.step_mm))])
    assert abs(narrowed - ref / 2.0) <= 1.0


def test_mpr_dims_arithmetic():
    tree = straight_tube_tree(length_mm=30.0)
    vol = ph.rasterize_volume(tree, noise_sigma=0.0, seed=0)
    mpr = geo.straighten(vol, geo.ground_truth_extractions(tree)[0], W=15, step_mm=0.5)
    assert mpr.samples.shape == (60, 15, 15)


def test_even_window_rejected():
    tree = straight_tube_tree()
    vol = ph.rasterize_volume(tree, noise_sigma=0.0, seed=0)
    with pytest.raises(geo.GeometryError):
        geo.straighten(vol, geo.ground_truth_extractions(tree)[0], W=14)


def test_extraction_outside_volume_rejected():
    tree = straight_tube_tree()
    vol = ph.rasterize_volume(tree, noise_sigma=0.0, seed=0)
    ext = geo.ground_truth_extractions(tree)[0]
    shifted = geo.Extraction(
        ext.extraction_id, ext.case_id, ext.terminal_name, ext.path,
        ext.centerline + np.array([40.0, 0.0, 0.0]), ext.radius_mm,
    )
    with pytest.raises(geo.ExtractionOutOfBounds):
        geo.straighten(vol, shifted)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_frame_continuity_under_ten_degrees(seed):
    tree = ph.generate_tree(seed)
    for e in geo.ground_truth_extractions(tree):
        assert geo.frame_rotation_angles_deg(e.centerline).max() < 10.0


def test_bent_tube_frames_and_centering():
    tree = bent_tube_tree()
    vol = ph.rasterize_volume(tree, noise_sigma=0.0, seed=0)
    ext = geo.ground_truth_extractions(tree)[0]
    assert geo.frame_rotation_angles_deg(ext.centerline).max() < 10.0
    mpr = geo.straighten(vol, ext)
    for i in range(mpr.samples.shape[0]):
        off = blob_centroid_offset_texels(mpr.samples[i])
        assert off is not None and off <= 1.0


@pytest.mark.parametrize("seed", [1, 3])
def test_slice_centroids_on_center_away_from_branches(seed):
    # Within ~5 mm of a bifurcation the departing lumen is still fused with
    # the central one above half maximum, so centering is only measurable
    # beyond that window; junction-free tubes are checked slice by slice.
    tree = ph.generate_tree(seed)
    vol = ph.rasterize_volume(tree, noise_sigma=0.0, seed=0)
    checked = 0
    for e in geo.ground_truth_extractions(tree):
        junctions, acc = [], 0.0
        for sid, (a, b) in e.path:
            for child in tree.children_of(sid):
                arc = tree.attach_arc(child)
                if a - 1e-6 <= arc <= b + 1e-6:
                    junctions.append(acc + arc - a)
            acc += b - a
        junctions = np.asarray(junctions)
        mpr = geo.straighten(vol, e)
        for i in range(mpr.samples.shape[0]):
            if junctions.size and np.min(np.abs(junctions - i * mpr.step_mm)) < 5.0:
                continue
            off = blob_centroid_offset_texels(mpr.samples[i])
            assert off is not None and off <= 1.0
            checked += 1
    assert checked > 100


# ---------------------------------------------------------------------------
# Ridge tracking
# ---------------------------------------------------------------------------

def test_track_noise_free_tube_close_to_axis():
    tree = straight_tube_tree()
    vol = ph.rasterize_volume(tree, noise_sigma=0.0, seed=0)
    exts = geo.track_centerlines(vol, geo.auto_seeds(vol))
    assert len(exts) == 1
    cl = exts[0].centerline
    interior = cl[(cl[:, 2] > 13.0) & (cl[:, 2] < 51.0)]
    axial_err = np.hypot(interior[:, 0] - 31.75, interior[:, 1] - 31.75)
    assert axial_err.mean() < 0.5 * VOXEL_MM
    assert exts[0].length_mm > 35.0


@pytest.mark.parametrize("seed", [42, 7])
def test_track_noisy_tree_reaches_leaves(seed):
    tree = ph.generate_tree(seed)
    vol = ph.rasterize_volume(tree, noise_sigma=20.0, seed=seed + 100)
    result = geo.track_tree(vol, geo.auto_seeds(vol))
    truth = cKDTree(np.vstack([s.points for s in tree.segments]))
    for e in result.extractions:
        assert truth.query(e.centerline)[0].mean() < 1.0 * VOXEL_MM
    tips = np.array([e.centerline[-1] for e in result.extractions])
    for gt in geo.ground_truth_extractions(tree):
        gap = np.linalg.norm(tips - gt.centerline[-1], axis=1).min()
        assert gap < 3.0, f"terminal {gt.terminal_name} missed by {gap:.2f} mm"


def test_seed_in_background_raises():
    tree = straight_tube_tree()
    vol = ph.rasterize_volume(tree, noise_sigma=0.0, seed=0)
    with pytest.raises(geo.SeedOutsideVessel):
        geo.track_centerlines(vol, [np.array([5.0, 5.0, 5.0])])


@pytest.mark.parametrize("seed", [3, 42])
def test_noise_free_topology_matches_ground_truth(seed):
    tree = ph.generate_tree(seed)
    vol = ph.rasterize_volume(tree, noise_sigma=0.0, seed=0)
    tracked = geo.track_centerlines(vol, geo.auto_seeds(vol))
    truth = geo.ground_truth_extractions(tree)
    assert len(tracked) == len(truth)
    tips = np.array([e.centerline[-1] for e in tracked])
    used = set()
    for gt in truth:
        dists = np.linalg.norm(tips - gt.centerline[-1], axis=1)
        order = np.argsort(dists)
        j = next(int(k) for k in order if int(k) not in used)
        used.add(j)
        assert dists[j] < 2.0


def test_tracked_extractions_satisfy_invariants():
    tree = ph.generate_tree(11)
    vol = ph.rasterize_volume(tree, noise_sigma=20.0, seed=111)
    result = geo.track_tree(vol, geo.auto_seeds(vol), case_id="case011")
    assert result.extractions
    ostia = set(result.tree.ostia)
    for e in result.extractions:
        assert e.extraction_id == f"case011.{e.terminal_name}"
        assert e.path[0][0] in ostia
        for (pid, _), (cid, _) in zip(e.path, e.path[1:]):
            assert result.tree.by_id(cid).parent_id == pid
        steps = np.linalg.norm(np.diff(e.centerline, axis=0), axis=1)
        assert steps.max() - steps.min() <= 0.01 * steps.mean()
        assert np.all(e.radius_mm > 0)


# ---------------------------------------------------------------------------
# MPR file IO
# ---------------------------------------------------------------------------

def test_mpr_file_roundtrip(tmp_path):
    samples = np.arange(5 * 7 * 7, dtype=np.float32).reshape(5, 7, 7)
    mpr = geo.StraightenedMPR("caseX.LAD", samples, 0.35, 0.5)
    jp, rp = geo.save_mpr(mpr, tmp_path / "caseX.LAD")
    back = geo.load_mpr(jp)
    assert back.extraction_id == "caseX.LAD"
    assert back.in_plane_spacing_mm == 0.35 and back.step_mm == 0.5
    assert np.array_equal(back.samples, samples)
    raw = rp.read_bytes()
    L, W = 5, 7
    i, u, v = 3, 2, 6
    offset = 4 * (i + u * L + v * L * W)  # first axis fastest
    assert struct.unpack("<f", raw[offset:offset + 4])[0] == samples[i, u, v]
