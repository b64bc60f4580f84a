"""Hand-built phantom fixtures and independent measurement oracles."""
import numpy as np

from coroscreen.phantom import Segment, VesselTree

HALF_MAX = 200.0


def straight_tube_tree(
    radius_mm: float = 1.5,
    length_mm: float = 40.0,
    center_xy: tuple[float, float] = (31.75, 31.75),
    z_top: float = 52.0,
    point_spacing: float = 0.4,
    case_id: str = "tube",
) -> VesselTree:
    """Single straight vessel descending along -z, ostium at the top."""
    n = int(np.ceil(length_mm / point_spacing)) + 1
    z = np.linspace(z_top, z_top - length_mm, n)
    pts = np.column_stack([np.full(n, center_xy[0]), np.full(n, center_xy[1]), z])
    seg = Segment("T", None, pts, np.full(n, radius_mm), name="T")
    return VesselTree(case_id, [seg], ["T"])


def bent_tube_tree(
    radius_mm: float = 1.2,
    case_id: str = "bend",
) -> VesselTree:
    """Single vessel with a gentle circular-arc bend, ostium at the top."""
    t = np.linspace(0.0, np.pi / 2, 120)
    arc_r = 25.0
    x = 32.0 + arc_r * (1 - np.cos(t))
    z = 52.0 - arc_r * np.sin(t)
    pts = np.column_stack([x, np.full_like(x, 31.75), z])
    seg = Segment("B", None, pts, np.full(len(pts), radius_mm), name="B")
    return VesselTree(case_id, [seg], ["B"])


def branched_tree(case_id: str = "branch") -> VesselTree:
    """Trunk along -z with one child leaving midway at an oblique angle."""
    n = 101
    z = np.linspace(52.0, 22.0, n)
    trunk_pts = np.column_stack([np.full(n, 30.0), np.full(n, 31.75), z])
    trunk = Segment("trunk", None, trunk_pts, np.linspace(1.6, 1.1, n), name="trunk")
    start = trunk_pts[n // 2]
    m = 61
    s = np.linspace(0.0, 1.0, m)
    child_pts = np.column_stack([start[0] + 12.0 * s, np.full(m, 31.75), start[2] - 12.0 * s])
    child = Segment("child", "trunk", child_pts, np.linspace(1.0, 0.7, m), name="child")
    return VesselTree(case_id, [trunk, child], ["trunk"])


def fwhm_equivalent_diameter_mm(volume, z_mm: float) -> float:
    """Above-half-maximum equivalent diameter in the x-y plane nearest z_mm.

    Counts voxels >= 200 (half of the nominal 400 lumen signal) and converts
    the area to the diameter of the equal-area circle.  Independent of any
    package geometry code.
    """
    k = int(round(z_mm / volume.spacing_mm[2]))
    sl = volume.voxels[:, :, k]
    area = float(np.count_nonzero(sl >= HALF_MAX)) * volume.spacing_mm[0] * volume.spacing_mm[1]
    return 2.0 * np.sqrt(area / np.pi)


def _polyline(p0, p1, step: float = 0.4) -> np.ndarray:
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    n = max(int(np.ceil(np.linalg.norm(p1 - p0) / step)) + 1, 2)
    t = np.linspace(0.0, 1.0, n)
    return p0 + t[:, None] * (p1 - p0)


def primary_vessel_tree(case_id: str = "named") -> VesselTree:
    """Two-ostium tree: LMCA splitting into LAD (with D1) and LCx (with OM1),
    plus a separate RCA.  Left-side courses all share the LMCA root."""

    def seg(sid, parent, pts, r0, r1):
        radius = np.linspace(r0, r1, len(pts))
        return Segment(sid, parent, pts, radius, name=sid)

    lmca_pts = _polyline((32, 32, 54), (32, 32, 44))
    lad_pts = _polyline((32, 32, 44), (24, 28, 26))
    lcx_pts = _polyline((32, 32, 44), (42, 41, 30))
    d1_start = lad_pts[len(lad_pts) // 2]
    om1_start = lcx_pts[len(lcx_pts) // 2]
    segments = [
        seg("LMCA", None, lmca_pts, 1.8, 1.6),
        seg("LAD", "LMCA", lad_pts, 1.5, 0.8),
        seg("D1", "LAD", _polyline(d1_start, d1_start + (-6, 6, -7)), 0.8, 0.5),
        seg("LCx", "LMCA", lcx_pts, 1.4, 0.8),
        seg("OM1", "LCx", _polyline(om1_start, om1_start + (6, -4, -7)), 0.7, 0.45),
        seg("RCA", None, _polyline((44, 28, 54), (47, 25, 32)), 1.6, 0.9),
    ]
    tree = VesselTree(case_id, segments, ["LMCA", "RCA"])
    tree.validate()
    return tree


def slice_fwhm_diameter_texels(slice_2d: np.ndarray) -> float:
    """Above-half-maximum equivalent diameter of one cross-section, in texels."""
    area = float(np.count_nonzero(slice_2d >= HALF_MAX))
    return 2.0 * np.sqrt(area / np.pi)


def blob_centroid_offset_texels(slice_2d: np.ndarray) -> float | None:
    """Offset of the central lumen's intensity centroid from the slice center.

    Restricts the centroid to the above-half-maximum connected component
    containing the center texel so neighboring vessels inside the window do
    not contaminate the measurement.  Returns None when the center texel is
    below half maximum.
    """
    from scipy import ndimage

    w = slice_2d.shape[0]
    c = (w - 1) // 2
    mask = slice_2d >= HALF_MAX
    if not mask[c, c]:
        return None
    labels, _ = ndimage.label(mask)
    weights = np.where(labels == labels[c, c], slice_2d, 0.0)
    total = weights.sum()
    idx = np.arange(w)
    cu = (weights.sum(axis=1) * idx).sum() / total
    cv = (weights.sum(axis=0) * idx).sum() / total
    return float(max(abs(cu - (w - 1) / 2.0), abs(cv - (w - 1) / 2.0)))
