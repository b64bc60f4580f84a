"""Centerline extraction and straightened perpendicular reformation.

Two routes produce Extraction objects: `ground_truth_extractions` walks the
phantom tree directly (oracle mode), and `track_centerlines` follows intensity
ridges in the volume with no knowledge of the tree.  Both feed `straighten`,
which resamples the volume on rotation-minimizing frames along the centerline.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .phantom import Segment, VesselTree, Volume, polyline_arc_lengths

PRIMARY_TERMINI = ("LAD", "LCx", "RCA")

DEFAULT_W = 15
DEFAULT_IN_PLANE_MM = 0.35
DEFAULT_STEP_MM = 0.5


class GeometryError(Exception):
    pass


class SeedOutsideVessel(GeometryError):
    pass


class TrackingDiverged(GeometryError):
    pass


class ExtractionOutOfBounds(GeometryError):
    pass


@dataclass
class Extraction:
    extraction_id: str
    case_id: str
    terminal_name: str
    path: list[tuple[str, tuple[float, float]]]   # (segment_id, arc span on that segment)
    centerline: np.ndarray                        # (N, 3) mm, uniform spacing
    radius_mm: np.ndarray                         # (N,)

    def __post_init__(self):
        self.centerline = np.asarray(self.centerline, dtype=float)
        self.radius_mm = np.asarray(self.radius_mm, dtype=float)

    @property
    def length_mm(self) -> float:
        return float(polyline_arc_lengths(self.centerline)[-1])

    def to_dict(self) -> dict:
        return {
            "extraction_id": self.extraction_id,
            "case_id": self.case_id,
            "terminal_name": self.terminal_name,
            "path": [[sid, [float(a), float(b)]] for sid, (a, b) in self.path],
            "centerline": np.round(self.centerline, 6).tolist(),
            "radius_mm": np.round(self.radius_mm, 6).tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "Extraction":
        return Extraction(
            d["extraction_id"],
            d["case_id"],
            d["terminal_name"],
            [(sid, (span[0], span[1])) for sid, span in d["path"]],
            np.array(d["centerline"]),
            np.array(d["radius_mm"]),
        )


@dataclass
class StraightenedMPR:
    extraction_id: str
    samples: np.ndarray            # (L, W, W) float32
    in_plane_spacing_mm: float
    step_mm: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)


@dataclass
class TrackParams:
    threshold: float = 200.0
    step_mm: float = 0.5
    smooth_sigma_vox: float = 1.0
    max_steps: int = 600
    max_below_threshold: int = 3   # track ends after more consecutive low steps
    min_track_mm: float = 2.0
    min_component_voxels: int = 10
    min_protrusion_mm: float = 2.2
    max_segments: int = 24


@dataclass
class TrackResult:
    tree: VesselTree
    extractions: list["Extraction"]
    warnings: list[str] = field(default_factory=list)


def resample_polyline(points: np.ndarray, step_mm: float, values: np.ndarray | None = None):
    """Uniform arc-length resampling; returns (points, values) with exact-uniform steps."""
    arcs = polyline_arc_lengths(points)
    total = arcs[-1]
    n = max(int(round(total / step_mm)), 1)
    targets = np.linspace(0.0, total, n + 1)
    out = np.column_stack([np.interp(targets, arcs, points[:, k]) for k in range(3)])
    if values is None:
        return out, None
    return out, np.interp(targets, arcs, values)


# ---------------------------------------------------------------------------
# Ground-truth extraction
# ---------------------------------------------------------------------------

_FILLET_SIGMA_MM = 2.4
_FILLET_WINDOW_MM = 3.0


def _fillet_joints(pts: np.ndarray, rad: np.ndarray, joint_arcs) -> tuple[np.ndarray, np.ndarray]:
    """Round the tangent break where a course crosses into a child branch.

    Blends a smoothed copy of the polyline in near each joint only, so the
    rest of the course (and both endpoints) stays exactly on the input path.
    A hard kink would break frame continuity and chord uniformity.
    """
    joint_arcs = np.asarray(joint_arcs, dtype=float)
    if joint_arcs.size == 0 or len(pts) < 4:
        return pts, rad
    fine_step = 0.2
    fine_pts, fine_rad = resample_polyline(pts, fine_step, rad)
    if len(fine_pts) < 11:
        return pts, rad
    smoothed = np.column_stack([
        ndimage.gaussian_filter1d(fine_pts[:, k], _FILLET_SIGMA_MM / fine_step, mode="nearest")
        for k in range(3)
    ])
    arcs = polyline_arc_lengths(fine_pts)
    w = np.zeros(len(fine_pts))
    for j in joint_arcs:
        w = np.maximum(w, np.exp(-0.5 * ((arcs - j) / _FILLET_WINDOW_MM) ** 2))
    w *= np.clip(np.minimum(arcs, arcs[-1] - arcs) / (2.0 * fine_step), 0.0, 1.0)
    return fine_pts + w[:, None] * (smoothed - fine_pts), fine_rad


def _chain_to_root(tree: VesselTree, seg: Segment) -> list[Segment]:
    chain = [seg]
    while chain[0].parent_id is not None:
        chain.insert(0, tree.by_id(chain[0].parent_id))
    return chain


def _extraction_for_terminal(tree: VesselTree, terminal: Segment, step_mm: float) -> Extraction:
    chain = _chain_to_root(tree, terminal)
    path: list[tuple[str, tuple[float, float]]] = []
    pts_parts, rad_parts = [], []
    for seg, nxt in zip(chain, chain[1:] + [None]):
        if nxt is None:
            cut = len(seg.points)
            span_end = seg.length_mm
        else:
            attach = tree.attach_arc(nxt)
            cut = int(np.argmin(np.abs(seg.arcs - attach))) + 1
            span_end = float(seg.arcs[cut - 1])
        path.append((seg.id, (0.0, span_end)))
        pts, rad = seg.points[:cut], seg.radius_mm[:cut]
        if pts_parts:   # child polylines start on the parent point already emitted
            pts, rad = pts[1:], rad[1:]
        pts_parts.append(pts)
        rad_parts.append(rad)
    raw_pts = np.vstack(pts_parts)
    raw_rad = np.concatenate(rad_parts)
    # course start and tip count as joints too: tracked roots keep a slight
    # bend where they leave the ostium cap
    joints = np.concatenate([[0.0], np.cumsum([b - a for _, (a, b) in path])])
    raw_pts, raw_rad = _fillet_joints(raw_pts, raw_rad, joints)
    centerline, radius = resample_polyline(raw_pts, step_mm, raw_rad)
    name = terminal.name or terminal.id
    return Extraction(f"{tree.case_id}.{name}", tree.case_id, name, path, centerline, radius)


def ground_truth_extractions(tree: VesselTree, step_mm: float = DEFAULT_STEP_MM) -> list[Extraction]:
    """One ostium-to-terminal extraction per leaf and per named primary terminus."""
    has_children = {s.id for s in tree.segments if tree.children_of(s.id)}
    terminals = [s for s in tree.segments if s.id not in has_children]
    leaf_ids = {s.id for s in terminals}
    for s in tree.segments:
        if s.name in PRIMARY_TERMINI and s.id not in leaf_ids:
            terminals.append(s)
    terminals.sort(key=lambda s: s.id)
    return [_extraction_for_terminal(tree, t, step_mm) for t in terminals]


# ---------------------------------------------------------------------------
# Straightening
# ---------------------------------------------------------------------------

def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise GeometryError("degenerate tangent")
    return v / n


def _tangents(points: np.ndarray) -> np.ndarray:
    t = np.gradient(points, axis=0)
    norms = np.linalg.norm(t, axis=1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    return t / norms


def rotation_minimizing_frames(points: np.ndarray, tangents: np.ndarray):
    """Double-reflection frames; avoids the torsion flips of Frenet frames."""
    t0 = tangents[0]
    trial = np.eye(3)[int(np.argmin(np.abs(t0)))]
    n = _unit(trial - np.dot(trial, t0) * t0)
    normals = [n]
    for i in range(len(points) - 1):
        v1 = points[i + 1] - points[i]
        c1 = float(np.dot(v1, v1))
        if c1 < 1e-14:
            normals.append(normals[-1])
            continue
        nl = normals[-1] - (2.0 / c1) * np.dot(v1, normals[-1]) * v1
        tl = tangents[i] - (2.0 / c1) * np.dot(v1, tangents[i]) * v1
        v2 = tangents[i + 1] - tl
        c2 = float(np.dot(v2, v2))
        nn = nl if c2 < 1e-14 else nl - (2.0 / c2) * np.dot(v2, nl) * v2
        nn = nn - np.dot(nn, tangents[i + 1]) * tangents[i + 1]
        normals.append(_unit(nn))
    normals = np.array(normals)
    binormals = np.cross(tangents, normals)
    return normals, binormals


def straighten(
    volume: Volume,
    extraction: Extraction,
    W: int = DEFAULT_W,
    in_plane_spacing_mm: float = DEFAULT_IN_PLANE_MM,
    step_mm: float = DEFAULT_STEP_MM,
) -> StraightenedMPR:
    """Resample the volume on planes perpendicular to the centerline.

    Slice i sits at arc length i*step_mm; in-plane axes follow a
    rotation-minimizing frame so the vessel stays centered and untwisted.
    """
    if W % 2 != 1:
        raise GeometryError("W must be odd")
    extent = volume.extent_mm
    cl = extraction.centerline
    if np.any(cl < -1e-6) or np.any(cl > extent + 1e-6):
        raise ExtractionOutOfBounds(
            f"extraction {extraction.extraction_id} exits volume bounds"
        )
    arcs = polyline_arc_lengths(cl)
    L = max(int(np.ceil(arcs[-1] / step_mm)), 1)
    slice_arcs = np.arange(L) * step_mm
    centers = np.column_stack([np.interp(slice_arcs, arcs, cl[:, k]) for k in range(3)])
    tangents = _tangents(centers) if L > 1 else _tangents(cl[[0, -1]])[:1]
    normals, binormals = rotation_minimizing_frames(centers, tangents)

    half = (W - 1) // 2
    offs = (np.arange(W) - half) * in_plane_spacing_mm
    # positions[i, u, v] = center[i] + offs[u]*normal[i] + offs[v]*binormal[i]
    pos = (
        centers[:, None, None, :]
        + offs[None, :, None, None] * normals[:, None, None, :]
        + offs[None, None, :, None] * binormals[:, None, None, :]
    )
    coords = (pos / np.asarray(volume.spacing_mm)).reshape(-1, 3).T
    vals = ndimage.map_coordinates(volume.voxels, coords, order=1, mode="constant", cval=0.0)
    return StraightenedMPR(
        extraction.extraction_id,
        vals.reshape(L, W, W).astype(np.float32),
        in_plane_spacing_mm,
        step_mm,
    )


def frame_rotation_angles_deg(points: np.ndarray) -> np.ndarray:
    """Rotation between consecutive frames; used to verify frame continuity."""
    tangents = _tangents(points)
    normals, binormals = rotation_minimizing_frames(points, tangents)
    angles = []
    for i in range(len(points) - 1):
        r0 = np.column_stack([tangents[i], normals[i], binormals[i]])
        r1 = np.column_stack([tangents[i + 1], normals[i + 1], binormals[i + 1]])
        rel = r1 @ r0.T
        c = np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0)
        angles.append(np.degrees(np.arccos(c)))
    return np.array(angles)


# ---------------------------------------------------------------------------
# Ridge tracking
# ---------------------------------------------------------------------------

class _Field:
    """Trilinear sampling of the smoothed volume in physical coordinates."""

    def __init__(self, volume: Volume, sigma_vox: float):
        self.spacing = np.asarray(volume.spacing_mm, dtype=float)
        self.extent = volume.extent_mm
        self.data = ndimage.gaussian_filter(volume.voxels.astype(np.float32), sigma=sigma_vox)

    def sample(self, pts_mm: np.ndarray) -> np.ndarray:
        pts_mm = np.atleast_2d(pts_mm)
        coords = (pts_mm / self.spacing).T
        return ndimage.map_coordinates(self.data, coords, order=1, mode="constant", cval=0.0)

    def inside(self, p: np.ndarray, margin_mm: float = 0.5) -> bool:
        return bool(np.all(p >= margin_mm) and np.all(p <= self.extent - margin_mm))


_HESS_OFFSETS = None


def _hessian_dir(field: _Field, p: np.ndarray, h_mm: float) -> np.ndarray:
    """Ridge direction: Hessian eigenvector with the smallest |eigenvalue|."""
    e = np.eye(3) * h_mm
    pts = [p]
    for a in range(3):
        pts += [p + e[a], p - e[a]]
    for a, b in ((0, 1), (0, 2), (1, 2)):
        pts += [p + e[a] + e[b], p - e[a] - e[b], p + e[a] - e[b], p - e[a] + e[b]]
    f = field.sample(np.array(pts))
    H = np.empty((3, 3))
    for a in range(3):
        H[a, a] = (f[1 + 2 * a] + f[2 + 2 * a] - 2.0 * f[0]) / h_mm**2
    for k, (a, b) in enumerate(((0, 1), (0, 2), (1, 2))):
        i0 = 7 + 4 * k
        H[a, b] = H[b, a] = (f[i0] + f[i0 + 1] - f[i0 + 2] - f[i0 + 3]) / (4.0 * h_mm**2)
    w, v = np.linalg.eigh(H)
    return v[:, int(np.argmin(np.abs(w)))]


def _plane_basis(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    trial = np.eye(3)[int(np.argmin(np.abs(d)))]
    u = _unit(trial - np.dot(trial, d) * d)
    return u, np.cross(d, u)


def _recenter(field: _Field, p: np.ndarray, d: np.ndarray, thr: float,
              half_mm: float = 2.1, ds: float = 0.35) -> np.ndarray:
    """Pull a point to the in-plane intensity centroid of the lumen."""
    u, v = _plane_basis(d)
    g = np.arange(-half_mm, half_mm + 1e-9, ds)
    uu, vv = np.meshgrid(g, g, indexing="ij")
    pts = p + uu[..., None] * u + vv[..., None] * v
    vals = field.sample(pts.reshape(-1, 3)).reshape(uu.shape)
    w = np.clip(vals - 0.5 * thr, 0.0, None)
    total = w.sum()
    if total <= 0:
        return p
    du = float((w * uu).sum() / total)
    dv = float((w * vv).sum() / total)
    shift = du * u + dv * v
    mag = np.linalg.norm(shift)
    if mag > 0.35:
        shift *= 0.35 / mag
    return p + shift


def _radius_estimate(field: _Field, p: np.ndarray, d: np.ndarray, thr: float,
                     half_mm: float = 2.45, ds: float = 0.35) -> float:
    """Above-half-max in-plane area, restricted to the lumen blob at the center.

    The restriction keeps a neighboring vessel crossing the same plane (at a
    junction) from inflating the estimate.
    """
    u, v = _plane_basis(d)
    g = np.arange(-half_mm, half_mm + 1e-9, ds)
    uu, vv = np.meshgrid(g, g, indexing="ij")
    pts = p + uu[..., None] * u + vv[..., None] * v
    vals = field.sample(pts.reshape(-1, 3)).reshape(uu.shape)
    blob, _ = ndimage.label(vals >= thr)
    c = len(g) // 2
    lbl = blob[c, c]
    if lbl == 0:
        nz = np.argwhere(blob > 0)
        if len(nz) == 0:
            return 0.2
        lbl = blob[tuple(nz[int(np.argmin(np.abs(nz - c).sum(axis=1)))])]
    area = float(np.count_nonzero(blob == lbl)) * ds * ds
    return max(float(np.sqrt(area / np.pi)), 0.2)


def _march(field: _Field, start: np.ndarray, d0: np.ndarray, params: TrackParams,
           stop_fn=None) -> np.ndarray:
    """Follow the ridge from `start` along d0 until the signal (or stop_fn) ends it."""
    pts = [start.copy()]
    d = _unit(d0)
    below = 0
    tail: list[np.ndarray] = []
    for _ in range(params.max_steps):
        p = (tail[-1] if tail else pts[-1]) + d * params.step_mm
        if not field.inside(p):
            break
        raw = _hessian_dir(field, p, h_mm=float(np.mean(field.spacing)))
        if np.dot(raw, d) < 0:
            raw = -raw
        if np.dot(raw, d) > np.cos(np.radians(60.0)):
            d = _unit(0.7 * raw + 0.3 * d)
        p = _recenter(field, p, d, params.threshold)
        if stop_fn is not None and stop_fn(p):
            pts.append(p)
            break
        if field.sample(p)[0] >= params.threshold:
            for q in tail:
                pts.append(q)
            tail = []
            pts.append(p)
            below = 0
        else:
            below += 1
            tail.append(p)
            if below > params.max_below_threshold:
                break
    return np.array(pts)


def _initial_direction(field: _Field, p: np.ndarray) -> np.ndarray:
    return _hessian_dir(field, p, h_mm=float(np.mean(field.spacing)))


def _track_from(field: _Field, seed: np.ndarray, params: TrackParams,
                d0: np.ndarray | None = None, stop_fn=None) -> np.ndarray:
    seed = _recenter(field, seed.astype(float), _initial_direction(field, seed.astype(float)),
                     params.threshold)
    d = _unit(d0) if d0 is not None else _initial_direction(field, seed)
    fwd = _march(field, seed, d, params, stop_fn)
    # near a vessel end the seed direction is ambiguous and the backward march
    # can fall into the forward path; stop it as soon as it rejoins
    bstop = stop_fn
    if len(fwd) > 4:
        fkd = cKDTree(fwd[3:])

        def bstop(p, _base=stop_fn):
            if _base is not None and _base(p):
                return True
            return bool(fkd.query(p)[0] < 0.9 * params.step_mm)

    bwd = _march(field, seed, -d, params, bstop)
    full = np.vstack([bwd[::-1], fwd[1:]]) if len(bwd) > 1 else fwd
    return _trim_hooked_ends(full)


def _vertex_angles_deg(pts: np.ndarray) -> np.ndarray:
    d = np.diff(pts, axis=0)
    u = d / np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-12)
    dots = np.clip((u[:-1] * u[1:]).sum(axis=1), -1.0, 1.0)
    return np.degrees(np.arccos(dots))


def _trim_hooked_ends(pts: np.ndarray, max_angle: float = 30.0, max_trim: int = 6) -> np.ndarray:
    """Drop track end points that bend sharply.

    Marching into a bright vessel end cap hooks the track sideways; the hook
    survives intensity-based tail trimming because the cap is above threshold.
    """
    for _ in range(max_trim):
        if len(pts) < 5 or _vertex_angles_deg(pts[:4]).max() <= max_angle:
            break
        pts = pts[1:]
    for _ in range(max_trim):
        if len(pts) < 5 or _vertex_angles_deg(pts[-4:]).max() <= max_angle:
            break
        pts = pts[:-1]
    return pts


def _finalize_polyline(pts: np.ndarray, step_mm: float = 0.4) -> np.ndarray:
    if len(pts) < 2:
        return pts
    if len(pts) >= 7:
        # damp sub-step recentering jitter; ends stay pinned
        smoothed = np.column_stack([
            ndimage.gaussian_filter1d(pts[:, k], 1.6, mode="nearest") for k in range(3)
        ])
        ramp = np.minimum(np.arange(len(pts)), np.arange(len(pts))[::-1])
        w = np.clip(ramp / 5.0, 0.0, 1.0)[:, None]
        pts = w * smoothed + (1.0 - w) * pts
    out, _ = resample_polyline(pts, step_mm)
    return out


def auto_seeds(volume: Volume, params: TrackParams | None = None) -> list[np.ndarray]:
    """One seed per connected above-threshold component, at its superior tip.

    Vessel trees in these volumes enter from the superior side, so the highest
    voxel of each component sits at an ostium.
    """
    params = params or TrackParams()
    field = _Field(volume, params.smooth_sigma_vox)
    mask = field.data >= params.threshold
    labels, n = ndimage.label(mask)
    seeds = []
    for lbl in range(1, n + 1):
        idx = np.argwhere(labels == lbl)
        if len(idx) < 4 * params.min_component_voxels:
            continue
        zmax = idx[:, 2].max()
        top = idx[idx[:, 2] >= zmax - 1]
        seeds.append(top.mean(axis=0) * field.spacing)
    seeds.sort(key=lambda s: s[0])
    return seeds


def track_tree(volume: Volume, seeds: list, params: TrackParams | None = None,
               case_id: str = "tracked") -> TrackResult:
    """Ridge-track the whole tree: one root per seed, children from coverage gaps."""
    params = params or TrackParams()
    field = _Field(volume, params.smooth_sigma_vox)
    warnings: list[str] = []

    segments: list[Segment] = []
    ostia: list[str] = []

    def _seg_from(pts: np.ndarray, parent_id: str | None, name: str) -> Segment | None:
        pts = _finalize_polyline(pts)
        if len(pts) < 2 or polyline_arc_lengths(pts)[-1] < params.min_track_mm:
            return None
        tangs = _tangents(pts)
        radii = np.array([
            _radius_estimate(field, p, t, params.threshold) for p, t in zip(pts, tangs)
        ])
        return Segment(name, parent_id, pts, radii, name=name)

    for si, seed in enumerate(seeds):
        seed = np.asarray(seed, dtype=float)
        if field.sample(seed)[0] < params.threshold:
            raise SeedOutsideVessel(f"seed {seed.round(2).tolist()} below threshold")
        pts = _track_from(field, seed, params)
        if len(pts) < 2 or polyline_arc_lengths(pts)[-1] < params.min_track_mm:
            raise TrackingDiverged(f"ridge lost near seed {seed.round(2).tolist()}")
        # root runs ostium -> distal; the ostium end sits superior in this
        # geometry.  Cut at the superior apex: marching up into the bright end
        # cap hooks the track around it, and that wrap must not survive.
        k = int(np.argmax(pts[:, 2]))
        arcs = polyline_arc_lengths(pts)
        pts = pts[k:] if arcs[-1] - arcs[k] >= arcs[k] else pts[: k + 1][::-1]
        # the first steps out of the cap still bend with it; start below it
        # when the track is long enough to afford that
        arcs = polyline_arc_lengths(pts)
        if arcs[-1] - 1.5 >= params.min_track_mm:
            pts = pts[np.searchsorted(arcs, 1.5):]
        if len(pts) < 2 or polyline_arc_lengths(pts)[-1] < params.min_track_mm:
            raise TrackingDiverged(f"ridge lost near seed {seed.round(2).tolist()}")
        seg = _seg_from(pts, None, f"T{len(segments)}")
        if seg is None:
            raise TrackingDiverged(f"ridge lost near seed {seed.round(2).tolist()}")
        segments.append(seg)
        ostia.append(seg.id)

    mask = field.data >= params.threshold
    vox_idx = np.argwhere(mask)
    vox_mm = vox_idx * field.spacing
    tried_seeds: set[tuple] = set()

    for _ in range(4 * params.max_segments):
        if not segments or len(segments) >= params.max_segments:
            break
        all_pts = np.vstack([s.points for s in segments])
        all_rad = np.concatenate([s.radius_mm for s in segments])
        tree_kd = cKDTree(all_pts)
        dist, nearest = tree_kd.query(vox_mm)
        cover = np.minimum(all_rad[nearest], 2.0) + 0.8 * float(np.mean(field.spacing))
        uncovered = dist > cover
        # the bright end cap above each root start is not a branch
        root_starts = np.array([s.points[0] for s in segments if s.parent_id is None])
        if len(root_starts):
            dstart, _ = cKDTree(root_starts).query(vox_mm)
            uncovered &= dstart > 3.0
        gap = np.zeros(mask.shape, dtype=bool)
        gap[tuple(vox_idx[uncovered].T)] = True
        gap_dist = np.zeros(mask.shape)
        gap_dist[tuple(vox_idx[uncovered].T)] = dist[uncovered]
        labels, n = ndimage.label(gap)
        if n == 0:
            break
        sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, n + 1))
        order = np.argsort(-sizes)
        progressed = False
        for oi in order:
            if sizes[oi] < params.min_component_voxels:
                continue
            comp_idx = np.argwhere(labels == oi + 1)
            comp = comp_idx * field.spacing
            comp_dist = gap_dist[tuple(comp_idx.T)]
            far = float(comp_dist.max())
            if far < params.min_protrusion_mm:   # junction-corner fuzz, not a branch
                continue
            # seed on the proximal side of the gap so one march direction can
            # reach the existing tree and give a short attachment; if those
            # candidates keep failing, creep outward through the component
            lo = max(1.2, 0.4 * far)
            in_band = np.where((comp_dist >= lo) & (comp_dist <= lo + 2.0))[0]
            beyond = np.where(comp_dist >= lo)[0]
            pools = [
                in_band[np.argsort(-field.sample(comp[in_band]))],
                beyond[np.argsort(comp_dist[beyond])],
            ]
            child_seed = None
            for pool in pools:
                for ci in pool:
                    key = tuple(np.round(comp[ci], 1))
                    if key in tried_seeds:
                        continue
                    tried_seeds.add(key)
                    if field.sample(comp[ci])[0] < params.threshold:
                        continue
                    child_seed = comp[ci]
                    break
                if child_seed is not None:
                    break
            if child_seed is None:
                msg = (
                    f"partial extraction: branch near "
                    f"{np.round(comp.mean(axis=0), 1).tolist()} could not be attached"
                )
                if msg not in warnings:
                    warnings.append(msg)
                continue
            progressed = True

            def _reaches_tree(p):
                dd, ii = tree_kd.query(p)
                return dd <= min(all_rad[ii], 2.0) + float(np.mean(field.spacing))

            pts = _track_from(field, child_seed, params, stop_fn=_reaches_tree)
            if len(pts) < 2 or polyline_arc_lengths(pts)[-1] < params.min_track_mm:
                continue
            d0, _ = tree_kd.query(pts[0])
            d1, _ = tree_kd.query(pts[-1])
            if d1 < d0:
                pts = pts[::-1]
            gap_d, gap_i = tree_kd.query(pts[0])
            if gap_d > 3.5:
                continue
            attach = all_pts[gap_i]
            # locate the parent segment owning the attachment point
            off = 0
            parent_seg = segments[0]
            for s in segments:
                if gap_i < off + len(s.points):
                    parent_seg = s
                    break
                off += len(s.points)
            if gap_d > 1e-6:
                n_fill = max(int(np.ceil(gap_d / 0.4)), 1)
                fill = attach + (pts[0] - attach) * np.linspace(0, 1, n_fill + 1)[:, None]
                pts = np.vstack([fill[:-1], pts])
            seg = _seg_from(pts, parent_seg.id, f"T{len(segments)}")
            if seg is None:
                continue
            seg.points[0] = attach   # exact parent-point start
            segments.append(seg)
            break
        if not progressed:
            break

    tree = VesselTree(case_id, segments, ostia)
    tree.validate()
    # every track tip is a vessel terminus unless the track dead-ends into its
    # own children (a junction stub with no distal continuation)
    extractions = []
    for s in segments:
        children = tree.children_of(s.id)
        if children:
            last_attach = max(tree.attach_arc(c) for c in children)
            tip_to_child = min(
                float(np.linalg.norm(s.points[-1] - c.points[0])) for c in children
            )
            if s.length_mm - last_attach < 2.0 and tip_to_child < 2.5:
                continue
        extractions.append(_extraction_for_terminal(tree, s, DEFAULT_STEP_MM))
    extractions.sort(key=lambda e: e.extraction_id)
    return TrackResult(tree, extractions, warnings)


def track_centerlines(volume: Volume, seeds: list, params: TrackParams | None = None,
                      case_id: str = "tracked") -> list[Extraction]:
    """Extraction list from ridge tracking; see track_tree for the full result."""
    return track_tree(volume, seeds, params, case_id).extractions


# ---------------------------------------------------------------------------
# MPR file IO (same header convention as volumes)
# ---------------------------------------------------------------------------

def save_mpr(mpr: StraightenedMPR, base: str | Path) -> tuple[Path, Path]:
    base = Path(base)
    header = {
        "dims": list(mpr.samples.shape),
        "spacing_mm": [mpr.step_mm, mpr.in_plane_spacing_mm, mpr.in_plane_spacing_mm],
        "dtype": "f32le",
        "offset_bytes": 0,
        "extraction_id": mpr.extraction_id,
    }
    jp = Path(str(base) + ".mpr.json")
    rp = Path(str(base) + ".mpr.raw")
    jp.write_text(json.dumps(header, sort_keys=True, indent=1))
    rp.write_bytes(np.ascontiguousarray(mpr.samples.T.astype("<f4")).tobytes())
    return jp, rp


def load_mpr(json_path: str | Path) -> StraightenedMPR:
    json_path = Path(json_path)
    header = json.loads(json_path.read_text())
    dims = tuple(int(d) for d in header["dims"])
    raw = Path(str(json_path)[: -len(".mpr.json")] + ".mpr.raw").read_bytes()
    arr = np.frombuffer(raw, dtype="<f4").reshape(dims[::-1]).T
    return StraightenedMPR(
        header.get("extraction_id", ""),
        np.ascontiguousarray(arr),
        float(header["spacing_mm"][1]),
        float(header["spacing_mm"][0]),
    )
