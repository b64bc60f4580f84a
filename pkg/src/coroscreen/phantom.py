"""Synthetic coronary phantoms: parametric vessel trees, plaques, and rasterized volumes.

Every downstream stage (centerline tracking, straightening, mosaic views,
classification, evaluation) is exercised against these phantoms, so the tree
carries exact ground truth: per-segment polylines, lumen radius profiles, and
plaque annotations.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

VESSEL_INTENSITY = 400.0
OBSTRUCTIVE_THRESHOLD_PCT = 50.0

NON_OBSTRUCTIVE = "NonObstructive"
OBSTRUCTIVE = "Obstructive"

CLASS_NORMAL = "Normal"
CLASS_NON_OBSTRUCTIVE = "DiseasedNonObstructive"
CLASS_OBSTRUCTIVE = "DiseasedObstructive"


class PhantomError(Exception):
    pass


class UnknownTemplateError(PhantomError):
    pass


class TreeOutOfBoundsError(PhantomError):
    pass


class PlaquePlacementError(PhantomError):
    pass


def grade_of(stenosis_pct: float) -> str:
    """Stenosis grade under the >= 50% diameter-reduction rule."""
    return OBSTRUCTIVE if stenosis_pct >= OBSTRUCTIVE_THRESHOLD_PCT else NON_OBSTRUCTIVE


def polyline_arc_lengths(points: np.ndarray) -> np.ndarray:
    """Cumulative arc length (mm) at each polyline vertex, starting at 0."""
    deltas = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(deltas)])


@dataclass
class Segment:
    id: str
    parent_id: str | None
    points: np.ndarray      # (N, 3) mm
    radius_mm: np.ndarray   # (N,) lumen radius at each vertex
    name: str = ""

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.radius_mm = np.asarray(self.radius_mm, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise PhantomError(f"segment {self.id}: points must be (N, 3)")
        if len(self.points) < 2:
            raise PhantomError(f"segment {self.id}: needs >= 2 points")
        if len(self.radius_mm) != len(self.points):
            raise PhantomError(f"segment {self.id}: radius/point count mismatch")

    @property
    def arcs(self) -> np.ndarray:
        return polyline_arc_lengths(self.points)

    @property
    def length_mm(self) -> float:
        return float(self.arcs[-1])

    def radius_at(self, arc: float | np.ndarray) -> float | np.ndarray:
        return np.interp(arc, self.arcs, self.radius_mm)

    def point_at(self, arc: float) -> np.ndarray:
        arcs = self.arcs
        return np.array([np.interp(arc, arcs, self.points[:, k]) for k in range(3)])


@dataclass
class PlaqueAnnotation:
    segment_id: str
    span: tuple[float, float]   # arc-length interval within the segment (mm)
    stenosis_pct: float

    @property
    def grade(self) -> str:
        return grade_of(self.stenosis_pct)

    def to_dict(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "span": [float(self.span[0]), float(self.span[1])],
            "stenosis_pct": float(self.stenosis_pct),
            "grade": self.grade,
        }

    @staticmethod
    def from_dict(d: dict) -> "PlaqueAnnotation":
        return PlaqueAnnotation(d["segment_id"], (d["span"][0], d["span"][1]), d["stenosis_pct"])


@dataclass
class VesselTree:
    case_id: str
    segments: list[Segment]
    ostia: list[str]
    plaques: list[PlaqueAnnotation] = field(default_factory=list)

    def by_id(self, segment_id: str) -> Segment:
        for seg in self.segments:
            if seg.id == segment_id:
                return seg
        raise KeyError(f"unknown segment id {segment_id!r}")

    def children_of(self, segment_id: str) -> list[Segment]:
        return [s for s in self.segments if s.parent_id == segment_id]

    def attach_arc(self, child: Segment) -> float:
        """Arc position on the parent polyline where `child` branches off."""
        parent = self.by_id(child.parent_id)
        d = np.linalg.norm(parent.points - child.points[0], axis=1)
        return float(parent.arcs[int(np.argmin(d))])

    def plaques_on(self, segment_id: str) -> list[PlaqueAnnotation]:
        return [p for p in self.plaques if p.segment_id == segment_id]

    @property
    def max_stenosis_pct(self) -> float:
        return max((p.stenosis_pct for p in self.plaques), default=0.0)

    @property
    def case_class(self) -> str:
        if not self.plaques:
            return CLASS_NORMAL
        if self.max_stenosis_pct >= OBSTRUCTIVE_THRESHOLD_PCT:
            return CLASS_OBSTRUCTIVE
        return CLASS_NON_OBSTRUCTIVE

    def validate(self) -> None:
        """Raise PhantomError on any structural invariant violation."""
        ids = [s.id for s in self.segments]
        if len(set(ids)) != len(ids):
            raise PhantomError("duplicate segment ids")
        for ostium in self.ostia:
            root = self.by_id(ostium)
            if root.parent_id is not None:
                raise PhantomError(f"ostium {ostium} has a parent")
        for seg in self.segments:
            if np.any(seg.radius_mm <= 0):
                raise PhantomError(f"segment {seg.id}: non-positive radius")
            step = np.linalg.norm(np.diff(seg.points, axis=0), axis=1)
            if np.any(step > 0.5 + 1e-9):
                raise PhantomError(f"segment {seg.id}: point spacing > 0.5 mm")
            if seg.parent_id is not None:
                parent = self.by_id(seg.parent_id)
                d = np.min(np.linalg.norm(parent.points - seg.points[0], axis=1))
                if d > 1e-6:
                    raise PhantomError(f"segment {seg.id}: does not start on parent")
        # no cycles: every segment must reach a root by parent links
        for seg in self.segments:
            seen, cur = set(), seg
            while cur.parent_id is not None:
                if cur.id in seen:
                    raise PhantomError("parent links contain a cycle")
                seen.add(cur.id)
                cur = self.by_id(cur.parent_id)
            if cur.id not in self.ostia:
                raise PhantomError(f"segment {seg.id}: root {cur.id} is not an ostium")
        for p in self.plaques:
            seg = self.by_id(p.segment_id)
            if not (0.0 <= p.span[0] < p.span[1] <= seg.length_mm + 1e-9):
                raise PhantomError(f"plaque span {p.span} outside segment {seg.id}")

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "ostia": list(self.ostia),
            "case_class": self.case_class,
            "segments": [
                {
                    "id": s.id,
                    "parent_id": s.parent_id,
                    "name": s.name,
                    "points": np.round(s.points, 6).tolist(),
                    "radius_mm": np.round(s.radius_mm, 6).tolist(),
                }
                for s in self.segments
            ],
            "plaques": [p.to_dict() for p in self.plaques],
        }

    @staticmethod
    def from_dict(d: dict) -> "VesselTree":
        segs = [
            Segment(s["id"], s["parent_id"], np.array(s["points"]), np.array(s["radius_mm"]), s.get("name", ""))
            for s in d["segments"]
        ]
        plaques = [PlaqueAnnotation.from_dict(p) for p in d.get("plaques", [])]
        return VesselTree(d["case_id"], segs, list(d["ostia"]), plaques)


@dataclass
class Volume:
    voxels: np.ndarray            # (nx, ny, nz) float32, indexed [x, y, z]
    spacing_mm: tuple[float, float, float]

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels, dtype=np.float32)
        if self.voxels.ndim != 3:
            raise PhantomError("volume must be 3-D")
        if min(self.voxels.shape) < 32:
            raise PhantomError("volume dims must be >= 32 per axis")
        if min(self.spacing_mm) <= 0:
            raise PhantomError("spacing must be positive")
        if not np.all(np.isfinite(self.voxels)):
            raise PhantomError("volume contains non-finite intensities")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape

    @property
    def extent_mm(self) -> np.ndarray:
        """Physical position of the last voxel center along each axis."""
        return (np.array(self.dims) - 1) * np.array(self.spacing_mm)


@dataclass
class CohortSpec:
    n_cases: int
    prevalence: float
    obstructive_fraction: float
    seed: int
    noise_sigma: float = 20.0

    def __post_init__(self):
        if self.n_cases < 0:
            raise PhantomError("n_cases must be >= 0")
        if not (0.0 <= self.prevalence <= 1.0):
            raise PhantomError("prevalence must be in [0, 1]")
        if not (0.0 <= self.obstructive_fraction <= 1.0):
            raise PhantomError("obstructive_fraction must be in [0, 1]")


@dataclass
class CaseRecord:
    case_id: str
    tree: VesselTree
    annotations: list[PlaqueAnnotation]
    volume: Volume


# ---------------------------------------------------------------------------
# Tree generation
# ---------------------------------------------------------------------------

# Template control polygons (mm) inside a 60 mm cube; offsets are relative to
# the segment start.  attach: arc fraction along the parent (1.0 = parent end).
# Ostia sit superior (max z) so a tracked tree can be oriented without truth.
_STANDARD_TEMPLATE = {
    "LMCA": dict(parent=None, start=(30, 34, 54),
                 offsets=[(0, 0, 0), (-3, 2, -3), (-6, 3, -7)], r=(1.95, 1.85)),
    "LAD": dict(parent="LMCA", attach=1.0,
                offsets=[(0, 0, 0), (-2, 4, -6), (-3, 6, -13), (-2, 6, -21), (1, 4, -29), (4, 1, -35)],
                r=(1.70, 0.95)),
    "D1": dict(parent="LAD", attach=0.30,
               offsets=[(0, 0, 0), (-5, 1, -4), (-10, 0, -8)], r=(1.10, 0.70)),
    "D2": dict(parent="LAD", attach=0.62,
               offsets=[(0, 0, 0), (-5, -1, -4), (-9, -3, -9)], r=(1.00, 0.65)),
    "LCx": dict(parent="LMCA", attach=1.0,
                offsets=[(0, 0, 0), (-5, -3, -5), (-8, -8, -11), (-9, -14, -17)], r=(1.45, 0.85)),
    "OM1": dict(parent="LCx", attach=0.50,
                offsets=[(0, 0, 0), (-5, 2, -4), (-9, 3, -9)], r=(1.05, 0.70)),
    "RI": dict(parent="LMCA", attach=1.0, optional=True,
               offsets=[(0, 0, 0), (-6, 2, -2), (-11, 4, -5)], r=(1.00, 0.65)),
    "RCA": dict(parent=None, start=(38, 30, 54),
                offsets=[(0, 0, 0), (4, 4, -6), (9, 4, -13), (12, 1, -21), (12, -4, -29), (9, -8, -36)],
                r=(1.80, 1.00)),
    "PDA": dict(parent="RCA", attach=0.85,
                offsets=[(0, 0, 0), (-6, 1, -2), (-13, 1, -3)], r=(1.05, 0.70)),
}

TEMPLATES = {"standard-left-right": _STANDARD_TEMPLATE}

_POINT_SPACING_MM = 0.35
_MAX_CURVATURE_PER_MM = 0.2    # radius of curvature >= 5 mm >> max lumen radius


def _spline_resample(ctrl: np.ndarray, ds: float) -> np.ndarray:
    """Cubic-spline interpolation of a control polygon, resampled at ds (mm)."""
    t = polyline_arc_lengths(ctrl)
    if t[-1] <= 0:
        raise PhantomError("degenerate control polygon")
    spline = CubicSpline(t, ctrl, bc_type="natural", axis=0)
    dense = spline(np.linspace(0.0, t[-1], max(int(t[-1] / 0.05), 8)))
    arcs = polyline_arc_lengths(dense)
    n = max(int(np.ceil(arcs[-1] / ds)), 2)
    targets = np.linspace(0.0, arcs[-1], n + 1)
    return np.column_stack([np.interp(targets, arcs, dense[:, k]) for k in range(3)])


def _max_curvature(points: np.ndarray) -> float:
    v = np.diff(points, axis=0)
    lens = np.linalg.norm(v, axis=1)
    u = v / lens[:, None]
    dots = np.clip(np.sum(u[:-1] * u[1:], axis=1), -1.0, 1.0)
    angles = np.arccos(dots)
    mean_step = 0.5 * (lens[:-1] + lens[1:])
    return float(np.max(angles / mean_step)) if len(angles) else 0.0


def generate_tree(seed: int, template: str = "standard-left-right") -> VesselTree:
    """Build a randomized coronary tree from a named topology template.

    Deterministic for a given (seed, template).  Interior control points are
    jittered, branch attachment fractions wobble slightly, and radius profiles
    taper linearly within each segment.
    """
    if template not in TEMPLATES:
        raise UnknownTemplateError(f"unknown topology template {template!r}")
    layout = TEMPLATES[template]
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 0x7EE5]))

    jitter_scale = 1.0
    for _ in range(8):   # retry with shrinking jitter if the curvature cap trips
        segments: dict[str, Segment] = {}
        ok = True
        for name, cfg in layout.items():
            if cfg.get("optional") and rng.random() < 0.5:
                continue
            offsets = np.array(cfg["offsets"], dtype=float)
            jitter = rng.normal(0.0, jitter_scale, size=offsets.shape).clip(-2.0, 2.0)
            jitter[0] = 0.0
            parent_name = cfg["parent"]
            if parent_name is None:
                start = np.array(cfg["start"], dtype=float) + rng.normal(0, 0.8, 3).clip(-1.5, 1.5)
                parent_r = None
            else:
                if parent_name not in segments:
                    ok = False
                    break
                parent = segments[parent_name]
                frac = cfg["attach"]
                if frac < 1.0:
                    frac = float(np.clip(frac + rng.uniform(-0.05, 0.05), 0.15, 0.95))
                arcs = parent.arcs
                idx = int(np.argmin(np.abs(arcs - frac * arcs[-1])))
                start = parent.points[idx].copy()
                parent_r = float(parent.radius_mm[idx])
            ctrl = start + offsets + jitter
            points = _spline_resample(ctrl, _POINT_SPACING_MM)
            if _max_curvature(points) > _MAX_CURVATURE_PER_MM:
                ok = False
                break
            r0, r1 = cfg["r"]
            scale = rng.uniform(0.92, 1.08)
            r0, r1 = r0 * scale, r1 * scale
            if parent_r is not None:
                r0 = min(r0, 0.85 * parent_r)
                r1 = min(r1, 0.92 * r0)
            arcs = polyline_arc_lengths(points)
            radius = r0 + (r1 - r0) * arcs / arcs[-1]
            segments[name] = Segment(name, cfg["parent"], points, radius, name=name)
        if ok:
            break
        jitter_scale *= 0.5
    else:
        raise PhantomError("could not generate a curvature-feasible tree")

    ostia = [n for n, c in layout.items() if c["parent"] is None and n in segments]
    tree = VesselTree(case_id=f"seed{seed}", segments=list(segments.values()), ostia=ostia)
    tree.validate()
    return tree


# ---------------------------------------------------------------------------
# Plaque placement
# ---------------------------------------------------------------------------

_SPAN_END_MARGIN_MM = 1.0
_SPAN_GAP_MM = 1.5


def _narrow_radius(seg: Segment, span: tuple[float, float], stenosis_pct: float) -> np.ndarray:
    """Radius profile with a smooth focal narrowing over `span`.

    The dip is a raised-cosine bump: zero at the span ends, full depth at the
    center, so the minimum diameter there equals reference * (1 - pct/100).
    """
    arcs = seg.arcs
    a, b = span
    inside = (arcs >= a) & (arcs <= b)
    w = np.zeros_like(arcs)
    w[inside] = np.sin(np.pi * (arcs[inside] - a) / (b - a)) ** 2
    return seg.radius_mm * (1.0 - (stenosis_pct / 100.0) * w)


def place_plaques(
    tree: VesselTree,
    count: int,
    stenosis_range: tuple[float, float],
    seed: int,
    span_range_mm: tuple[float, float] = (3.0, 8.0),
) -> tuple[VesselTree, list[PlaqueAnnotation]]:
    """Place `count` non-overlapping focal stenoses on a copy of the tree.

    Returns the narrowed tree (original untouched) and the new annotations;
    annotations already present on the input tree are preserved and avoided.
    """
    lo, hi = stenosis_range
    if count < 0:
        raise PhantomError("count must be >= 0")
    if not (1.0 <= lo <= hi <= 99.0):
        raise PhantomError("stenosis range must satisfy 1 <= lo <= hi <= 99")
    new_tree = VesselTree(
        tree.case_id,
        [replace(s, points=s.points.copy(), radius_mm=s.radius_mm.copy()) for s in tree.segments],
        list(tree.ostia),
        list(tree.plaques),
    )
    if count == 0:
        return new_tree, []

    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 0xB1A9]))
    placed: list[PlaqueAnnotation] = []
    attempts = 0
    while len(placed) < count:
        attempts += 1
        if attempts > 300 * count:
            raise PlaquePlacementError(
                f"could not place {count} non-overlapping plaques (placed {len(placed)})"
            )
        lengths = np.array([s.length_mm for s in new_tree.segments])
        weights = lengths / lengths.sum()
        seg = new_tree.segments[int(rng.choice(len(new_tree.segments), p=weights))]
        max_span = min(span_range_mm[1], seg.length_mm - 2 * _SPAN_END_MARGIN_MM)
        if max_span < max(2.0, span_range_mm[0]):
            continue
        span_len = float(rng.uniform(max(2.0, span_range_mm[0]), max_span))
        start = float(rng.uniform(_SPAN_END_MARGIN_MM, seg.length_mm - _SPAN_END_MARGIN_MM - span_len))
        span = (start, start + span_len)
        occupied = [p.span for p in new_tree.plaques if p.segment_id == seg.id]
        if any(span[0] < b + _SPAN_GAP_MM and a - _SPAN_GAP_MM < span[1] for a, b in occupied):
            continue
        stenosis = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
        plaque = PlaqueAnnotation(seg.id, span, stenosis)
        seg.radius_mm = _narrow_radius(seg, span, stenosis)
        new_tree.plaques.append(plaque)
        placed.append(plaque)
    return new_tree, placed


# ---------------------------------------------------------------------------
# Rasterization
# ---------------------------------------------------------------------------

def rasterize_volume(
    tree: VesselTree,
    dims: tuple[int, int, int] = (128, 128, 128),
    spacing_mm: tuple[float, float, float] = (0.5, 0.5, 0.5),
    noise_sigma: float = 20.0,
    seed: int = 0,
) -> Volume:
    """Voxelize the tree: lumen signal 400 with a 1-voxel falloff, plus noise.

    Intensity ramps linearly from 400 inside the lumen to 0 across one mean
    voxel width centered on the lumen surface, so the half-maximum contour
    sits exactly at the reference diameter.
    """
    dims = tuple(int(d) for d in dims)
    spacing = np.asarray(spacing_mm, dtype=float)
    falloff = float(np.mean(spacing))
    extent = (np.array(dims) - 1) * spacing

    surface = np.full(dims, np.inf, dtype=np.float32)
    for seg in tree.segments:
        for p, r in zip(seg.points, seg.radius_mm):
            reach = r + falloff
            if np.any(p - reach < -0.25 * spacing) or np.any(p + reach > extent + 0.25 * spacing):
                raise TreeOutOfBoundsError(
                    f"segment {seg.id} exceeds volume extent {extent} mm"
                )
            i0 = np.maximum(np.floor((p - reach) / spacing).astype(int), 0)
            i1 = np.minimum(np.ceil((p + reach) / spacing).astype(int) + 1, dims)
            ax = (np.arange(i0[0], i1[0]) * spacing[0] - p[0]) ** 2
            ay = (np.arange(i0[1], i1[1]) * spacing[1] - p[1]) ** 2
            az = (np.arange(i0[2], i1[2]) * spacing[2] - p[2]) ** 2
            d = np.sqrt(ax[:, None, None] + ay[None, :, None] + az[None, None, :]) - r
            region = surface[i0[0]:i1[0], i0[1]:i1[1], i0[2]:i1[2]]
            np.minimum(region, d.astype(np.float32), out=region)

    with np.errstate(invalid="ignore"):
        vox = VESSEL_INTENSITY * np.clip(0.5 - surface / falloff, 0.0, 1.0)
    vox[~np.isfinite(surface)] = 0.0
    if noise_sigma > 0:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 0x9015E]))
        vox += noise_sigma * rng.standard_normal(dims, dtype=np.float32)
    return Volume(vox.astype(np.float32), tuple(spacing))


# ---------------------------------------------------------------------------
# Cohort generation
# ---------------------------------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def cohort_class_schedule(spec: CohortSpec) -> list[str]:
    """Deterministic per-case class assignment honoring the spec arithmetic."""
    n_diseased = _round_half_up(spec.n_cases * spec.prevalence)
    n_obstructive = _round_half_up(n_diseased * spec.obstructive_fraction)
    schedule = (
        [CLASS_OBSTRUCTIVE] * n_obstructive
        + [CLASS_NON_OBSTRUCTIVE] * (n_diseased - n_obstructive)
        + [CLASS_NORMAL] * (spec.n_cases - n_diseased)
    )
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed & (2**64 - 1), 0x5CED]))
    rng.shuffle(schedule)
    return schedule


def generate_case_tree(
    spec: CohortSpec,
    index: int,
    case_class: str,
    template: str = "standard-left-right",
) -> tuple[VesselTree, int]:
    """Annotated tree for one cohort case plus the seed its volume noise uses.

    Splitting the tree from the rasterization lets structural consumers build
    whole cohorts of ground truth without paying for any volume.
    """
    state = np.random.SeedSequence([spec.seed & (2**64 - 1), index]).generate_state(5, np.uint64)
    tree_seed, ob_seed, nob_seed, noise_seed, count_seed = (int(v) for v in state)
    tree = generate_tree(tree_seed, template)
    tree.case_id = f"case{index:04d}"
    rng = np.random.default_rng(count_seed)
    if case_class == CLASS_OBSTRUCTIVE:
        tree, _ = place_plaques(tree, 1, (50.0, 85.0), ob_seed)
        extra = int(rng.integers(0, 3))
        if extra:
            tree, _ = place_plaques(tree, extra, (25.0, 49.0), nob_seed)
    elif case_class == CLASS_NON_OBSTRUCTIVE:
        n = int(rng.integers(1, 4))
        tree, _ = place_plaques(tree, n, (25.0, 49.0), nob_seed)
    return tree, noise_seed


def generate_case(
    spec: CohortSpec,
    index: int,
    case_class: str,
    dims: tuple[int, int, int] = (128, 128, 128),
    spacing_mm: tuple[float, float, float] = (0.5, 0.5, 0.5),
    template: str = "standard-left-right",
) -> CaseRecord:
    """Generate one cohort case from its own seed stream (scheduling-independent)."""
    tree, noise_seed = generate_case_tree(spec, index, case_class, template)
    volume = rasterize_volume(tree, dims, spacing_mm, spec.noise_sigma, noise_seed)
    return CaseRecord(tree.case_id, tree, list(tree.plaques), volume)


def generate_cohort(
    spec: CohortSpec,
    dims: tuple[int, int, int] = (128, 128, 128),
    spacing_mm: tuple[float, float, float] = (0.5, 0.5, 0.5),
    template: str = "standard-left-right",
) -> list[CaseRecord]:
    """Generate the full cohort; counts follow the spec arithmetic exactly."""
    schedule = cohort_class_schedule(spec)
    return [
        generate_case(spec, i, cls, dims, spacing_mm, template)
        for i, cls in enumerate(schedule)
    ]


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def save_volume(volume: Volume, base: str | Path) -> tuple[Path, Path]:
    """Write `<base>.vol.json` + `<base>.vol.raw` (f32 little-endian, x-fastest)."""
    base = Path(base)
    header = {
        "dims": list(volume.dims),
        "spacing_mm": [float(s) for s in volume.spacing_mm],
        "dtype": "f32le",
        "offset_bytes": 0,
    }
    json_path = Path(str(base) + ".vol.json")
    raw_path = Path(str(base) + ".vol.raw")
    json_path.write_text(json.dumps(header, sort_keys=True, indent=1))
    # voxels[x, y, z] -> x varies fastest on disk
    raw_path.write_bytes(np.ascontiguousarray(volume.voxels.T.astype("<f4")).tobytes())
    return json_path, raw_path


def volume_header_and_bytes(volume: Volume) -> tuple[dict, bytes]:
    header = {
        "dims": list(volume.dims),
        "spacing_mm": [float(s) for s in volume.spacing_mm],
        "dtype": "f32le",
        "offset_bytes": 0,
    }
    return header, np.ascontiguousarray(volume.voxels.T.astype("<f4")).tobytes()


def volume_from_bytes(header: dict, raw: bytes) -> Volume:
    dims = tuple(int(d) for d in header["dims"])
    if header.get("dtype", "f32le") != "f32le":
        raise PhantomError(f"unsupported dtype {header.get('dtype')!r}")
    offset = int(header.get("offset_bytes", 0))
    expected = int(np.prod(dims)) * 4
    payload = raw[offset : offset + expected]
    if len(payload) != expected:
        raise PhantomError(
            f"raw block has {len(payload)} bytes, expected {expected} for dims {dims}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(dims[::-1]).T
    return Volume(np.ascontiguousarray(arr), tuple(float(s) for s in header["spacing_mm"]))


def load_volume(json_path: str | Path) -> Volume:
    json_path = Path(json_path)
    header = json.loads(json_path.read_text())
    raw_path = Path(str(json_path)[: -len(".vol.json")] + ".vol.raw")
    return volume_from_bytes(header, raw_path.read_bytes())


def save_truth(tree: VesselTree, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(tree.to_dict(), sort_keys=True, indent=1))
    return path


def load_truth(path: str | Path) -> VesselTree:
    return VesselTree.from_dict(json.loads(Path(path).read_text()))
