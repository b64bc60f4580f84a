"""Mosaic projection views of straightened vessel volumes.

A straightened volume is collapsed into K in-plane maximum-intensity
projections at evenly spaced angles over half a turn, and the K tiles
are assembled row-major into one 2-D mosaic image.  Training variety
comes from two augmentation families: re-ordering the tiles with
distinct non-identity permutations, and rotating every tile in-plane by
one shared random angle.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

DEFAULT_N_VIEWS = 18
STRIP_LAYOUT = (18, 1)
GRID_LAYOUT = (9, 2)
MAX_ROTATE_DEG = 15.0

# fixed affine so stored pixels decode identically on every run
PIXEL_SCALE = 16.0
PIXEL_OFFSET = 1024.0


class MosaicError(ValueError):
    """Inconsistent mosaic layout, permutation, or augmentation request."""


def _as_samples(mpr):
    samples = np.asarray(getattr(mpr, "samples", mpr), dtype=np.float32)
    if samples.ndim != 3:
        raise MosaicError(f"expected a (L, W, W) sample block, got shape {samples.shape}")
    return samples


@dataclass(frozen=True)
class MPV:
    """K projection tiles plus the layout that assembles them."""

    extraction_id: str
    tiles: np.ndarray              # (K, L, W) float32
    layout: tuple[int, int]
    angles_deg: tuple[float, ...]
    permutation: tuple[int, ...]

    def __post_init__(self):
        tiles = np.asarray(self.tiles, dtype=np.float32)
        object.__setattr__(self, "tiles", tiles)
        object.__setattr__(self, "layout", tuple(int(v) for v in self.layout))
        object.__setattr__(self, "angles_deg", tuple(float(a) for a in self.angles_deg))
        object.__setattr__(self, "permutation", tuple(int(i) for i in self.permutation))
        rows, cols = self.layout
        if tiles.ndim != 3:
            raise MosaicError(f"tiles must be (K, L, W), got shape {tiles.shape}")
        k = tiles.shape[0]
        if rows * cols != k:
            raise MosaicError(f"layout {rows}x{cols} cannot hold {k} tiles")
        if len(self.angles_deg) != k:
            raise MosaicError("one projection angle per tile required")
        if sorted(self.permutation) != list(range(k)):
            raise MosaicError(f"not a permutation of {k} tiles: {self.permutation}")

    @property
    def n_views(self) -> int:
        return self.tiles.shape[0]

    @property
    def tile_shape(self) -> tuple[int, int]:
        return self.tiles.shape[1], self.tiles.shape[2]

    @property
    def pixels(self) -> np.ndarray:
        """Tiles placed row-major into a (rows*L, cols*W) image."""
        rows, cols = self.layout
        k, length, width = self.tiles.shape
        grid = self.tiles.reshape(rows, cols, length, width)
        return grid.transpose(0, 2, 1, 3).reshape(rows * length, cols * width)


def tiles_from_pixels(pixels: np.ndarray, layout: tuple[int, int]) -> np.ndarray:
    """Invert mosaic assembly back into a (K, L, W) tile stack."""
    pixels = np.asarray(pixels)
    rows, cols = layout
    if pixels.shape[0] % rows or pixels.shape[1] % cols:
        raise MosaicError(f"image {pixels.shape} does not tile as {rows}x{cols}")
    length, width = pixels.shape[0] // rows, pixels.shape[1] // cols
    grid = pixels.reshape(rows, length, cols, width)
    return grid.transpose(0, 2, 1, 3).reshape(rows * cols, length, width)


def project(mpr, angle_deg: float) -> np.ndarray:
    """Maximum-intensity projection of every slice at one in-plane angle.

    Each slice is rotated by angle_deg about the course point and
    collapsed with a per-column maximum, giving one L x W image.
    """
    if not 0.0 <= angle_deg < 360.0:
        raise MosaicError(f"projection angle {angle_deg} outside [0, 360)")
    samples = _as_samples(mpr)
    if angle_deg != 0.0:
        samples = ndimage.rotate(samples, angle_deg, axes=(1, 2), reshape=False,
                                 order=1, mode="constant", cval=0.0)
    return samples.max(axis=1)


def canonical_angles(n_views: int) -> tuple[float, ...]:
    return tuple(i * 180.0 / n_views for i in range(n_views))


def build_mpv(mpr, extraction_id: str = "", n_views: int = DEFAULT_N_VIEWS,
              layout: tuple[int, int] | None = None) -> MPV:
    """Project at K evenly spaced angles over 180 degrees and assemble."""
    if layout is None:
        layout = (n_views, 1)
    rows, cols = layout
    if rows * cols != n_views:
        raise MosaicError(f"layout {rows}x{cols} cannot hold {n_views} views")
    if not extraction_id:
        extraction_id = getattr(mpr, "extraction_id", "")
    angles = canonical_angles(n_views)
    tiles = np.stack([project(mpr, a) for a in angles])
    return MPV(extraction_id, tiles, layout, angles, tuple(range(n_views)))


def permute_augment(mpv: MPV, n: int, seed: int) -> list[MPV]:
    """Draw n distinct non-identity tile orderings of one mosaic."""
    k = mpv.n_views
    available = math.factorial(k) - 1
    if n > available:
        raise MosaicError(f"requested {n} permutations of {k} tiles, only {available} exist")
    if n <= 0:
        return []
    rng = np.random.default_rng(seed)
    identity = tuple(range(k))
    if available <= 20000:
        pool = [p for p in itertools.permutations(range(k)) if p != identity]
        order = rng.permutation(len(pool))[:n]
        picks = [pool[i] for i in order]
    else:
        seen = {identity}
        picks = []
        while len(picks) < n:
            p = tuple(int(i) for i in rng.permutation(k))
            if p in seen:
                continue
            seen.add(p)
            picks.append(p)
    base = np.asarray(mpv.permutation)
    return [replace(mpv, tiles=mpv.tiles[list(p)],
                    permutation=tuple(int(i) for i in base[list(p)]))
            for p in picks]


def rotate_mpv(mpv: MPV, angle_deg: float) -> MPV:
    """Rotate every tile image in-plane by the same angle."""
    if angle_deg == 0.0:
        return mpv
    tiles = ndimage.rotate(mpv.tiles, angle_deg, axes=(1, 2), reshape=False,
                           order=1, mode="constant", cval=0.0)
    return replace(mpv, tiles=tiles)


def rotate_augment(mpv: MPV, max_deg: float, seed: int) -> MPV:
    """Rotate all tiles by one shared uniform random angle in [-max_deg, max_deg]."""
    if max_deg > MAX_ROTATE_DEG:
        raise MosaicError(f"rotation range {max_deg} exceeds {MAX_ROTATE_DEG} degrees")
    if max_deg < 0.0:
        raise MosaicError("rotation range must be non-negative")
    angle = float(np.random.default_rng(seed).uniform(-max_deg, max_deg))
    return rotate_mpv(mpv, angle)


def save_mpv(path, mpv: MPV, seed=None, extra: dict | None = None) -> None:
    """Write the mosaic as 16-bit grayscale PNG plus a sidecar JSON."""
    path = Path(path)
    stored = np.clip(np.rint((mpv.pixels.astype(np.float64) + PIXEL_OFFSET) * PIXEL_SCALE),
                     0, 65535).astype(np.uint16)
    Image.fromarray(stored).save(path, format="PNG")
    meta = {
        "extraction_id": mpv.extraction_id,
        "K": mpv.n_views,
        "layout": list(mpv.layout),
        "angles_deg": list(mpv.angles_deg),
        "permutation": list(mpv.permutation),
        "seed": seed,
        "tile_shape": list(mpv.tile_shape),
        "pixel_scale": PIXEL_SCALE,
        "pixel_offset": PIXEL_OFFSET,
    }
    if extra:
        meta.update(extra)
    path.with_suffix(".json").write_text(json.dumps(meta, indent=1, sort_keys=True))


def load_mpv(path) -> tuple[MPV, dict]:
    """Read a mosaic PNG and its sidecar back into an MPV."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    stored = np.asarray(Image.open(path), dtype=np.float64)
    pixels = stored / meta["pixel_scale"] - meta["pixel_offset"]
    tiles = tiles_from_pixels(pixels, tuple(meta["layout"]))
    mpv = MPV(meta["extraction_id"], tiles, tuple(meta["layout"]),
              tuple(meta["angles_deg"]), tuple(meta["permutation"]))
    return mpv, meta
