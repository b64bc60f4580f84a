"""Non-learned lumen-width scorer for pipeline testing.

Scores a straightened volume by the deepest relative drop in its
per-slice lumen width profile, mapped through a logistic so a clean
tube scores near zero and a halved lumen scores near one.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from ..phantom import VESSEL_INTENSITY

DROP_MIDPOINT = 0.15
DROP_SCALE = 0.05
_WINDOW_SLICES = 12


def _slice_width_texels(slice_2d: np.ndarray) -> float:
    """Equivalent diameter of the above-half-max blob holding the center."""
    mask = slice_2d >= VESSEL_INTENSITY / 2.0
    center = tuple(s // 2 for s in slice_2d.shape)
    if not mask[center]:
        return 0.0
    labels, _ = ndimage.label(mask)
    count = int(np.count_nonzero(labels == labels[center]))
    return 2.0 * math.sqrt(count / math.pi)


def lumen_width_profile(mpr) -> np.ndarray:
    samples = np.asarray(getattr(mpr, "samples", mpr), dtype=float)
    return np.array([_slice_width_texels(s) for s in samples])


def max_relative_width_drop(profile: np.ndarray) -> float:
    """Deepest drop of the profile below its local caliber, where local
    caliber is the smaller of the upstream and downstream window maxima
    so a gradual taper does not read as a narrowing."""
    w = np.asarray(profile, dtype=float)
    drop = 0.0
    for i in range(len(w)):
        up = w[max(0, i - _WINDOW_SLICES):i + 1].max()
        down = w[i:i + _WINDOW_SLICES + 1].max()
        ref = min(up, down)
        if ref > 0.0:
            drop = max(drop, 1.0 - w[i] / ref)
    return drop


def baseline_predict(mpr) -> float:
    drop = max_relative_width_drop(lumen_width_profile(mpr))
    return 1.0 / (1.0 + math.exp(-(drop - DROP_MIDPOINT) / DROP_SCALE))
