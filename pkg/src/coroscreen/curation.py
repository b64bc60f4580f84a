"""Dataset partitioning with vessel-level inclusion rules.

Cases split 3:1:1 per class into Training, Validation, and Testing.
Vessel-level positives are plaque-bearing courses; negatives come only
from entirely normal cases.  Clean branches of diseased cases are
excluded from every vessel-level subset and restored afterwards so
case-level testing sees each test case complete.  Training positives
are expanded by permuting mosaic tile order; the manifest stores the
provenance needed to rebuild every augmented item bit-identically.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotation import LABEL_FREE, LABEL_PLAQUE, USAGE_CLEAN, USAGE_DIRECT, USAGE_UPSTREAM
from .mpv import DEFAULT_N_VIEWS, permute_augment
from .phantom import CLASS_NON_OBSTRUCTIVE, CLASS_NORMAL, CLASS_OBSTRUCTIVE, _round_half_up

SUBSET_TRAINING = "Training"
SUBSET_VALIDATION = "Validation"
SUBSET_TESTING = "Testing"
SUBSETS = (SUBSET_TRAINING, SUBSET_VALIDATION, SUBSET_TESTING)

DISEASED_CLASSES = (CLASS_NON_OBSTRUCTIVE, CLASS_OBSTRUCTIVE)
DEFAULT_RATIO = (3, 1, 1)
DEFAULT_DA_FOLD = 6


class CurationError(Exception):
    pass


def _sub_seed(seed: int, tag: str) -> int:
    return int(np.random.SeedSequence(
        [seed & (2**64 - 1), zlib.crc32(tag.encode())]).generate_state(1)[0])


@dataclass(frozen=True)
class VesselItem:
    """One classifier input: a mosaic reference plus its label and subset."""

    item_id: str
    mpv_ref: str
    extraction_id: str
    case_id: str
    label: str
    usage: str
    subset: str
    augmentation: dict | None = None

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id, "mpv_ref": self.mpv_ref,
            "extraction_id": self.extraction_id, "case_id": self.case_id,
            "label": self.label, "usage": self.usage, "subset": self.subset,
            "augmentation": self.augmentation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VesselItem":
        return cls(d["item_id"], d["mpv_ref"], d["extraction_id"], d["case_id"],
                   d["label"], d["usage"], d["subset"], d.get("augmentation"))


@dataclass
class DatasetManifest:
    split_assignment: dict[str, str]
    case_classes: dict[str, str]
    vessel_items: list[VesselItem]
    restored_case_items: dict[str, list[dict]]
    seed: int
    da_fold: int
    n_views: int
    counts_summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "split_assignment": self.split_assignment,
            "case_classes": self.case_classes,
            "vessel_items": [it.to_dict() for it in self.vessel_items],
            "restored_case_items": self.restored_case_items,
            "seed": self.seed,
            "da_fold": self.da_fold,
            "n_views": self.n_views,
            "counts_summary": self.counts_summary,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(d["split_assignment"], d["case_classes"],
                   [VesselItem.from_dict(v) for v in d["vessel_items"]],
                   d["restored_case_items"], d["seed"], d["da_fold"],
                   d["n_views"], d.get("counts_summary", {}))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Case splitting
# ---------------------------------------------------------------------------

def _ratio_counts(n: int, ratio) -> list[int]:
    total = sum(ratio)
    first = _round_half_up(n * ratio[0] / total)
    second = _round_half_up(n * ratio[1] / total)
    return [first, second, n - first - second]


def _apportion(total: int, quotas, caps) -> list[int]:
    """Largest-remainder allocation of `total` units bounded by caps."""
    out = [min(int(math.floor(q)), c) for q, c in zip(quotas, caps)]
    order = sorted(range(len(quotas)), key=lambda i: -(quotas[i] - math.floor(quotas[i])))
    idx = 0
    while sum(out) < total:
        i = order[idx % len(order)]
        if out[i] < caps[i]:
            out[i] += 1
        idx += 1
    return out


def split_cases(cases, ratio=DEFAULT_RATIO, seed: int = 0) -> dict[str, str]:
    """Stratified per-class split of (case_id, case_class) pairs."""
    strata = {CLASS_OBSTRUCTIVE: [], CLASS_NON_OBSTRUCTIVE: [], CLASS_NORMAL: []}
    for cid, cls in cases:
        if cls not in strata:
            raise CurationError(f"unknown case class {cls!r} for {cid}")
        strata[cls].append(cid)
    n_obs = len(strata[CLASS_OBSTRUCTIVE])
    n_diseased = n_obs + len(strata[CLASS_NON_OBSTRUCTIVE])
    n_normal = len(strata[CLASS_NORMAL])
    if n_diseased < 5 or n_normal < 5:
        raise CurationError(
            f"need at least 5 diseased and 5 normal cases, got {n_diseased}/{n_normal}")
    d_counts = _ratio_counts(n_diseased, ratio)
    o_counts = (_apportion(n_obs, [c * n_obs / n_diseased for c in d_counts], d_counts)
                if n_obs else [0, 0, 0])
    per_stratum = {
        CLASS_OBSTRUCTIVE: o_counts,
        CLASS_NON_OBSTRUCTIVE: [d - o for d, o in zip(d_counts, o_counts)],
        CLASS_NORMAL: _ratio_counts(n_normal, ratio),
    }
    rng = np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), 0x51137]))
    assignment = {}
    for cls, counts in per_stratum.items():
        ids = sorted(strata[cls])
        rng.shuffle(ids)
        cursor = 0
        for subset, count in zip(SUBSETS, counts):
            for cid in ids[cursor:cursor + count]:
                assignment[cid] = subset
            cursor += count
    return assignment


def repair_validation_assignment(assignment: dict[str, str],
                                 labels: dict[str, list],
                                 classes: dict[str, str]) -> dict[str, str]:
    """Swap Validation diseased cases that own no plaque-bearing course with
    Training cases that do, so single-MPV validation sampling stays possible.

    A diseased case whose only plaque sits on the shared trunk has no course
    where the plaque reaches the terminal branch; such a case cannot supply a
    validation positive.  Swapping with a same-class Training case keeps every
    per-class subset count unchanged.  Deterministic: cases are visited in
    sorted order and the first eligible partner wins.
    """
    def has_direct(cid: str) -> bool:
        return any(lb.usage == USAGE_DIRECT for lb in labels.get(cid, []))

    def is_diseased(cid: str) -> bool:
        return any(lb.label == LABEL_PLAQUE for lb in labels.get(cid, []))

    repaired = dict(assignment)
    stuck = [cid for cid in sorted(repaired)
             if repaired[cid] == SUBSET_VALIDATION
             and is_diseased(cid) and not has_direct(cid)]
    for cid in stuck:
        partners = [other for other in sorted(repaired)
                    if repaired[other] == SUBSET_TRAINING
                    and classes.get(other) == classes.get(cid)
                    and has_direct(other)]
        if not partners:
            partners = [other for other in sorted(repaired)
                        if repaired[other] == SUBSET_TRAINING
                        and is_diseased(other) and has_direct(other)]
        if not partners:
            raise CurationError(
                f"validation case {cid} has no plaque-bearing course and no "
                "training case can take its place")
        repaired[cid], repaired[partners[0]] = SUBSET_TRAINING, SUBSET_VALIDATION
    return repaired


def suggest_da_fold(n_raw_positives: int, n_negatives: int,
                    n_views: int = DEFAULT_N_VIEWS) -> int:
    """Fold that brings augmented positives closest to the negative count."""
    if n_raw_positives <= 0:
        raise CurationError("no raw positives to augment")
    cap = math.factorial(n_views) - 1
    return max(1, min(_round_half_up(n_negatives / n_raw_positives), cap))


# ---------------------------------------------------------------------------
# Manifest assembly
# ---------------------------------------------------------------------------

def _case_groups(case_labels):
    direct = sorted((lb for lb in case_labels if lb.usage == USAGE_DIRECT),
                    key=lambda lb: lb.extraction_id)
    cleans = sorted((lb for lb in case_labels if lb.usage == USAGE_CLEAN),
                    key=lambda lb: lb.extraction_id)
    diseased = any(lb.label == LABEL_PLAQUE for lb in case_labels)
    return direct, cleans, diseased


def _ref(mpvs, extraction_id: str) -> str:
    try:
        return mpvs[extraction_id]
    except KeyError:
        raise CurationError(f"no mosaic reference for extraction {extraction_id}") from None


def assemble_vessel_dataset(split_assignment: dict[str, str],
                            labels: dict[str, list],
                            mpvs: dict[str, str],
                            da_fold: int = DEFAULT_DA_FOLD,
                            seed: int = 0,
                            n_views: int = DEFAULT_N_VIEWS) -> DatasetManifest:
    if da_fold < 1:
        raise CurationError("da_fold must be >= 1")
    da = min(da_fold, math.factorial(n_views) - 1)
    items: list[VesselItem] = []
    case_classes: dict[str, str] = {}
    for cid in sorted(split_assignment):
        subset = split_assignment[cid]
        if subset not in SUBSETS:
            raise CurationError(f"case {cid} assigned to unknown subset {subset!r}")
        case_labels = labels.get(cid)
        if not case_labels:
            raise CurationError(f"case {cid} has no labeled extractions")
        direct, cleans, diseased = _case_groups(case_labels)
        case_classes[cid] = "Diseased" if diseased else CLASS_NORMAL
        if subset == SUBSET_TRAINING:
            for lb in direct:
                aug_seed = _sub_seed(seed, lb.extraction_id)
                for k in range(da):
                    items.append(VesselItem(
                        f"{lb.extraction_id}#p{k + 1}", _ref(mpvs, lb.extraction_id),
                        lb.extraction_id, cid, lb.label, lb.usage, subset,
                        {"kind": "permute", "source": lb.extraction_id,
                         "index": k, "n": da, "seed": aug_seed}))
            if not diseased:
                for lb in cleans:
                    items.append(VesselItem(
                        lb.extraction_id, _ref(mpvs, lb.extraction_id),
                        lb.extraction_id, cid, lb.label, lb.usage, subset))
        elif subset == SUBSET_VALIDATION:
            if diseased and not direct:
                raise CurationError(
                    f"validation case {cid} has no plaque-bearing course to sample")
            pool = direct if diseased else cleans
            rng = np.random.default_rng(_sub_seed(seed, cid))
            lb = pool[int(rng.integers(len(pool)))]
            items.append(VesselItem(lb.extraction_id, _ref(mpvs, lb.extraction_id),
                                    lb.extraction_id, cid, lb.label, lb.usage, subset))
        else:
            pool = direct if diseased else cleans
            for lb in pool:
                items.append(VesselItem(lb.extraction_id, _ref(mpvs, lb.extraction_id),
                                        lb.extraction_id, cid, lb.label, lb.usage, subset))
    restored = restore_cases(split_assignment, labels, mpvs)
    manifest = DatasetManifest(dict(split_assignment), case_classes, items, restored,
                               seed, da, n_views)
    manifest.counts_summary = manifest_report(manifest)
    return manifest


def restore_cases(split_assignment: dict[str, str],
                  labels: dict[str, list],
                  mpvs: dict[str, str]) -> dict[str, list[dict]]:
    """Complete un-augmented course list for every Testing case."""
    restored: dict[str, list[dict]] = {}
    for cid in sorted(split_assignment):
        if split_assignment[cid] != SUBSET_TESTING:
            continue
        case_labels = labels.get(cid)
        if not case_labels:
            raise CurationError(f"case {cid} has no labeled extractions")
        restored[cid] = [
            {"mpv_ref": _ref(mpvs, lb.extraction_id), "extraction_id": lb.extraction_id,
             "label": lb.label, "usage": lb.usage}
            for lb in sorted(case_labels, key=lambda lb: lb.extraction_id)
        ]
    return restored


def manifest_report(manifest: DatasetManifest) -> dict:
    """Independent recount of manifest entries in a Table-shaped grid."""
    grid = {
        "cases": {sub: {"Diseased": 0, CLASS_NORMAL: 0} for sub in SUBSETS},
        "vessel": {sub: {LABEL_PLAQUE: {"raw": 0, "augmented": 0},
                         LABEL_FREE: {"raw": 0, "augmented": 0}} for sub in SUBSETS},
        "restored": {"cases": 0, USAGE_DIRECT: 0, USAGE_UPSTREAM: 0,
                     "clean_diseased": 0, "clean_normal": 0},
    }
    for cid, subset in manifest.split_assignment.items():
        group = manifest.case_classes.get(cid, CLASS_NORMAL)
        key = "Diseased" if group == "Diseased" else CLASS_NORMAL
        grid["cases"][subset][key] += 1
    for item in manifest.vessel_items:
        kind = "augmented" if item.augmentation else "raw"
        grid["vessel"][item.subset][item.label][kind] += 1
    for cid, entries in manifest.restored_case_items.items():
        grid["restored"]["cases"] += 1
        diseased = manifest.case_classes.get(cid) == "Diseased"
        for entry in entries:
            if entry["usage"] == USAGE_CLEAN:
                grid["restored"]["clean_diseased" if diseased else "clean_normal"] += 1
            else:
                grid["restored"][entry["usage"]] += 1
    return grid


def materialize_item(item: VesselItem, mpv_by_extraction):
    """Rebuild the (possibly augmented) mosaic an item refers to."""
    base = mpv_by_extraction[item.extraction_id]
    if item.augmentation is None:
        return base
    a = item.augmentation
    if a["kind"] != "permute":
        raise CurationError(f"unknown augmentation kind {a['kind']!r}")
    return permute_augment(base, a["n"], a["seed"])[a["index"]]
