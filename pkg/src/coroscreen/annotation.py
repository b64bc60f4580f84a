"""Vessel-course labels with upstream plaque propagation.

A course is labeled by everything along its path from the ostium, so a clean
branch downstream of a plaque still carries the plaque label.  The usage
category separates courses whose plaque lies in the terminal branch itself
from courses that are only dirty upstream; dataset curation treats the two
differently.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .geometry import Extraction
from .phantom import (
    CLASS_NON_OBSTRUCTIVE,
    CLASS_NORMAL,
    CLASS_OBSTRUCTIVE,
    OBSTRUCTIVE_THRESHOLD_PCT,
    PlaqueAnnotation,
    VesselTree,
    grade_of,
)

LABEL_PLAQUE = "PlaqueAnnotated"
LABEL_FREE = "AtherosclerosisFree"

USAGE_DIRECT = "DIRECT_PLAQUE"
USAGE_UPSTREAM = "CLEAN_BRANCH_UPSTREAM_PLAQUE"
USAGE_CLEAN = "COMPLETELY_CLEAN"

COLOR_NON_OBSTRUCTIVE = "LightPink"
COLOR_OBSTRUCTIVE = "DarkPink"

_EPS = 1e-9


class UnknownSegmentError(KeyError):
    pass


@dataclass
class ExtractionLabel:
    extraction_id: str
    label: str
    usage: str
    plaque_spans: list[tuple[tuple[float, float], str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "extraction_id": self.extraction_id,
            "label": self.label,
            "usage": self.usage,
            "plaque_spans": [
                [[float(a), float(b)], grade] for (a, b), grade in self.plaque_spans
            ],
        }

    @staticmethod
    def from_dict(d: dict) -> "ExtractionLabel":
        return ExtractionLabel(
            d["extraction_id"],
            d["label"],
            d["usage"],
            [((span[0], span[1]), grade) for span, grade in d["plaque_spans"]],
        )


@dataclass
class CaseClass:
    case_id: str
    case_class: str


def _checked_segment(tree: VesselTree, segment_id: str):
    try:
        return tree.by_id(segment_id)
    except KeyError as exc:
        raise UnknownSegmentError(str(exc)) from exc


def classify_extraction(
    tree: VesselTree,
    annotations: list[PlaqueAnnotation],
    extraction: Extraction,
) -> ExtractionLabel:
    """Label one course by every plaque its path passes over.

    Plaque spans are reported in course arc-length coordinates.  A span that
    merely touches the terminal branch origin counts as direct plaque: the
    interval is closed on the terminal side, so bifurcation-point plaque is
    never demoted to an upstream annotation.
    """
    for p in annotations:
        _checked_segment(tree, p.segment_id)
    spans: list[tuple[tuple[float, float], str]] = []
    offset = 0.0
    terminal_offset = 0.0
    for sid, (a, b) in extraction.path:
        _checked_segment(tree, sid)
        terminal_offset = offset
        for p in annotations:
            if p.segment_id != sid:
                continue
            lo, hi = p.span
            if hi < a - _EPS or lo > b + _EPS:
                continue
            c0 = offset + max(lo, a) - a
            c1 = offset + min(hi, b) - a
            spans.append(((c0, c1), grade_of(p.stenosis_pct)))
        offset += b - a
    spans.sort(key=lambda s: s[0])
    if not spans:
        return ExtractionLabel(extraction.extraction_id, LABEL_FREE, USAGE_CLEAN, [])
    direct = any(c1 >= terminal_offset - _EPS for (c0, c1), _ in spans)
    usage = USAGE_DIRECT if direct else USAGE_UPSTREAM
    return ExtractionLabel(extraction.extraction_id, LABEL_PLAQUE, usage, spans)


def case_ground_truth(tree: VesselTree, annotations: list[PlaqueAnnotation]) -> CaseClass:
    """Case-level class from the stenosis severity rule."""
    for p in annotations:
        _checked_segment(tree, p.segment_id)
    if not annotations:
        return CaseClass(tree.case_id, CLASS_NORMAL)
    worst = max(p.stenosis_pct for p in annotations)
    cls = CLASS_OBSTRUCTIVE if worst >= OBSTRUCTIVE_THRESHOLD_PCT else CLASS_NON_OBSTRUCTIVE
    return CaseClass(tree.case_id, cls)


def curation_color_map(
    tree: VesselTree,
    annotations: list[PlaqueAnnotation],
) -> list[tuple[str, tuple[float, float], str]]:
    """Severity color for every annotated interval; clean intervals are omitted."""
    out = []
    for p in annotations:
        _checked_segment(tree, p.segment_id)
        color = (
            COLOR_OBSTRUCTIVE
            if p.stenosis_pct >= OBSTRUCTIVE_THRESHOLD_PCT
            else COLOR_NON_OBSTRUCTIVE
        )
        out.append((p.segment_id, (float(p.span[0]), float(p.span[1])), color))
    return out
