"""Screening workflow: ingest studies, run the processing chain, persist
per-vessel inference, build the red/gray overlay, take adjudications, and
evaluate whole cohorts."""

from __future__ import annotations

import hashlib
import json
import tempfile
import threading
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import annotation as an
from .. import evaluation as ev
from .. import geometry as geo
from .. import phantom as ph
from ..classifier import (DECISION_CLEAR, DECISION_POSITIVE, Model, decide,
                          load_model, predict)
from ..mpv import DEFAULT_N_VIEWS, build_mpv, save_mpv
from .config import ServiceConfig
from .store import RecordStore

JOB_QUEUED = "Queued"
JOB_PROCESSING = "Processing"
JOB_READY = "InferenceReady"
JOB_FAILED = "Failed"

ADJ_ACCEPT = "Accept"
ADJ_REJECT = "Reject"

FAIL_QUALITY = "inadequate image quality"

PIPELINE_STAGES = ("load", "centerline", "straighten", "mosaic",
                   "inference", "aggregate")


class ServiceError(Exception):
    pass


class UnknownJobError(ServiceError):
    pass


class UnknownCaseError(ServiceError):
    pass


class UnknownExtractionError(ServiceError):
    pass


class DuplicateCaseError(ServiceError):
    pass


class StateError(ServiceError):
    pass


class _QualityFailure(ServiceError):
    pass


# ---------------------------------------------------------------------------
# Pure workflow functions
# ---------------------------------------------------------------------------

def model_n_views(model) -> int:
    """Views per mosaic the model was trained on, from its provenance."""
    prov = getattr(model, "provenance", None)
    if isinstance(prov, dict) and "n_views" in prov:
        return int(prov["n_views"])
    return DEFAULT_N_VIEWS


def aggregate_case(probabilities, threshold: float = 0.5) -> str:
    """Case call from per-extraction probabilities: positive iff any
    probability reaches the threshold."""
    probs = list(probabilities)
    if not probs:
        raise ServiceError("cannot aggregate an empty probability list")
    return DECISION_POSITIVE if max(probs) >= threshold else DECISION_CLEAR


def _segment_polylines(extractions) -> dict[str, list]:
    """Per-segment polylines recovered from extraction centerlines: each path
    element (segment id, arc span) owns the matching arc range of the course."""
    polylines: dict[str, list] = {}
    for e in extractions:
        arcs = ph.polyline_arc_lengths(e.centerline)
        start = 0.0
        for sid, (a, b) in e.path:
            end = start + (b - a)
            if sid not in polylines:
                lo = np.searchsorted(arcs, start - 1e-6)
                hi = np.searchsorted(arcs, end + 1e-6)
                pts = e.centerline[lo:hi]
                if len(pts) >= 2:
                    polylines[sid] = np.round(pts, 4).tolist()
            start = end
    return polylines


def build_overlay(result: dict, extractions, tree: ph.VesselTree | None = None) -> dict:
    """Red segments are exactly those on the path of at least one positive
    extraction; everything else renders Gray."""
    by_id = {e.extraction_id: e for e in extractions}
    red: set[str] = set()
    for item in result["extractions"]:
        eid = item["extraction_id"]
        if eid not in by_id:
            raise UnknownExtractionError(f"result references unknown extraction {eid!r}")
        if item["decision"] == DECISION_POSITIVE:
            red.update(sid for sid, _ in by_id[eid].path)
    if tree is not None:
        polylines = {s.id: np.round(s.points, 4).tolist() for s in tree.segments}
    else:
        polylines = _segment_polylines(extractions)
    segments = [
        {"segment_id": sid, "color": "Red" if sid in red else "Gray",
         "polyline_mm": pts}
        for sid, pts in sorted(polylines.items())
    ]
    return {
        "case_id": result["case_id"],
        "segments": segments,
        "extractions": [dict(item) for item in result["extractions"]],
    }


# ---------------------------------------------------------------------------
# Screening service
# ---------------------------------------------------------------------------

def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


class ScreeningService:
    """Single-process screening pipeline around a persistent record store.

    The classifier model is loaded once and shared immutably; each job is
    guarded by its own lock so concurrent API handlers cannot process the
    same job twice.
    """

    def __init__(self, config: ServiceConfig, model: Model | None = None):
        self.config = config
        self.store = RecordStore(config.data_dir)
        if model is None and config.model_path:
            model = load_model(config.model_path)
        self.model = model
        self.threshold = float(config.threshold)
        self._job_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, job_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._job_locks.setdefault(job_id, threading.Lock())

    # -- ingest -------------------------------------------------------------

    def ingest_study(self, header: dict, raw: bytes, phase_pct: float,
                     case_id: str | None = None) -> str:
        case_id = case_id or header.get("case_id")
        if not case_id:
            raise ServiceError("case_id missing from header and arguments")
        if not 0.0 <= float(phase_pct) <= 100.0:
            raise ServiceError(f"phase_pct {phase_pct} outside [0, 100]")
        ph.volume_from_bytes(header, raw)    # validates header + raw block
        content = hashlib.sha256(
            json.dumps({k: header[k] for k in ("dims", "spacing_mm")},
                       sort_keys=True).encode() + raw).hexdigest()
        job_id = "job-" + hashlib.sha256(f"{case_id}\n{content}".encode()).hexdigest()[:16]
        if self.store.exists("jobs", job_id):
            return job_id
        for other in self.store.keys("jobs"):
            job = self.store.get("jobs", other)
            if job["case_id"] == case_id and job["content_hash"] != content:
                raise DuplicateCaseError(
                    f"case {case_id} already ingested with different content")
        self.store.put_bytes("volumes", job_id, raw, ".raw")
        self.store.put("volume-headers", job_id,
                       {**header, "case_id": case_id, "phase_pct": float(phase_pct)})
        self.store.put("jobs", job_id, {
            "job_id": job_id, "case_id": case_id, "volume_ref": job_id,
            "phase_pct": float(phase_pct), "state": JOB_QUEUED,
            "stage_timings_ms": {}, "error": None,
            "content_hash": content, "created": _now_iso(),
        })
        return job_id

    # -- queries ------------------------------------------------------------

    def get_job(self, job_id: str) -> dict:
        try:
            return self.store.get("jobs", job_id)
        except KeyError as exc:
            raise UnknownJobError(f"unknown job {job_id!r}") from exc

    def job_ids(self) -> list[str]:
        return self.store.keys("jobs")

    def _job_for_case(self, case_id: str) -> dict:
        for job_id in self.store.keys("jobs"):
            job = self.store.get("jobs", job_id)
            if job["case_id"] == case_id:
                return job
        raise UnknownCaseError(f"unknown case {case_id!r}")

    def worklist(self) -> list[dict]:
        entries = []
        for job_id in self.store.keys("jobs"):
            job = self.store.get("jobs", job_id)
            case_id = job["case_id"]
            decision = None
            latency = None
            if job["state"] == JOB_READY:
                result = self.store.get("results", case_id)
                decision = result["case_decision"]
                latency = result["total_latency_ms"]
            adj = self.adjudication_of(case_id)
            entries.append({
                "case_id": case_id, "job_id": job_id, "state": job["state"],
                "case_decision": decision,
                "adjudication": None if adj is None else adj["decision"],
                "total_latency_ms": latency,
                "error": job["error"],
            })
        entries.sort(key=lambda e: e["case_id"])
        return entries

    def completion_summary(self) -> dict:
        states = [self.store.get("jobs", j)["state"] for j in self.store.keys("jobs")]
        done = sum(s == JOB_READY for s in states)
        total = len(states)
        return {
            "total": total,
            "completed": done,
            "failed": sum(s == JOB_FAILED for s in states),
            "ratio_pct": round(100.0 * done / total, 2) if total else None,
        }

    # -- processing ---------------------------------------------------------

    def _set_state(self, job: dict, state: str, **extra) -> dict:
        job = {**job, "state": state, **extra}
        self.store.put("jobs", job["job_id"], job)
        return job

    def run_pipeline(self, job_id: str) -> dict:
        with self._lock_for(job_id):
            job = self.get_job(job_id)
            if job["state"] == JOB_READY:
                return self.store.get("results", job["case_id"])
            if job["state"] != JOB_QUEUED:
                raise StateError(f"job {job_id} is {job['state']}, not {JOB_QUEUED}")
            job = self._set_state(job, JOB_PROCESSING)
            timings: dict[str, float] = {}
            t_start = time.perf_counter()
            stage = "load"
            try:
                volume, track = None, None
                for stage in PIPELINE_STAGES:
                    t0 = time.perf_counter()
                    if stage == "load":
                        header = self.store.get("volume-headers", job_id)
                        raw = self.store.get_bytes("volumes", job_id)
                        volume = ph.volume_from_bytes(header, raw)
                    elif stage == "centerline":
                        track = self._tracked_tree(volume, job["case_id"])
                    elif stage == "straighten":
                        mprs = [geo.straighten(volume, e) for e in track.extractions]
                    elif stage == "mosaic":
                        k = model_n_views(self.model)
                        mpvs = [build_mpv(m, extraction_id=m.extraction_id, n_views=k)
                                for m in mprs]
                        self._persist_mpvs(job["case_id"], mpvs)
                    elif stage == "inference":
                        if self.model is None:
                            raise ServiceError("no classifier model configured")
                        probs = [predict(self.model, m) for m in mpvs]
                    elif stage == "aggregate":
                        per_extraction = [
                            {"extraction_id": m.extraction_id,
                             "probability": round(p, 6),
                             "decision": decide(p, self.threshold)}
                            for m, p in zip(mpvs, probs)
                        ]
                        case_decision = aggregate_case(probs, self.threshold)
                    timings[stage] = round((time.perf_counter() - t0) * 1000.0, 3)
            except _QualityFailure:
                timings[stage] = round((time.perf_counter() - t0) * 1000.0, 3)
                self._set_state(job, JOB_FAILED, error=FAIL_QUALITY,
                                stage_timings_ms=timings)
                return self.get_job(job_id)
            except Exception as exc:
                timings[stage] = round((time.perf_counter() - t0) * 1000.0, 3)
                self._set_state(job, JOB_FAILED, error=f"{stage}: {exc}",
                                stage_timings_ms=timings)
                return self.get_job(job_id)

            total_ms = round((time.perf_counter() - t_start) * 1000.0, 3)
            result = {
                "case_id": job["case_id"], "job_id": job_id,
                "extractions": per_extraction,
                "case_decision": case_decision,
                "model_ref": self.model.weight_hash(),
                "threshold": self.threshold,
                "total_latency_ms": total_ms,
            }
            self.store.put("results", job["case_id"], result)
            self.store.put("trees", job["case_id"], track.tree.to_dict())
            self.store.put("extractions", job["case_id"],
                           {"extractions": [e.to_dict() for e in track.extractions],
                            "warnings": track.warnings})
            self._set_state(job, JOB_READY, stage_timings_ms=timings)
            return result

    def _tracked_tree(self, volume: ph.Volume, case_id: str) -> geo.TrackResult:
        """Track from every automatic seed; more than half failing (or none
        found) means the study cannot be read."""
        seeds = geo.auto_seeds(volume)
        if not seeds:
            raise _QualityFailure(FAIL_QUALITY)
        # root-only probe per seed: branch growth is deferred to the joint
        # run, where gaps attach to the tree they belong to
        probe = replace(geo.TrackParams(), max_segments=1)
        good = []
        for seed in seeds:
            try:
                geo.track_tree(volume, [seed], probe, case_id=case_id)
                good.append(seed)
            except geo.GeometryError:
                pass
        if len(good) * 2 <= len(seeds):
            raise _QualityFailure(FAIL_QUALITY)
        track = geo.track_tree(volume, good, case_id=case_id)
        if not track.extractions:
            raise _QualityFailure(FAIL_QUALITY)
        return track

    def _persist_mpvs(self, case_id: str, mpvs) -> None:
        with tempfile.TemporaryDirectory(dir=self.store.root) as tmp:
            for m in mpvs:
                base = Path(tmp) / "m.png"
                save_mpv(base, m, extra={"case_id": case_id})
                key = f"{case_id}/{m.extraction_id}"
                self.store.put_bytes("mpvs", key, base.read_bytes(), ".png")
                self.store.put("mpv-meta", key,
                               json.loads(base.with_suffix(".json").read_text()))

    def process_queued(self) -> list[str]:
        """Run every Queued job (by id order); returns the ids processed."""
        done = []
        for job_id in self.job_ids():
            if self.get_job(job_id)["state"] == JOB_QUEUED:
                self.run_pipeline(job_id)
                done.append(job_id)
        return done

    # -- results and adjudication -------------------------------------------

    def get_result(self, case_id: str) -> dict:
        job = self._job_for_case(case_id)
        if job["state"] != JOB_READY:
            raise StateError(f"case {case_id} is {job['state']}, not {JOB_READY}")
        result = self.store.get("results", case_id)
        stored = self.store.get("extractions", case_id)
        extractions = [geo.Extraction.from_dict(d) for d in stored["extractions"]]
        tree = ph.VesselTree.from_dict(self.store.get("trees", case_id))
        return {"result": result,
                "overlay": build_overlay(result, extractions, tree)}

    def get_mpv(self, case_id: str, extraction_id: str) -> tuple[bytes, dict]:
        self._job_for_case(case_id)
        key = f"{case_id}/{extraction_id}"
        try:
            return self.store.get_bytes("mpvs", key), self.store.get("mpv-meta", key)
        except KeyError as exc:
            raise UnknownExtractionError(
                f"no mosaic for case {case_id!r} extraction {extraction_id!r}") from exc

    def adjudicate(self, case_id: str, decision: str, reviewer: str,
                   note: str = "") -> dict:
        if decision not in (ADJ_ACCEPT, ADJ_REJECT):
            raise ServiceError(f"decision must be {ADJ_ACCEPT} or {ADJ_REJECT}")
        job = self._job_for_case(case_id)
        if job["state"] != JOB_READY:
            raise StateError(f"case {case_id} is {job['state']}, not {JOB_READY}")
        history = []
        if self.store.exists("adjudications", case_id):
            history = self.store.get("adjudications", case_id)["history"]
        record = {"case_id": case_id, "decision": decision, "reviewer": reviewer,
                  "note": note, "timestamp": _now_iso(), "seq": len(history)}
        self.store.put("adjudications", case_id, {"history": history + [record]})
        return record

    def adjudication_of(self, case_id: str) -> dict | None:
        if not self.store.exists("adjudications", case_id):
            return None
        return self.store.get("adjudications", case_id)["history"][-1]

    def adjudication_history(self, case_id: str) -> list[dict]:
        self._job_for_case(case_id)
        if not self.store.exists("adjudications", case_id):
            return []
        return self.store.get("adjudications", case_id)["history"]


# ---------------------------------------------------------------------------
# Cohort evaluation
# ---------------------------------------------------------------------------

def evaluate_cohort(records, model: Model, threshold: float = 0.5,
                    n_views: int | None = None) -> dict:
    """Vessel-level and restored case-level reports over ground-truth courses.

    Vessel-level scoring uses plaque-bearing courses as positives and fully
    clean courses as negatives; clean courses upstream of a plaque carry
    ambiguous truth and are excluded, matching the curation rules.  The case
    decision takes the maximum probability over every course.  Mosaics are
    built with the view count the model was trained on unless overridden.
    """
    k = model_n_views(model) if n_views is None else int(n_views)
    v_true, v_score = [], []
    c_true, c_score = [], []
    failed: list[str] = []
    for rec in sorted(records, key=lambda r: r.case_id):
        tree = rec.tree
        try:
            case_probs = []
            for extraction in geo.ground_truth_extractions(tree):
                label = an.classify_extraction(tree, tree.plaques, extraction)
                mpr = geo.straighten(rec.volume, extraction)
                p = predict(model, build_mpv(mpr, extraction_id=extraction.extraction_id,
                                             n_views=k))
                case_probs.append(p)
                if label.usage == an.USAGE_DIRECT:
                    v_true.append(1)
                    v_score.append(p)
                elif label.usage == an.USAGE_CLEAN:
                    v_true.append(0)
                    v_score.append(p)
            truth = an.case_ground_truth(tree, tree.plaques)
            c_true.append(0 if truth.case_class == ph.CLASS_NORMAL else 1)
            c_score.append(max(case_probs))
        except Exception as exc:
            failed.append(f"{rec.case_id}: {exc}")
    total = len(failed) + len(c_true)

    def _level(name, y, s):
        pred = [int(p >= threshold) for p in s]
        cm = ev.confusion(pred, y)
        mset = ev.metrics(cm)
        auc, curve = (ev.roc_auc(s, y) if len(set(y)) == 2 else (None, None))
        text, payload = ev.report(name, cm, mset, auc=auc)
        return {"confusion": {"tp": cm.tp, "fp": cm.fp, "fn": cm.fn, "tn": cm.tn},
                "auc": auc, "report_text": text, "report": payload,
                "roc_csv": ev.roc_curve_csv(curve) if curve is not None else None}

    return {
        "vessel": _level("Vessel-level", v_true, v_score),
        "case": _level("Restored-case", c_true, c_score),
        "completion": {
            "total": total,
            "completed": len(c_true),
            "ratio_pct": round(100.0 * len(c_true) / total, 2) if total else None,
            "failed_cases": failed,
        },
        "threshold": threshold,
        "model_ref": model.weight_hash(),
    }


def load_cohort_dir(path: str | Path):
    """Cohort directory layout written by the phantom subcommand:
    volumes/<case>.vol.json/.raw plus truth/<case>.truth.json."""
    path = Path(path)
    records = []
    truth_dir = path / "truth"
    vol_dir = path / "volumes"
    if not truth_dir.is_dir() or not vol_dir.is_dir():
        raise ServiceError(f"{path} is not a cohort directory")
    for truth_path in sorted(truth_dir.glob("*.truth.json")):
        case_id = truth_path.name[:-len(".truth.json")]
        tree = ph.load_truth(truth_path)
        volume = ph.load_volume(vol_dir / f"{case_id}.vol.json")
        records.append(CohortCase(case_id, tree, volume))
    if not records:
        raise ServiceError(f"no cases found under {path}")
    return records


@dataclass
class CohortCase:
    case_id: str
    tree: ph.VesselTree
    volume: ph.Volume
