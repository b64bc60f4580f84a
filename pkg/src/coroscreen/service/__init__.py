"""Screening service: ingest, pipeline, overlay, adjudication, HTTP API."""

from .config import ConfigError, ServiceConfig, load_config
from .core import (ADJ_ACCEPT, ADJ_REJECT, FAIL_QUALITY, JOB_FAILED,
                   JOB_PROCESSING, JOB_QUEUED, JOB_READY, PIPELINE_STAGES,
                   CohortCase, DuplicateCaseError, ScreeningService,
                   ServiceError, StateError, UnknownCaseError,
                   UnknownExtractionError, UnknownJobError, aggregate_case,
                   build_overlay, evaluate_cohort, load_cohort_dir)
from .store import CorruptRecordError, RecordStore, StoreError

__all__ = [
    "ADJ_ACCEPT",
    "ADJ_REJECT",
    "FAIL_QUALITY",
    "JOB_FAILED",
    "JOB_PROCESSING",
    "JOB_QUEUED",
    "JOB_READY",
    "PIPELINE_STAGES",
    "CohortCase",
    "ConfigError",
    "CorruptRecordError",
    "DuplicateCaseError",
    "RecordStore",
    "ScreeningService",
    "ServiceConfig",
    "ServiceError",
    "StateError",
    "StoreError",
    "UnknownCaseError",
    "UnknownExtractionError",
    "UnknownJobError",
    "aggregate_case",
    "build_overlay",
    "evaluate_cohort",
    "load_cohort_dir",
    "load_config",
    "create_app",
]


def create_app(service):
    from .api import create_app as _create
    return _create(service)
