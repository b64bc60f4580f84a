"""Append-only record log with JSON snapshots, content-hash verified.

Every write lands as a snapshot file under ``<root>/<kind>/`` and appends a
line to ``<root>/records.log`` carrying the payload's SHA-256.  On restart the
log is replayed to rebuild the index; reads re-hash the snapshot and compare
against the logged digest, so silent corruption surfaces as an error instead
of stale data.  Writes are serialized; reads take no lock.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from pathlib import Path


class StoreError(Exception):
    pass


class CorruptRecordError(StoreError):
    pass


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _safe_name(key: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9._-]", "_", key)
    if safe != key:
        safe += "-" + hashlib.sha1(key.encode()).hexdigest()[:8]
    return safe


class RecordStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._log_path = self.root / "records.log"
        self._lock = threading.Lock()
        self._index: dict[tuple[str, str], dict] = {}
        if self._log_path.exists():
            for line in self._log_path.read_text().splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self._index[(rec["kind"], rec["key"])] = rec

    # -- writes -------------------------------------------------------------

    def _commit(self, kind: str, key: str, data: bytes, suffix: str) -> str:
        digest = _sha(data)
        folder = self.root / kind
        with self._lock:
            folder.mkdir(exist_ok=True)
            final = folder / (_safe_name(key) + suffix)
            tmp = final.with_name(final.name + ".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, final)
            rec = {"kind": kind, "key": key, "sha": digest, "file": final.name,
                   "ts": time.time()}
            with self._log_path.open("a") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            self._index[(kind, key)] = rec
        return digest

    def put(self, kind: str, key: str, payload: dict) -> str:
        return self._commit(kind, key, json.dumps(payload, sort_keys=True).encode(),
                            ".json")

    def put_bytes(self, kind: str, key: str, data: bytes, suffix: str = ".bin") -> str:
        return self._commit(kind, key, data, suffix)

    # -- reads --------------------------------------------------------------

    def _fetch(self, kind: str, key: str) -> bytes:
        rec = self._index.get((kind, key))
        if rec is None:
            raise KeyError(f"no {kind} record for {key!r}")
        path = self.root / kind / rec["file"]
        try:
            data = path.read_bytes()
        except FileNotFoundError as exc:
            raise CorruptRecordError(f"{kind}/{key}: snapshot missing") from exc
        if _sha(data) != rec["sha"]:
            raise CorruptRecordError(f"{kind}/{key}: content hash mismatch")
        return data

    def get(self, kind: str, key: str) -> dict:
        return json.loads(self._fetch(kind, key))

    def get_bytes(self, kind: str, key: str) -> bytes:
        return self._fetch(kind, key)

    def exists(self, kind: str, key: str) -> bool:
        return (kind, key) in self._index

    def keys(self, kind: str) -> list[str]:
        return sorted(k for (knd, k) in self._index if knd == kind)

    def verify(self) -> list[str]:
        """Re-hash every snapshot; returns the list of problems found."""
        problems = []
        for (kind, key) in sorted(self._index):
            try:
                self._fetch(kind, key)
            except (CorruptRecordError, KeyError) as exc:
                problems.append(f"{kind}/{key}: {exc}")
        return problems
