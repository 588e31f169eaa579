"""Append-only audit log, one JSON record per line."""

from __future__ import annotations

import json
import threading
from datetime import datetime, timezone
from pathlib import Path


class AuditLog:
    def __init__(self, path: str | Path | None = None):
        self._path = Path(path) if path else None
        self._lock = threading.Lock()
        self._records: list[dict] = []

    def record(self, actor: str, action: str, target: str, detail: str = "", now: datetime | None = None) -> None:
        entry = {
            "ts": (now or datetime.now(timezone.utc)).isoformat(),
            "actor": actor,
            "action": action,
            "target": target,
            "detail": detail,
        }
        with self._lock:
            self._records.append(entry)
            if self._path is not None:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry) + "\n")

    @property
    def records(self) -> list[dict]:
        with self._lock:
            return list(self._records)
