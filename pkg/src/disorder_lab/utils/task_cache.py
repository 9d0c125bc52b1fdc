"""Per-task cache of finished experiment rows.

Grid points are expensive and deterministic, so a finished point is kept as

  <cache_root>/<experiment>/<task label>.json

next to the signature of the config it was computed under. A lookup under
any other signature misses, so editing a config re-runs every point.
``TaskCache(None, ...)`` is disabled: loads miss and saves are dropped.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)

_UNSAFE = re.compile(r"[^A-Za-z0-9_.=-]+")


def stable_hash(payload: Any) -> str:
    """16-hex-digit SHA256 of a JSON-serializable payload, independent of key order."""
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


class TaskCache:
    """Rows of finished grid points, keyed by task label and config signature."""

    def __init__(self, cache_root: Path | None, experiment: str):
        self.experiment = experiment
        self.dir: Path | None = Path(cache_root) / experiment if cache_root else None

    @property
    def enabled(self) -> bool:
        return self.dir is not None

    def entry(self, label: str) -> Path | None:
        return self.dir / f"{_UNSAFE.sub('_', label)}.json" if self.dir else None

    def load(self, label: str, config_sig: str) -> list[dict] | None:
        path = self.entry(label)
        if path is None or not path.is_file():
            return None
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            logger.warning("ignoring unreadable cache entry %s: %s", path, e)
            return None
        if payload.get("config_sig") != config_sig:
            logger.debug("cache entry %s was computed under another config", path)
            return None
        return payload.get("rows")

    def save(self, label: str, config_sig: str, rows: list[dict]) -> None:
        path = self.entry(label)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        record = {
            "experiment": self.experiment,
            "task": label,
            "config_sig": config_sig,
            "saved": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "rows": rows,
        }
        # entries appear whole or not at all
        partial = path.with_name(path.name + ".part")
        partial.write_text(json.dumps(record, indent=2), encoding="utf-8")
        partial.replace(path)
