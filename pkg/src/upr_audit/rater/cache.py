from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path


def stmt_hash(statement: str) -> str:
    return hashlib.sha256(statement.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Rating:
    statement: str
    value: int
    provider: str
    profile: str
    flagged: bool = False

    def __post_init__(self):
        if not (isinstance(self.value, int) and 0 <= self.value <= 10):
            raise ValueError(f"rating must be an integer in 0..10, got {self.value!r}")

    @property
    def key(self) -> tuple[str, str, str]:
        return (stmt_hash(self.statement), self.provider, self.profile)

    def to_record(self, timestamp: float | None = None) -> dict:
        return {
            "key": {"stmt_hash": stmt_hash(self.statement), "provider": self.provider,
                    "profile": self.profile},
            "stmt": self.statement,
            "value": self.value,
            "flagged": self.flagged,
            "timestamp": time.time() if timestamp is None else timestamp,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Rating":
        return cls(rec["stmt"], int(rec["value"]), rec["key"]["provider"],
                   rec["key"]["profile"], bool(rec.get("flagged", False)))


def read_records(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: bad record: {exc}") from exc
    return records


class RecordLog:
    """Append-only JSON-lines file; one writer at a time."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


class RatingCache:
    """Ratings keyed by (statement hash, provider, profile).

    With a ``path`` every new rating is appended to that file, and reopening
    the file restores the same entries (later records win).
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.entries: dict[tuple[str, str, str], Rating] = {}
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()
        self._log = RecordLog(self.path) if self.path else None
        if self.path and self.path.exists():
            for rec in read_records(self.path):
                r = Rating.from_record(rec)
                self.entries[r.key] = r

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, statement: str, provider: str, profile: str) -> Rating | None:
        with self._lock:
            r = self.entries.get((stmt_hash(statement), provider, profile))
            if r is None:
                self.misses += 1
            else:
                self.hits += 1
            return r

    def put(self, rating: Rating) -> None:
        with self._lock:
            self.entries[rating.key] = rating
            if self._log is not None:
                self._log.append(rating.to_record())
