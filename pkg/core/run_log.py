"""JSONL run ledger: one record per command and one per sweep trace.

Every record written through one ``RunLog`` shares a ``run_id`` so the
entries of a sweep can be joined to the command that produced them.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

logger = logging.getLogger(__name__)

COMMAND = "command"
SWEEP_ENTRY = "sweep-entry"
RECORD_KINDS = (COMMAND, SWEEP_ENTRY)


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    kind: str
    name: str  # command name or sweep label
    status: str  # ok | failed
    timestamp: str
    duration_ms: Optional[int] = None
    error: Optional[str] = None
    artifact: Optional[str] = None
    kappa_e: Optional[float] = None
    config: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.status != "ok"


class RunLog:
    def __init__(self, root: Path, run_id: Optional[str] = None) -> None:
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        self._log_path = self._root / "run.log.jsonl"
        self._lock = threading.Lock()
        self.run_id = run_id or uuid.uuid4().hex[:12]

    def command(
        self,
        name: str,
        *,
        status: str,
        duration_ms: int,
        error: Optional[str] = None,
        config: Optional[str] = None,
    ) -> RunRecord:
        return self._append(
            RunRecord(
                run_id=self.run_id,
                kind=COMMAND,
                name=name,
                status=status,
                timestamp=_now(),
                duration_ms=duration_ms,
                error=error,
                config=config,
            )
        )

    def sweep_entry(
        self,
        label: str,
        *,
        artifact: str,
        kappa_e: float,
        status: str,
        duration_ms: int,
        error: Optional[str] = None,
    ) -> RunRecord:
        return self._append(
            RunRecord(
                run_id=self.run_id,
                kind=SWEEP_ENTRY,
                name=label,
                status=status,
                timestamp=_now(),
                duration_ms=duration_ms,
                error=error,
                artifact=artifact,
                kappa_e=kappa_e,
            )
        )

    def _append(self, record: RunRecord) -> RunRecord:
        line = json.dumps(asdict(record), ensure_ascii=False, sort_keys=True)
        with self._lock, self._log_path.open("a", encoding="utf-8") as handle:
            handle.write(line)
            handle.write("\n")
        return record

    def records(self, kind: Optional[str] = None, run_id: Optional[str] = None) -> List[RunRecord]:
        """Records in write order, optionally of one kind or one run."""
        if kind is not None and kind not in RECORD_KINDS:
            raise ValueError(f"unknown record kind {kind!r}")
        if not self._log_path.exists():
            return []
        result: List[RunRecord] = []
        for number, line in enumerate(self._log_path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = RunRecord(**json.loads(line))
            except (json.JSONDecodeError, TypeError) as exc:
                logger.warning("skipping unreadable run log line %d: %s", number, exc)
                continue
            if (kind is None or record.kind == kind) and (run_id is None or record.run_id == run_id):
                result.append(record)
        return result

    def failures(self, run_id: Optional[str] = None) -> List[RunRecord]:
        return [record for record in self.records(run_id=run_id) if record.failed]

    @property
    def log_path(self) -> Path:
        return self._log_path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()
