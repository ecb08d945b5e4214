"""
Append-only run registry.

Layout under the registry root:

    <run_id>/
        record.json     - RunRecord
        model.ckpt      - checkpoint (pre-training runs only)
        history.json    - per-epoch training history

Each record lives in its own directory named by run_id, so concurrent
writers never share a file. An existing record is never rewritten.
"""

import json
import logging
import os
from pathlib import Path
from typing import Iterator, List, Optional

from .errors import RunNotFoundError
from .experiment.records import RunRecord

logger = logging.getLogger(__name__)

REGISTRY_ENV = "NTLBENCH_REGISTRY"
RECORD_FILE = "record.json"


class RunRegistry:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    @classmethod
    def from_env(cls, default: str | Path = "runs") -> "RunRegistry":
        """Root from $NTLBENCH_REGISTRY, falling back to `default`."""
        return cls(os.environ.get(REGISTRY_ENV) or default)

    def run_dir(self, run_id: str) -> Path:
        return self.root / run_id

    def contains(self, run_id: str) -> bool:
        return (self.run_dir(run_id) / RECORD_FILE).exists()

    def append(self, record: RunRecord) -> Path:
        """Store a record; returns its path. A run_id already present is left untouched."""
        path = self.run_dir(record.run_id) / RECORD_FILE
        if path.exists():
            logger.info("run %s already registered; keeping the stored record", record.run_id)
            return path
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(record.model_dump(mode="json", by_alias=True), indent=2))
        os.replace(tmp, path)
        return path

    def load(self, run_id: str) -> RunRecord:
        path = self.run_dir(run_id) / RECORD_FILE
        if not path.exists():
            raise RunNotFoundError(run_id)
        return RunRecord.model_validate_json(path.read_text())

    def list_ids(self) -> List[str]:
        if not self.root.exists():
            return []
        return sorted(p.parent.name for p in self.root.glob(f"*/{RECORD_FILE}"))

    def records(self, run_ids: Optional[List[str]] = None) -> Iterator[RunRecord]:
        for run_id in (self.list_ids() if run_ids is None else run_ids):
            yield self.load(run_id)
