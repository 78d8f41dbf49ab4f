import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

from ..services.estimator import EpisodeRecord
from ..utils.run_paths import RECORDS_FILE, ROWS_FILE, SUMMARY_FILE

_log = logging.getLogger('curricula.main')


def to_jsonable(obj: Any) -> Any:
    """numpy scalars and arrays to plain Python; non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, allow_nan=False)


def read_jsonl(path: Path) -> List[Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        return []
    with open(path, 'r', encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]


class RunLog:
    """Append-only per-job log: iteration rows, episode records and a summary document."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self.rows: List[Dict[str, Any]] = []
        self.summary: Optional[Dict[str, Any]] = None
        self.directory.mkdir(parents=True, exist_ok=True)
        # a fresh run replaces whatever an earlier run left behind
        for name in (ROWS_FILE, RECORDS_FILE, SUMMARY_FILE):
            (self.directory / name).unlink(missing_ok=True)

    def append_row(self, row: Dict[str, Any]) -> None:
        if self.rows and row["iter"] <= self.rows[-1]["iter"]:
            raise ValueError(f"iteration rows must increase: {row['iter']} after {self.rows[-1]['iter']}")
        clean = to_jsonable(row)
        self.rows.append(clean)
        with open(self.directory / ROWS_FILE, 'a', encoding='utf-8') as f:
            f.write(dumps(clean) + "\n")

    def append_records(self, records: Iterable[EpisodeRecord]) -> None:
        with open(self.directory / RECORDS_FILE, 'a', encoding='utf-8') as f:
            for record in records:
                f.write(dumps(record.to_dict()) + "\n")

    def write_summary(self, summary: Dict[str, Any]) -> None:
        self.summary = to_jsonable(summary)
        try:
            with open(self.directory / SUMMARY_FILE, 'w', encoding='utf-8') as f:
                json.dump(self.summary, f, indent=2, sort_keys=True)
        except OSError as e:
            _log.error(f"Failed to write run summary in {self.directory}: {e}")
            raise


def load_rows(directory: Path) -> List[Dict[str, Any]]:
    return read_jsonl(Path(directory) / ROWS_FILE)


def load_records(directory: Path) -> Dict[int, List[EpisodeRecord]]:
    """Episode records grouped by iteration."""
    grouped: Dict[int, List[EpisodeRecord]] = {}
    for row in read_jsonl(Path(directory) / RECORDS_FILE):
        record = EpisodeRecord.from_dict(row)
        grouped.setdefault(record.iteration, []).append(record)
    return grouped


def load_summary(directory: Path) -> Optional[Dict[str, Any]]:
    path = Path(directory) / SUMMARY_FILE
    if not path.exists():
        return None
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        _log.warning(f"Unreadable summary {path}: {e}")
        return None
