"""
Logging Utilities
=================

Every message goes to stdout and to the run log. Structured records (one per
orchestrator iteration, epsilon step or solver call) go to a JSON-lines file
next to it, so a run can be analysed without parsing the text log.
"""

import json
import math
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Optional, TextIO

RULE = "=" * 70


def _open_append(path: Path) -> TextIO:
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "a", encoding="utf-8")


def _jsonable(value: Any) -> Any:
    # NaN and infinities are not valid JSON
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item"):
        return _jsonable(value.item())
    return value


class DualLogger:
    """
    Mirrors console output into a run log and keeps a JSON-lines record stream.

    Either file is optional; without them the logger only prints.
    """

    def __init__(self, log_file: Optional[Path] = None, record_file: Optional[Path] = None):
        self._text: Optional[TextIO] = None
        self._records: Optional[TextIO] = None
        self.log_path: Optional[Path] = None
        self.record_path: Optional[Path] = None
        if log_file:
            self.set_log_file(log_file)
        if record_file:
            self.set_record_file(record_file)

    def set_log_file(self, log_file: Path) -> None:
        if self._text:
            self._text.close()
        self.log_path = log_file
        self._text = _open_append(log_file)
        self._text.write(f"\n{RULE}\nRun started: {datetime.now().isoformat()}\n{RULE}\n\n")
        self._text.flush()

    def set_record_file(self, record_file: Path) -> None:
        if self._records:
            self._records.close()
        self.record_path = record_file
        self._records = _open_append(record_file)

    def write(self, message: str, end: str = "\n", flush: bool = False) -> None:
        """
        Print a message and append it to the run log.

        Args:
            message: Text to write
            end: Terminator (default: newline)
            flush: Flush both streams immediately
        """
        print(message, end=end, flush=flush)
        if self._text is None:
            return
        self._text.write(f"{message}{end}")
        if flush:
            self._text.flush()

    def record(self, kind: str, payload: dict[str, Any]) -> None:
        """Append one structured record; ignored without a record file."""
        if self._records is None:
            return
        entry = {"ts": datetime.now().isoformat(), "kind": kind, **_jsonable(payload)}
        self._records.write(json.dumps(entry, sort_keys=True) + "\n")
        self._records.flush()

    def flush(self) -> None:
        sys.stdout.flush()
        for stream in (self._text, self._records):
            if stream:
                stream.flush()

    def close(self) -> None:
        if self._text:
            self._text.write(f"\nRun ended: {datetime.now().isoformat()}\n")
            self._text.close()
        if self._records:
            self._records.close()
        self._text = self._records = None

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()
        return False


_logger: Optional[DualLogger] = None


def get_logger() -> DualLogger:
    """Return the process-wide logger, creating a console-only one on first use."""
    global _logger
    if _logger is None:
        _logger = DualLogger()
    return _logger


def init_logger(output_dir: Path) -> DualLogger:
    """
    Start a fresh run log and record stream under ``<output_dir>/logs``.

    Returns:
        The new process-wide logger
    """
    global _logger
    if _logger:
        _logger.close()
    stem = Path(output_dir) / "logs" / f"run_{datetime.now():%Y%m%d_%H%M%S}"
    _logger = DualLogger(stem.with_suffix(".log"), stem.with_suffix(".jsonl"))
    return _logger


def log(message: str, end: str = "\n", flush: bool = False) -> None:
    get_logger().write(message, end=end, flush=flush)


def get_timestamp() -> str:
    return f"{datetime.now():%Y-%m-%d %H:%M:%S}"


def log_record(kind: str, payload: dict[str, Any]) -> None:
    get_logger().record(kind, payload)


def log_solve(name: str, status: str, duration_ms: float, detail: str = "") -> None:
    """
    Log one solver call and mirror it as a ``solve`` record.

    Args:
        name: What was solved (e.g. "MILP", "NLP eps=1e-04", "Audit")
        status: Outcome status string
        duration_ms: Wall time in milliseconds
        detail: Extra text such as objective or residual
    """
    logger = get_logger()
    line = f"[{get_timestamp()}] [{name}] {status} ({duration_ms:.0f}ms)"
    logger.write(f"{line} {detail}" if detail else line, flush=True)
    logger.record("solve", {"name": name, "status": status, "duration_ms": duration_ms, "detail": detail})


def close_logger() -> None:
    global _logger
    if _logger:
        _logger.close()
        _logger = None
