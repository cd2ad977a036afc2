"""
Result bundles: the files a CLI job writes to its output directory.

Every file goes through :class:`AtomicFile`, so a reader never sees a half-written artifact, and
the whole bundle is written while holding a :class:`BundleLock` on ``<output_dir>/.lock``.
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, Sequence

import numpy as np
from filelock import AcquireReturnProxy, Timeout
from filelock import FileLock as _FileLock

from .common import OutputLockedError, PathOrStr

logger = logging.getLogger(__name__)

LOCK_FILE = ".lock"
SUMMARY_FILE = "summary.json"
TIMINGS_FILE = "timings.json"
WEIGHTS_FILE = "weights.txt"
SCORES_FILE = "scores.txt"
TRAJECTORY_FILE = "trajectory.jsonl"
THRESHOLDS_FILE = "thresholds.json"
ROUNDING_FILE = "rounding.json"
BENCH_FILE = "bench.json"
VERIFY_FILE = "verify.json"


class AtomicFile:
    """
    Writes ``filename`` through a sibling temporary file that replaces it on a clean exit.

    The temporary file is deleted when the block raises, leaving any previous version intact.
    """

    def __init__(self, filename: PathOrStr, mode: str = "w", suffix: str = ".tmp") -> None:
        self.filename = Path(filename)
        self.directory = os.path.dirname(self.filename) or "."
        self.mode = mode
        self.temp_file = tempfile.NamedTemporaryFile(
            self.mode,
            dir=self.directory,
            delete=False,
            suffix=suffix,
            encoding=None if "b" in mode else "utf-8",
        )

    def __enter__(self):
        return self.temp_file

    def __exit__(self, exc_type, exc_value, traceback):
        self.temp_file.close()
        if exc_value is None:
            logger.debug("Renaming temp file %s to %s", self.temp_file.name, self.filename)
            os.replace(self.temp_file.name, self.filename)
            return True
        logger.debug("removing temp file %s", self.temp_file.name)
        os.remove(self.temp_file.name)
        return False


class BundleLock(_FileLock):
    """
    Exclusive lock on ``<output_dir>/.lock``, held while a job writes its bundle.

    :raises OutputLockedError: From :meth:`acquire` when ``timeout`` runs out.
    """

    def __init__(self, output_dir: PathOrStr, timeout: float = -1) -> None:
        self.output_dir = Path(output_dir)
        super().__init__(str(self.output_dir / LOCK_FILE), timeout=timeout)

    def acquire(  # type: ignore[override]
        self, timeout=None, poll_interval=0.05, **kwargs
    ) -> AcquireReturnProxy:
        logger.debug("Locking output directory %s", self.output_dir)
        try:
            return super().acquire(timeout=timeout, poll_interval=poll_interval, **kwargs)
        except Timeout as err:
            raise OutputLockedError(
                f"output directory {self.output_dir} is locked by another job"
            ) from err


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    return value


def dumps(document: Any) -> str:
    """
    Stable JSON rendering: sorted keys, fixed indentation and ``repr`` round-trip floats.
    """
    return json.dumps(_jsonable(document), sort_keys=True, indent=2) + "\n"


def dumps_line(document: Any) -> str:
    """
    Single-line JSON rendering, for JSON lines files.
    """
    return json.dumps(_jsonable(document), sort_keys=True) + "\n"


class ResultBundle:
    """
    Writer for the artifacts of one job.

    :meth:`write_summary` only accepts deterministic quantities. Wall-clock times belong in
    :meth:`write_timings`.
    """

    def __init__(self, output_dir: PathOrStr, timeout: float = -1) -> None:
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.lock = BundleLock(self.output_dir, timeout=timeout)
        self.written: Dict[str, Path] = {}

    def __enter__(self) -> "ResultBundle":
        self.lock.acquire()
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        self.lock.release()
        if exc_value is None:
            logger.info("Wrote %d files to %s", len(self.written), self.output_dir)
        return False

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def write_text(self, name: str, text: str) -> Path:
        path = self.path(name)
        with AtomicFile(path) as handle:
            handle.write(text)
        self.written[name] = path
        return path

    def write_json(self, name: str, document: Any) -> Path:
        return self.write_text(name, dumps(document))

    def write_lines(self, name: str, records: Iterable[Dict[str, Any]]) -> Path:
        return self.write_text(
            name, "".join(dumps_line(r) for r in records)
        )

    def write_vector(self, name: str, values: Sequence[float]) -> Path:
        return self.write_text(name, "".join(f"{float(v)!r}\n" for v in values))

    def write_summary(self, summary: Dict[str, Any]) -> Path:
        return self.write_json(SUMMARY_FILE, summary)

    def write_timings(self, timings: Dict[str, float]) -> Path:
        return self.write_json(TIMINGS_FILE, timings)
