"""
core/manager.py
~~~~~~~~~~~~~~~
Run orchestration.

Responsibilities:
- Create the output directory and write JSON artifacts (manifest, result)
- Own the worker pool sized by ``--jobs`` (None when running inline)
- Turn SIGINT into a stop event the optimizers poll
- Stream trace rows to CSV as they are recorded
"""

from __future__ import annotations

import csv
import json
import logging
import platform
import signal
import threading
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Callable, TextIO

import numpy as np
import pydantic

from core import __version__
from core.hybrid import TracePoint
from core.models import RunConfig

logger = logging.getLogger("sagrape.manager")


class RunState(str, Enum):
    """Lifecycle of one command invocation."""
    PENDING = "pending"
    RUNNING = "running"
    FINISHED = "finished"
    FAILED = "failed"
    INTERRUPTED = "interrupted"


class RunManager:
    """
    Context manager around one command run.

    Usage::

        with RunManager(config, "optimize", jobs=4) as run:
            optimize(..., executor=run.executor, stop_check=run.stop_requested)
            run.write_json("result.json", summary)
    """

    def __init__(
        self,
        config: RunConfig,
        command: str,
        jobs: int = 1,
        out_dir: str | Path | None = None,
        seeds: dict[str, int] | None = None,
        on_state_change: Callable[[RunState], None] | None = None,
    ) -> None:
        if jobs < 1:
            raise ValueError(f"jobs must be ≥ 1, got: {jobs}")
        self._config = config
        self._command = command
        self._jobs = jobs
        self._out_dir = Path(out_dir) if out_dir is not None else config.resolve_path(config.output_dir)
        self._on_state_change = on_state_change

        self._state = RunState.PENDING
        self._state_lock = threading.Lock()
        self._stop_event = threading.Event()
        self._executor: ThreadPoolExecutor | None = None
        self._previous_handler: Any = None
        self._started: datetime | None = None
        self._artifacts: list[str] = []
        self._seeds = dict(seeds or {})
        self._manifest_extra: dict[str, Any] = {}

    # ──────────────────────────────────────────────
    #  Properties
    # ──────────────────────────────────────────────

    @property
    def state(self) -> RunState:
        with self._state_lock:
            return self._state

    @property
    def out_dir(self) -> Path:
        return self._out_dir

    @property
    def executor(self) -> ThreadPoolExecutor | None:
        return self._executor

    @property
    def artifacts(self) -> list[str]:
        return list(self._artifacts)

    def stop_requested(self) -> bool:
        return self._stop_event.is_set()

    def request_stop(self) -> None:
        if not self._stop_event.is_set():
            logger.warning("Stop requested; finishing the current iteration")
        self._stop_event.set()

    def _set_state(self, state: RunState) -> None:
        with self._state_lock:
            self._state = state
        if self._on_state_change:
            try:
                self._on_state_change(state)
            except Exception:
                logger.debug("State callback failed", exc_info=True)

    # ──────────────────────────────────────────────
    #  Lifecycle
    # ──────────────────────────────────────────────

    def __enter__(self) -> "RunManager":
        self._out_dir.mkdir(parents=True, exist_ok=True)
        self._started = datetime.now(timezone.utc)
        if self._jobs > 1:
            self._executor = ThreadPoolExecutor(max_workers=self._jobs, thread_name_prefix="Sagrape-Worker")
        if threading.current_thread() is threading.main_thread():
            self._previous_handler = signal.signal(signal.SIGINT, self._on_sigint)
        self._set_state(RunState.RUNNING)
        self._write_manifest()
        logger.info("%s run started: out=%s, jobs=%d", self._command, self._out_dir, self._jobs)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:  # noqa: ANN001
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
        if self._previous_handler is not None:
            signal.signal(signal.SIGINT, self._previous_handler)
            self._previous_handler = None

        if exc_type is not None:
            self._set_state(RunState.FAILED)
        elif self._stop_event.is_set():
            self._set_state(RunState.INTERRUPTED)
        else:
            self._set_state(RunState.FINISHED)
        self._write_manifest()
        logger.info("%s run %s", self._command, self.state.value)

    def _on_sigint(self, signum, frame) -> None:  # noqa: ANN001
        self.request_stop()

    # ──────────────────────────────────────────────
    #  Artifacts
    # ──────────────────────────────────────────────

    def path(self, name: str) -> Path:
        """Artifact path inside the output directory, recorded for the manifest."""
        if name not in self._artifacts:
            self._artifacts.append(name)
        return self._out_dir / name

    def write_json(self, name: str, payload: dict[str, Any]) -> Path:
        target = self.path(name)
        target.write_text(json.dumps(payload, indent=2, ensure_ascii=False, default=_json_default) + "\n", encoding="utf-8")
        logger.debug("Wrote %s", target)
        return target

    def note(self, key: str, value: Any) -> None:
        """Add an entry to the manifest; it is rewritten when the run ends."""
        self._manifest_extra[key] = value

    def _write_manifest(self) -> Path:
        """Everything needed to rerun: resolved config, seeds, versions."""
        manifest = {
            "command": self._command,
            "version": __version__,
            "started_utc": self._started.isoformat() if self._started else None,
            "state": self.state.value,
            "jobs": self._jobs,
            "seeds": self._seeds,
            "artifacts": self.artifacts,
            "environment": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "pydantic": pydantic.VERSION,
            },
            "config": self._config.model_dump(mode="json"),
            **self._manifest_extra,
        }
        return self.write_json("manifest.json", manifest)


def _json_default(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Not JSON serializable: {type(value).__name__}")


class TraceWriter:
    """Appends trace points to CSV and flushes each row, so partial traces survive failures."""

    HEADER = ("iteration", "evals", "wallclock_s", "fidelity")

    def __init__(self, path: str | Path) -> None:
        self._path = Path(path)
        self._fh: TextIO | None = None
        self._writer: Any = None
        self.rows = 0

    def __enter__(self) -> "TraceWriter":
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self._path.open("w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(self.HEADER)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:  # noqa: ANN001
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __call__(self, point: TracePoint) -> None:
        if self._writer is None:
            raise RuntimeError("TraceWriter used outside its context")
        self._writer.writerow(
            (point.iteration, point.evaluations, repr(float(point.wallclock_s)), repr(float(point.fidelity)))
        )
        self._fh.flush()  # type: ignore[union-attr]
        self.rows += 1
