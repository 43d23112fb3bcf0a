"""
utils/logger.py
~~~~~~~~~~~~~~~
Rich console logging plus a rotating DEBUG log file.

Python warnings (numpy overflow / invalid-value RuntimeWarnings raised inside
propagator products) are routed into the same handlers so they land in the
run log next to the iteration that caused them.
"""

from __future__ import annotations

import logging
import logging.handlers
from pathlib import Path

from rich.console import Console
from rich.logging import RichHandler

# ── Constants ──

LOG_DIR = Path(__file__).resolve().parent.parent / "logs"
LOG_NAME = "sagrape.log"
MAX_BYTES = 5 * 1024 * 1024  # 5 MB
BACKUP_COUNT = 3
FILE_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)-18s | %(threadName)-12s | %(message)s"

# Tables go to stdout (utils.helpers); log lines stay on stderr
console = Console(stderr=True)


def setup_logging(level: str = "INFO", log_dir: str | Path | None = None) -> Path:
    """
    Configure the root logger and return the log file path.

    Calling again closes and replaces the previous handlers.
    """
    directory = Path(log_dir) if log_dir is not None else LOG_DIR
    directory.mkdir(parents=True, exist_ok=True)
    log_file = directory / LOG_NAME
    console_level = getattr(logging, level.upper(), logging.INFO)

    root = logging.getLogger()
    root.setLevel(logging.DEBUG)
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    file_handler = logging.handlers.RotatingFileHandler(
        filename=str(log_file),
        maxBytes=MAX_BYTES,
        backupCount=BACKUP_COUNT,
        encoding="utf-8",
    )
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
    root.addHandler(file_handler)

    rich_handler = RichHandler(
        console=console,
        level=console_level,
        show_path=False,
        rich_tracebacks=True,
        markup=False,
    )
    rich_handler.setFormatter(logging.Formatter("%(message)s", datefmt="[%H:%M:%S]"))
    root.addHandler(rich_handler)

    # numpy RuntimeWarnings from overflowing propagators
    logging.captureWarnings(True)

    logging.getLogger("sagrape").debug("Logging ready: console=%s file=%s", logging.getLevelName(console_level), log_file)
    return log_file
