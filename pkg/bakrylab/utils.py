"""Utility functions for bakrylab runs."""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import List, Optional

import psutil
from rich.logging import RichHandler

from .ui import console

LOG_FILE = "run.log"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def ensure_directory(path: Path) -> Path:
    """Create a directory (and parents) if it doesn't exist."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def setup_logging(debug: bool = False) -> None:
    """Console logging through rich; file handlers are attached per run."""
    root = logging.getLogger("bakrylab")
    root.setLevel(logging.DEBUG if debug else logging.INFO)
    if not any(isinstance(h, RichHandler) for h in root.handlers):
        handler = RichHandler(console=console, show_time=False, show_path=debug, markup=False)
        handler.setLevel(logging.DEBUG if debug else logging.WARNING)
        root.addHandler(handler)


def attach_run_log(directory: Path) -> logging.Handler:
    """Write timestamped log records of one run to `run.log` in its directory."""
    handler = logging.FileHandler(ensure_directory(directory) / LOG_FILE, mode="w")
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler.setLevel(logging.DEBUG)
    logging.getLogger("bakrylab").addHandler(handler)
    return handler


def detach_run_log(handler: logging.Handler) -> None:
    logging.getLogger("bakrylab").removeHandler(handler)
    handler.close()


def worker_count(requested: Optional[int] = None, jobs: Optional[int] = None) -> int:
    """Number of sweep workers: physical cores by default, never more than the jobs."""
    if requested is not None and requested > 0:
        count = requested
    else:
        count = psutil.cpu_count(logical=False) or psutil.cpu_count() or os.cpu_count() or 1
    if jobs is not None:
        count = min(count, max(jobs, 1))
    return max(count, 1)


def parse_values(text: str) -> List[float]:
    """Parse a comma separated list of numbers; an empty string gives an empty list."""
    values = [item.strip() for item in text.split(",") if item.strip()]
    try:
        return [float(item) for item in values]
    except ValueError as e:
        raise ValueError(f"invalid value list '{text}': {e}") from e
