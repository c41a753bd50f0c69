"""
Utility functions for the application.
"""
import json
import logging
import os
import sys
import tempfile
from datetime import date, datetime
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pandas as pd

SECONDS_PER_HOUR = 3600.0


def setup_logging(level: str = "INFO") -> None:
    """Configure the root logger once for CLI and API entry points."""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def serialize_value(obj: Any) -> Any:
    """
    JSON fallback serializer for dates and numpy scalars.

    Raises:
        TypeError: If object is not serializable
    """
    if isinstance(obj, (date, datetime)):
        return obj.isoformat()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"Type {type(obj)} not serializable")


def hour_of_day(seconds: float) -> int:
    """Hour 0-23 of an absolute simulation time in seconds."""
    return int(seconds // SECONDS_PER_HOUR) % 24


def derive_seed(seed: int, *stream: int) -> int:
    """Independent, reproducible child seed for (seed, *stream)."""
    seq = np.random.SeedSequence([int(seed), *[int(s) for s in stream]])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _atomic_write(path: Path, write) -> Path:
    """Write through a temp file in the target directory, then rename over path."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    except OSError as e:
        raise OSError(f"Failed to write {path}: {e}") from e
    try:
        with os.fdopen(fd, "w", newline="") as f:
            write(f)
        os.replace(tmp_name, path)
    except OSError as e:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise OSError(f"Failed to write {path}: {e}") from e
    return path


def atomic_write_csv(df: pd.DataFrame, path: Path) -> Path:
    """Write a DataFrame as CSV atomically (write-then-rename)."""
    return _atomic_write(path, lambda f: df.to_csv(f, index=False))


def atomic_write_json(payload: Dict, path: Path) -> Path:
    """Write a JSON document atomically (write-then-rename)."""
    def write(f):
        json.dump(payload, f, indent=2, sort_keys=True, default=serialize_value)
        f.write("\n")
    return _atomic_write(path, write)
