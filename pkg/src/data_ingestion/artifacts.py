"""
Artifact I/O for pipeline stages.

Tables are written as UTF-8 CSV with 17 significant digits so that
repeated runs produce byte-identical files and reloads are exact.
"""
import hashlib
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Union

import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def write_table(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Write a DataFrame as a deterministic CSV table."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8")
    logger.debug("Wrote %s (%d rows)", path, len(frame))
    return path


def read_table(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(Path(path), encoding="utf-8")


def missing_artifacts(directory: Union[str, Path], names: Iterable[str]) -> List[str]:
    directory = Path(directory)
    return [n for n in names if not (directory / n).exists()]


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def hash_directory(directory: Union[str, Path], exclude: Iterable[str] = ()) -> Dict[str, str]:
    """SHA-256 of every file below ``directory``, keyed by relative path."""
    directory = Path(directory)
    exclude = set(exclude)
    hashes = {}
    for path in sorted(p for p in directory.rglob("*") if p.is_file()):
        rel = path.relative_to(directory).as_posix()
        if rel in exclude:
            continue
        hashes[rel] = sha256_file(path)
    return hashes
