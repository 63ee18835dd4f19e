from __future__ import annotations

import logging
import os
from pathlib import Path

from .core import Dataset, EmptyDatasetError, FileEntry, ValidationError

log = logging.getLogger(__name__)


def scan_directory(path: "str | Path", name: str | None = None) -> Dataset:
    """Recursively list regular files under ``path``.

    Ids are POSIX paths relative to ``path`` in lexicographic order. Entries
    that cannot be stat'ed, and empty files, are skipped and counted in a
    single warning.
    """
    root = Path(path)
    if not root.is_dir():
        raise ValidationError(f"not a readable directory: {root}")
    entries: list[FileEntry] = []
    skipped: list[str] = []

    def onerror(err: OSError):
        skipped.append(str(err.filename))

    found = []
    for dirpath, dirnames, filenames in os.walk(root, onerror=onerror):
        dirnames.sort()
        for fn in filenames:
            full = Path(dirpath) / fn
            found.append(full.relative_to(root).as_posix())
    for rel in sorted(found):
        try:
            st = (root / rel).stat()
        except OSError:
            skipped.append(rel)
            continue
        if st.st_size <= 0:
            skipped.append(rel)
            continue
        entries.append(FileEntry(rel, st.st_size))
    if skipped:
        log.warning("skipped %d unreadable or empty entries under %s", len(skipped), root)
    if not entries:
        raise EmptyDatasetError(f"empty dataset: no readable files under {root}")
    return Dataset(tuple(entries), name or root.name)
