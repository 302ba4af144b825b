from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

HASH_ALGORITHM = "sha256"


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def atomic_write(path: Path, data: bytes | str) -> None:
    """Write ``data`` to a sibling temp file, then rename it over ``path``."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def dump_json(doc) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def read_json(path: Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def tree_digest(root: Path, exclude: frozenset[str] = frozenset()) -> str:
    """Hash of every regular file below ``root`` (relative path + content)."""
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        if rel in exclude:
            continue
        h.update(rel.encode("utf-8") + b"\0")
        h.update(digest(path.read_bytes()).encode("ascii"))
    return h.hexdigest()
