"""Canonical lockfiles (``env.lock.json``) and restore.

Layout, top-level keys always in this order::

    {
      "tool_version": "vpm 0.1.0",
      "snapshot": {"branch": ..., "platform": ..., "revision": ..., "sequence": ...},
      "roots":    [{"name": ..., "range": ...}, ...],
      "resolved": {"mode": "nested", "trees": [...]}  |  {"mode": "flat", "pins": {...}},
      "hashes":   {"algorithm": "sha256", "packages": {"name@version": "<hex>", ...}}
    }

Nested objects have sorted keys; text is UTF-8 with LF endings and a single
trailing newline. Writing the same inputs twice gives identical bytes.
"""

from __future__ import annotations

import json
import os
import re
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from . import _io
from .errors import (
    IncompleteResolution,
    LockfileCorrupt,
    PayloadHashMismatch,
    StoreModeMismatch,
)
from .resolver import InstallPlan, ResolutionTree, distinct_packages
from .store import TOOL_VERSION, VERSIONED, LibraryStore, Resolution, Session
from .version import Version

LOCK_FILENAME = "env.lock.json"
SNAPSHOT_FILE = ".snapshot.json"
DEFAULT_PLATFORM = "unspecified"

_HEX64 = re.compile(r"[0-9a-f]{64}")


@dataclass(frozen=True)
class Snapshot:
    branch: str | None = None
    revision: int | None = None
    sequence: int = 0
    platform: str = DEFAULT_PLATFORM

    def to_dict(self) -> dict:
        return {"branch": self.branch, "platform": self.platform,
                "revision": self.revision, "sequence": self.sequence}

    @classmethod
    def from_dict(cls, doc: dict) -> Snapshot:
        return cls(doc.get("branch"), doc.get("revision"), doc.get("sequence", 0),
                   doc.get("platform", DEFAULT_PLATFORM))


@dataclass(frozen=True)
class Lockfile:
    roots: tuple[tuple[str, str], ...]
    hashes: Mapping[tuple[str, Version], str]
    trees: tuple[ResolutionTree, ...] = ()
    pins: Mapping[str, Version] | None = None
    snapshot: Snapshot = field(default_factory=Snapshot)
    tool_version: str = TOOL_VERSION
    algorithm: str = _io.HASH_ALGORITHM

    @property
    def mode(self) -> str:
        return "flat" if self.pins is not None else "nested"

    def packages(self) -> list[tuple[str, Version]]:
        if self.pins is not None:
            return sorted(self.pins.items())
        return distinct_packages(self.trees)

    def resolution(self) -> Resolution:
        if self.pins is not None:
            return InstallPlan(dict(self.pins), tuple(n for n, _ in self.roots), self.roots)
        return list(self.trees)

    def to_dict(self) -> dict:
        if self.pins is not None:
            resolved = {"mode": "flat", "pins": {n: str(v) for n, v in sorted(self.pins.items())}}
        else:
            resolved = {"mode": "nested", "trees": [t.to_dict() for t in self.trees]}
        return {
            "tool_version": self.tool_version,
            "snapshot": self.snapshot.to_dict(),
            "roots": [{"name": n, "range": r} for n, r in self.roots],
            "resolved": resolved,
            "hashes": {
                "algorithm": self.algorithm,
                "packages": {f"{n}@{v}": h for (n, v), h in
                             sorted(self.hashes.items(), key=lambda kv: (kv[0][0], kv[0][1].components))},
            },
        }

    def dumps(self) -> str:
        doc = self.to_dict()
        parts = [f"  {json.dumps(key)}: {_indent(json.dumps(doc[key], indent=2, sort_keys=True, ensure_ascii=False))}"
                 for key in ("tool_version", "snapshot", "roots", "resolved", "hashes")]
        return "{\n" + ",\n".join(parts) + "\n}\n"

    def check(self) -> Lockfile:
        """Internal consistency: every resolved package has exactly one valid hash."""
        if not self.roots:
            raise LockfileCorrupt("lockfile has no roots")
        if self.algorithm != _io.HASH_ALGORITHM:
            raise LockfileCorrupt(f"unsupported hash algorithm {self.algorithm!r}")
        packages = set(self.packages())
        if packages != set(self.hashes):
            raise LockfileCorrupt("hash table does not match the resolved packages")
        for (name, version), digest in self.hashes.items():
            if not _HEX64.fullmatch(digest):
                raise LockfileCorrupt(f"{name}@{version}: malformed hash")
        if self.pins is None:
            if [(t.name, t.range) for t in self.trees] != list(self.roots):
                raise LockfileCorrupt("roots do not match the resolved trees")
        elif not {n for n, _ in self.roots} <= set(self.pins):
            raise LockfileCorrupt("a root is missing from the pins")
        return self

    @classmethod
    def parse(cls, text: str) -> Lockfile:
        try:
            doc = json.loads(text)
            resolved = doc["resolved"]
            hashes = {}
            for label, digest in doc["hashes"]["packages"].items():
                name, _, version = label.rpartition("@")
                hashes[(name, Version.parse(version))] = digest
            if resolved["mode"] == "flat":
                pins = {n: Version.parse(v) for n, v in resolved["pins"].items()}
                trees = ()
            elif resolved["mode"] == "nested":
                pins = None
                trees = tuple(ResolutionTree.from_dict(t) for t in resolved["trees"])
            else:
                raise LockfileCorrupt(f"unknown resolution mode {resolved['mode']!r}")
            lock = cls(
                roots=tuple((r["name"], r["range"]) for r in doc["roots"]),
                hashes=hashes,
                trees=trees,
                pins=pins,
                snapshot=Snapshot.from_dict(doc["snapshot"]),
                tool_version=doc["tool_version"],
                algorithm=doc["hashes"]["algorithm"],
            )
        except LockfileCorrupt:
            raise
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise LockfileCorrupt(f"unreadable lockfile: {exc}") from None
        return lock.check()


def _indent(text: str) -> str:
    return text.replace("\n", "\n  ")


def _sort_trees(trees) -> tuple[ResolutionTree, ...]:
    return tuple(sorted(trees, key=lambda t: (t.name, t.version.components, t.range)))


def build_lock(resolution: Resolution, hashes: Mapping[tuple[str, Version], str], *,
               snapshot: Snapshot | None = None) -> Lockfile:
    snapshot = snapshot or Snapshot()
    if isinstance(resolution, InstallPlan):
        if not resolution.pins or not resolution.requests:
            raise IncompleteResolution("install plan pins nothing")
        packages = resolution.packages()
        trees, pins = (), dict(resolution.pins)
        roots = tuple(sorted(resolution.requests))
    else:
        trees = _sort_trees(resolution)
        if not trees:
            raise IncompleteResolution("no resolved roots")
        packages = distinct_packages(trees)
        pins = None
        roots = tuple((t.name, t.range) for t in trees)
    missing = [f"{n}@{v}" for n, v in packages if (n, v) not in hashes]
    if missing:
        raise IncompleteResolution("no payload hash for " + ", ".join(missing))
    return Lockfile(roots, {k: hashes[k] for k in packages}, trees, pins, snapshot).check()


def write_lock(resolution: Resolution, repo, *, branch: str | None = None,
               revision: int | None = None, platform: str = DEFAULT_PLATFORM) -> str:
    """Canonical lockfile text for a resolution, with hashes from ``repo``'s archive.

    ``branch`` binds the lock to the snapshot it was resolved from; restore
    never consults it.
    """
    if branch is not None and revision is None and branch != "unstable":
        revision = repo.branch(branch).revision
    packages = resolution.packages() if isinstance(resolution, InstallPlan) else distinct_packages(resolution)
    hashes = {(n, v): repo.entry(n, v).payload_hash for n, v in packages}
    snapshot = Snapshot(branch, revision, repo.sequence, platform)
    return build_lock(resolution, hashes, snapshot=snapshot).dumps()


def lock_store(store: LibraryStore, repo=None, *, branch: str | None = None,
               platform: str | None = None, session: Session | None = None) -> str:
    """Lockfile text for what a store has recorded.

    Uses the recorded nested trees (restricted to the session's loaded packages
    when ``session`` is given), otherwise the recorded flat plan. A store that
    was produced by :func:`restore` keeps the original snapshot binding.
    """
    recorded = store.root / SNAPSHOT_FILE
    if recorded.exists():
        snapshot = Snapshot.from_dict(_io.read_json(recorded))
    elif repo is not None:
        revision = repo.branch(branch).revision if branch not in (None, "unstable") else None
        snapshot = Snapshot(branch, revision, repo.sequence)
    else:
        snapshot = Snapshot(branch)
    if platform is not None:
        snapshot = Snapshot(snapshot.branch, snapshot.revision, snapshot.sequence, platform)

    resolution: Resolution = store.trees()
    if session is not None:
        wanted = {(p.name, p.version) for p in session.loaded.values()}
        resolution = [t for t in resolution if (t.name, t.version) in wanted]
        covered = {(t.name, t.version) for t in resolution}
        resolution += [ResolutionTree(n, v, (), f"=={v}") for n, v in sorted(wanted - covered)]
    elif not resolution:
        resolution = store.plan()
        if resolution is None:
            raise IncompleteResolution(f"{store.root} records no resolution")

    packages = resolution.packages() if isinstance(resolution, InstallPlan) else distinct_packages(resolution)
    hashes = {(n, v): store.meta(n, v)["payload_hash"] for n, v in packages}
    return build_lock(resolution, hashes, snapshot=snapshot).dumps()


class _VerifiedSource:
    """Archive facade serving payloads that were already checked against the lock."""

    def __init__(self, repo, payloads):
        self.repo = repo
        self.payloads = payloads

    def entry(self, name, version):
        return self.repo.entry(name, version)

    def payload(self, name, version, verify=True):
        return self.payloads[(name, version)]


def restore(lock_text: str, repo, store_root: Path | str) -> LibraryStore:
    """Rebuild the locked environment from the archive into a versioned store.

    Pins come from the lockfile; nothing is re-resolved. Every payload is
    fetched and checked against the recorded hash before anything is written.
    A store that does not exist yet is assembled in a temporary directory and
    renamed into place at the end.
    """
    lock = Lockfile.parse(lock_text)
    payloads = {}
    for name, version in lock.packages():
        entry = repo.entry(name, version)
        data = repo.payload(name, version, verify=False)
        expected = lock.hashes[(name, version)]
        if entry.payload_hash != expected or _io.digest(data) != expected:
            raise PayloadHashMismatch(f"{name} {version}: archive payload differs from the locked hash")
        payloads[(name, version)] = data
    source = _VerifiedSource(repo, payloads)

    root = Path(store_root)
    fresh = not root.exists() or not any(root.iterdir())
    if fresh:
        root.parent.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(dir=root.parent, prefix=f".{root.name}.restore-"))
        try:
            _populate(LibraryStore(staging, VERSIONED), lock, source)
            if root.exists():
                root.rmdir()
            os.replace(staging, root)
        except BaseException:
            shutil.rmtree(staging, ignore_errors=True)
            raise
        return LibraryStore(root)

    store = LibraryStore(root)
    if store.mode != VERSIONED:
        raise StoreModeMismatch("restore needs a versioned store")
    _populate(store, lock, source)
    return store


def _populate(store: LibraryStore, lock: Lockfile, source) -> None:
    store.install(lock.resolution(), source)
    _io.atomic_write(store.root / SNAPSHOT_FILE, _io.dump_json(lock.snapshot.to_dict()))
