"""Installed libraries and load sessions.

A :class:`LibraryStore` is a directory of installed packages in one of two
layouts:

``versioned``
    one directory per (name, version), ``<root>/<name>_<version>/``. Existing
    directories are never touched again, so any number of versions coexist.
    Nested resolutions also leave a record of their logical tree in
    ``<root>/.trees/<name>@<version>.json``; physical directories are shared.

``legacy``
    one directory per name, ``<root>/<name>/``. Installing another version
    silently replaces the old one; the replacement is still written to the
    event log.

Each package directory holds the unpacked payload plus a ``.meta`` file with
the manifest, payload hash and a content hash of the unpacked files.
``<root>/.events.log`` receives one JSON line per install event.
"""

from __future__ import annotations

import io
import json
import os
import shutil
import tarfile
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

from filelock import FileLock

from . import _io, __version__
from .errors import (
    Conflict,
    NoInstalledMatch,
    StoreCorrupt,
    StoreModeMismatch,
    VersionConflict,
)
from .manifest import NAME_PATTERN
from .ranges import RangeDescriptor, coerce_range, max_satisfying, satisfies
from .resolver import InstallPlan, ResolutionTree, distinct_packages, resolve_flat, resolve_nested
from .version import Version

VERSIONED = "versioned"
LEGACY = "legacy"
FLAT = "flat"

META = ".meta"
STORE_FILE = ".store.json"
EVENTS_FILE = ".events.log"
TREES_DIR = ".trees"
PLAN_FILE = ".plan.json"

TOOL_VERSION = f"vpm {__version__}"

Resolution = Union[Sequence[ResolutionTree], InstallPlan]


class UnstableWarning(UserWarning):
    """A package installed from the unstable branch was installed or loaded."""


def dir_name(name: str, version: Version) -> str:
    return f"{name}_{version}"


def split_dir_name(dirname: str) -> tuple[str, Version] | None:
    name, sep, version = dirname.partition("_")
    if not sep or not NAME_PATTERN.fullmatch(name):
        return None
    try:
        return name, Version.parse(version)
    except ValueError:
        return None


def unpack(payload: bytes, dest: Path) -> None:
    """Extract a tar payload into ``dest``; anything else is stored verbatim."""
    dest.mkdir(parents=True, exist_ok=True)
    try:
        archive = tarfile.open(fileobj=io.BytesIO(payload), mode="r:*")
    except Exception:
        (dest / "payload").write_bytes(payload)
        return
    with archive:
        archive.extractall(dest, filter="data")


def pack_directory(path: Path, exclude: Iterable[str] = ()) -> bytes:
    """Deterministic uncompressed tar of a directory (sorted, zeroed metadata)."""
    exclude = set(exclude)
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w", format=tarfile.PAX_FORMAT) as tar:
        for item in sorted(path.rglob("*")):
            rel = item.relative_to(path).as_posix()
            if rel in exclude or not item.is_file():
                continue
            info = tarfile.TarInfo(rel)
            data = item.read_bytes()
            info.size = len(data)
            info.mode = 0o644
            info.mtime = 0
            tar.addfile(info, io.BytesIO(data))
    return buf.getvalue()


class LibraryStore:
    def __init__(self, root: Path | str, mode: str | None = None):
        self.root = Path(root)
        marker = self.root / STORE_FILE
        if marker.exists():
            stored = _io.read_json(marker)["mode"]
            if mode is not None and mode != stored:
                raise StoreModeMismatch(f"{self.root} is a {stored} store, not {mode}")
            mode = stored
        mode = mode or VERSIONED
        if mode not in (VERSIONED, LEGACY):
            raise ValueError(f"unknown store mode {mode!r}")
        self.mode = mode
        self.root.mkdir(parents=True, exist_ok=True)
        if not marker.exists():
            _io.atomic_write(marker, _io.dump_json({"mode": mode}))
        self.lock = FileLock(str(self.root / ".lock"))

    # -- reading ----------------------------------------------------------

    def package_dir(self, name: str, version: Version) -> Path:
        if self.mode == LEGACY:
            return self.root / name
        return self.root / dir_name(name, version)

    def installed(self) -> dict[str, list[Version]]:
        """Installed versions per name, ascending."""
        out: dict[str, list[Version]] = {}
        for child in sorted(self.root.iterdir()):
            if child.name.startswith(".") or not (child / META).is_file():
                continue
            if self.mode == LEGACY:
                meta = _io.read_json(child / META)
                out.setdefault(meta["name"], []).append(Version.parse(meta["version"]))
            else:
                parsed = split_dir_name(child.name)
                if parsed:
                    out.setdefault(parsed[0], []).append(parsed[1])
        return {n: sorted(vs) for n, vs in sorted(out.items())}

    def installed_versions(self, name: str) -> list[Version]:
        return self.installed().get(name, [])

    def meta(self, name: str, version: Version) -> dict:
        path = self.package_dir(name, version) / META
        try:
            meta = _io.read_json(path)
        except FileNotFoundError:
            raise NoInstalledMatch(f"{name} {version} is not installed") from None
        if self.mode == LEGACY and Version.parse(meta["version"]) != version:
            raise NoInstalledMatch(f"{name} {version} is not installed")
        return meta

    def content_hash(self, name: str, version: Version) -> str:
        return _io.tree_digest(self.package_dir(name, version), frozenset({META}))

    def verify(self, name: str, version: Version) -> dict:
        meta = self.meta(name, version)
        if self.content_hash(name, version) != meta["content_hash"]:
            raise StoreCorrupt(f"{self.package_dir(name, version)} no longer matches its recorded content hash")
        return meta

    def trees(self) -> list[ResolutionTree]:
        """Recorded nested resolutions, sorted by root name and version."""
        folder = self.root / TREES_DIR
        if not folder.is_dir():
            return []
        trees = [ResolutionTree.from_dict(doc)
                 for p in folder.glob("*.json") for doc in _io.read_json(p)["trees"]]
        return sorted(trees, key=lambda t: (t.name, t.version.components, t.range))

    def plan(self) -> InstallPlan | None:
        path = self.root / PLAN_FILE
        if not path.exists():
            return None
        doc = _io.read_json(path)
        return InstallPlan({n: Version.parse(v) for n, v in doc["pins"].items()},
                           tuple(doc["roots"]), tuple(tuple(r) for r in doc["requests"]))

    def events(self) -> list[dict]:
        path = self.root / EVENTS_FILE
        if not path.exists():
            return []
        with open(path, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]

    # -- writing ----------------------------------------------------------

    def _count_events(self) -> int:
        path = self.root / EVENTS_FILE
        if not path.exists():
            return 0
        with open(path, "rb") as fh:
            return sum(1 for line in fh if line.strip())

    def _log(self, action: str, **fields) -> None:
        self._seq += 1
        record = {"seq": self._seq, "action": action}
        record.update({k: str(v) for k, v in fields.items() if v is not None})
        with open(self.root / EVENTS_FILE, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def _stage(self, name: str, version: Version, payload: bytes, payload_hash: str,
               manifest: dict, unstable: bool) -> Path:
        staging = Path(tempfile.mkdtemp(dir=self.root, prefix=".staging-"))
        target = staging / "pkg"
        unpack(payload, target)
        meta = {
            "name": name,
            "version": str(version),
            "payload_hash": payload_hash,
            "content_hash": _io.tree_digest(target, frozenset({META})),
            "manifest": manifest,
            "unstable": unstable,
        }
        (target / META).write_text(_io.dump_json(meta), encoding="utf-8")
        return target

    def install(self, resolution: Resolution, repo, *, unstable: bool = False) -> list[dict]:
        """Materialize a resolution from ``repo``'s archive.

        Every payload is fetched and hash-checked before anything is written, so
        a :class:`~vpm.errors.MissingPayload` leaves the store untouched. Returns
        the events appended to the log.
        """
        if isinstance(resolution, InstallPlan):
            packages = resolution.packages()
            trees: list[ResolutionTree] = []
        else:
            trees = list(resolution)
            packages = distinct_packages(trees) if self.mode == VERSIONED else \
                [(n.name, n.version) for t in trees for n in t.walk()]

        with self.lock:
            before = self._seq = self._count_events()
            if self.mode == VERSIONED:
                self._install_versioned(packages, repo, unstable)
                for tree in trees:
                    self._record_tree(tree)
                if isinstance(resolution, InstallPlan):
                    self._record_plan(resolution)
            else:
                self._install_legacy(packages, repo, unstable)
            if self._seq == before:
                self._log("noop")
            return self.events()[before:]

    def _fetch(self, packages, repo) -> dict:
        fetched = {}
        for name, version in packages:
            if (name, version) in fetched:
                continue
            entry = repo.entry(name, version)
            fetched[(name, version)] = (repo.payload(name, version), entry)
        return fetched

    def _install_versioned(self, packages, repo, unstable: bool) -> None:
        missing = []
        for name, version in packages:
            if (self.package_dir(name, version) / META).exists():
                meta = self.verify(name, version)
                if meta["payload_hash"] != repo.entry(name, version).payload_hash:
                    raise StoreCorrupt(f"{dir_name(name, version)} was installed from a different payload")
            else:
                missing.append((name, version))
        fetched = self._fetch(missing, repo)
        for (name, version), (payload, entry) in fetched.items():
            staged = self._stage(name, version, payload, entry.payload_hash,
                                 entry.manifest.to_native(), unstable)
            os.replace(staged, self.package_dir(name, version))
            shutil.rmtree(staged.parent, ignore_errors=True)
            self._log("install", name=name, version=version)

    def _install_legacy(self, packages, repo, unstable: bool) -> None:
        fetched = self._fetch(packages, repo)
        for name, version in packages:
            payload, entry = fetched[(name, version)]
            target = self.root / name
            previous = None
            if (target / META).exists():
                meta = _io.read_json(target / META)
                if meta["version"] == str(version) and meta["payload_hash"] == entry.payload_hash:
                    continue
                previous = meta["version"]
            staged = self._stage(name, version, payload, entry.payload_hash,
                                 entry.manifest.to_native(), unstable)
            if previous is not None:
                trash = staged.parent / "old"
                os.replace(target, trash)
            os.replace(staged, target)
            shutil.rmtree(staged.parent, ignore_errors=True)
            if previous is None:
                self._log("install", name=name, version=version)
            else:
                self._log("overwrite", name=name, version=version, previous=previous)

    def _record_tree(self, tree: ResolutionTree) -> None:
        path = self.root / TREES_DIR / f"{tree.name}@{tree.version}.json"
        docs = _io.read_json(path)["trees"] if path.exists() else []
        # one entry per requested range of the same root
        by_range = {d["range"]: d for d in docs}
        by_range[tree.range] = tree.to_dict()
        text = _io.dump_json({"trees": [by_range[r] for r in sorted(by_range)]})
        if not path.exists() or path.read_text(encoding="utf-8") != text:
            _io.atomic_write(path, text)

    def _record_plan(self, plan: InstallPlan) -> None:
        doc = {"pins": {n: str(v) for n, v in plan.pins.items()},
               "roots": list(plan.roots), "requests": [list(r) for r in plan.requests]}
        _io.atomic_write(self.root / PLAN_FILE, _io.dump_json(doc))


@dataclass(frozen=True)
class LoadedPackage:
    name: str
    version: Version
    unstable: bool = False

    @property
    def namespace(self) -> str:
        return f"{self.name}@{self.version}"


@dataclass(frozen=True)
class SessionReport:
    mode: str
    store_mode: str
    tool_version: str
    packages: tuple[LoadedPackage, ...]

    def to_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "mode": self.mode,
            "store_mode": self.store_mode,
            "packages": [{"name": p.name, "version": str(p.version), "unstable": p.unstable}
                         for p in self.packages],
        }


class Session:
    """Packages loaded from one store, identified by ``name@version``.

    A ``versioned`` session keeps namespaces apart, so several versions of a
    name may be loaded at once. A ``flat`` session allows one version per name.
    """

    def __init__(self, store: LibraryStore, mode: str = VERSIONED):
        if mode not in (VERSIONED, FLAT):
            raise ValueError(f"unknown session mode {mode!r}")
        if mode == VERSIONED and store.mode != VERSIONED:
            raise StoreModeMismatch("a versioned session needs a versioned store")
        self.store = store
        self.mode = mode
        self.loaded: dict[str, LoadedPackage] = {}

    def _loaded_versions(self, name: str) -> list[LoadedPackage]:
        return [p for p in self.loaded.values() if p.name == name]

    def load(self, name: str, range: RangeDescriptor | str | None = None, *,
             autoinstall: bool = False, repo=None, branch: str | None = None) -> str:
        """Load the newest installed version of ``name`` admitted by ``range``.

        Returns the namespace id. With ``autoinstall`` a missing version is
        resolved against ``repo`` (``branch`` or its default branch) and
        installed first.
        """
        rng = coerce_range(range)
        if self.mode == FLAT:
            for pkg in self._loaded_versions(name):
                if satisfies(pkg.version, rng):
                    return pkg.namespace
                raise VersionConflict(name, pkg.version, rng.source_text)

        version = max_satisfying(self.store.installed_versions(name), rng)
        if version is None:
            if not autoinstall or repo is None:
                raise NoInstalledMatch(f"no installed version of {name} satisfies {rng.source_text!r}")
            version = self._autoinstall(name, rng, repo, branch)

        ns = f"{name}@{version}"
        if ns in self.loaded:
            return ns
        meta = self.store.verify(name, version)
        pkg = LoadedPackage(name, version, bool(meta.get("unstable")))
        if pkg.unstable:
            warnings.warn(f"{name} {version} is an untested version from the unstable branch",
                          UnstableWarning, stacklevel=2)
        self.loaded[ns] = pkg
        return ns

    def _autoinstall(self, name, rng, repo, branch):
        from .repository import UNSTABLE

        branch = branch or repo.default_branch()
        index = repo.index(branch)
        if self.store.mode == VERSIONED:
            resolution = resolve_nested(index, [(name, rng)])
            version = resolution[0].version
        else:
            resolution = resolve_flat(index, [(name, rng)])
            if not isinstance(resolution, InstallPlan):
                raise Conflict(resolution)
            version = resolution.pins[name]
        self.store.install(resolution, repo, unstable=branch == UNSTABLE)
        return version

    def session_info(self) -> SessionReport:
        return SessionReport(self.mode, self.store.mode, TOOL_VERSION, tuple(self.loaded.values()))

    def to_dict(self) -> dict:
        return {"mode": self.mode, "loaded": [p.namespace for p in self.loaded.values()]}

    @classmethod
    def from_dict(cls, store: LibraryStore, doc: dict) -> Session:
        session = cls(store, doc.get("mode", VERSIONED))
        for ns in doc.get("loaded", ()):
            name, _, version = ns.partition("@")
            v = Version.parse(version)
            meta = store.meta(name, v)
            session.loaded[ns] = LoadedPackage(name, v, bool(meta.get("unstable")))
        return session
