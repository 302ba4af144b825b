"""Package archive with staged branches.

The archive keeps every published (name, version) forever. On top of it sit
named branches:

* ``unstable`` always shows the highest archived version of every name.
* ``testing`` branches are frozen copies of the unstable view.
* ``stable`` branches are promoted testing branches. Their pins only change
  through an audited backport, which bumps the branch revision.

On-disk layout below the repository root::

    archive/<name>/<name>_<version>.pkg        payload bytes
    archive/<name>/<name>_<version>.manifest   DESCRIPTION or JSON manifest text
    index.json                                 entries, hashes, sequence numbers
    branches/<id>.json                         kind, pins, revision, audit log

Every file is replaced by write-then-rename, and ``index.json`` is written
last, so readers only ever observe committed state.
"""

from __future__ import annotations

import contextlib
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Mapping

from filelock import FileLock

from . import _io
from .errors import (
    BadConstraintSyntax,
    BranchIdTaken,
    BranchKindMismatch,
    BranchReadOnly,
    DuplicateVersion,
    EmptyReason,
    InvalidBranchId,
    MissingPayload,
    NotPinned,
    PayloadHashMismatch,
    UnknownBranch,
    UnknownPackage,
    UnknownRevision,
    UnknownVersion,
)
from .manifest import OPTIONAL, REQUIRED, PackageManifest, format_dcf_manifest, parse_manifest
from .ranges import max_satisfying, satisfies
from .resolver import PackageIndex
from .version import Version

UNSTABLE = "unstable"
TESTING = "testing"
STABLE = "stable"

INDEX_FORMAT = 1

_BRANCH_ID = re.compile(r"[A-Za-z0-9][A-Za-z0-9._-]*")


@dataclass(frozen=True)
class ArchiveEntry:
    manifest: PackageManifest
    payload_hash: str
    sequence: int

    @property
    def name(self) -> str:
        return self.manifest.name

    @property
    def version(self) -> Version:
        return self.manifest.version


@dataclass(frozen=True)
class AuditEntry:
    sequence: int
    action: str
    name: str | None = None
    version: Version | None = None
    previous: Version | None = None
    reason: str = ""

    def to_dict(self) -> dict:
        doc = {"sequence": self.sequence, "action": self.action, "reason": self.reason}
        for key in ("name", "version", "previous"):
            value = getattr(self, key)
            if value is not None:
                doc[key] = str(value)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> AuditEntry:
        def ver(key):
            return Version.parse(doc[key]) if doc.get(key) is not None else None
        return cls(doc["sequence"], doc["action"], doc.get("name"),
                   ver("version"), ver("previous"), doc.get("reason", ""))


@dataclass(frozen=True)
class Branch:
    id: str
    kind: str
    base_pins: Mapping[str, Version] = field(default_factory=dict)
    audit: tuple[AuditEntry, ...] = ()
    promoted_to: str | None = None

    @property
    def revision(self) -> int:
        return sum(1 for a in self.audit if a.action == "backport")

    def pins(self, revision: int | None = None) -> dict[str, Version]:
        """Pin map at ``revision`` (default: latest), replayed from the audit log."""
        if revision is None:
            revision = self.revision
        if not 0 <= revision <= self.revision:
            raise UnknownRevision(f"{self.id} has revisions 0..{self.revision}, not {revision}")
        pins = dict(self.base_pins)
        applied = 0
        for entry in self.audit:
            if applied == revision:
                break
            if entry.action == "backport":
                pins[entry.name] = entry.version
                applied += 1
        return dict(sorted(pins.items()))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "revision": self.revision,
            "base_pins": {n: str(v) for n, v in sorted(self.base_pins.items())},
            "pins": {n: str(v) for n, v in self.pins().items()},
            "promoted_to": self.promoted_to,
            "audit": [a.to_dict() for a in self.audit],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Branch:
        return cls(
            id=doc["id"],
            kind=doc["kind"],
            base_pins={n: Version.parse(v) for n, v in doc["base_pins"].items()},
            audit=tuple(AuditEntry.from_dict(a) for a in doc.get("audit", ())),
            promoted_to=doc.get("promoted_to"),
        )


@dataclass(frozen=True)
class ImpactEntry:
    dependent: str
    version: Version
    kind: str
    range: str
    status: str


@dataclass(frozen=True)
class ImpactReport:
    """What publishing ``candidate`` would do to the reverse dependencies of its name."""

    package: str
    candidate: Version
    previous: Version
    entries: tuple[ImpactEntry, ...] = ()

    def with_status(self, status: str) -> list[str]:
        return [e.dependent for e in self.entries if e.status == status]

    @property
    def broken(self) -> list[str]:
        return self.with_status("broken")

    @property
    def newly_selected(self) -> list[str]:
        return self.with_status("newly-selected")

    @property
    def unaffected(self) -> list[str]:
        return self.with_status("unaffected")


class Repository:
    """An archive plus its branches.

    ``root=None`` keeps everything in memory; otherwise state is persisted under
    ``root`` and mutations are serialized with a lock file. Payloads of an
    in-memory repository live in :attr:`payloads`.
    """

    def __init__(self, root: Path | str | None = None):
        self.root = Path(root) if root is not None else None
        self._entries: dict[tuple[str, Version], ArchiveEntry] = {}
        self._branches: dict[str, Branch] = {}
        self._sequence = 0
        self._batch = 0
        self._dirty_branches: set[str] = set()
        self._dirty_index = False
        self._lock = FileLock(str(self.root / ".lock")) if self.root else None
        self.payloads: dict[tuple[str, Version], bytes] = {}
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            self._load()

    @classmethod
    def open(cls, root: Path | str) -> Repository:
        return cls(root)

    # -- persistence ------------------------------------------------------

    def _load(self) -> None:
        index_path = self.root / "index.json"
        self._entries.clear()
        self._branches.clear()
        if not index_path.exists():
            self._sequence = 0
            return
        doc = _io.read_json(index_path)
        self._sequence = doc["sequence"]
        for item in doc["entries"]:
            version = Version.parse(item["version"])
            text = self._manifest_path(item["name"], version).read_text(encoding="utf-8")
            manifest = parse_manifest(text)
            self._entries[(manifest.name, manifest.version)] = ArchiveEntry(
                manifest, item["hash"], item["sequence"])
        for path in sorted((self.root / "branches").glob("*.json")):
            branch = Branch.from_dict(_io.read_json(path))
            self._branches[branch.id] = branch

    def _stored_sequence(self) -> int:
        index_path = self.root / "index.json"
        if not index_path.exists():
            return 0
        return _io.read_json(index_path)["sequence"]

    def _flush(self) -> None:
        if self.root is None:
            self._dirty_branches.clear()
            self._dirty_index = False
            return
        for branch_id in sorted(self._dirty_branches):
            _io.atomic_write(self.root / "branches" / f"{branch_id}.json",
                             _io.dump_json(self._branches[branch_id].to_dict()))
        self._dirty_branches.clear()
        if self._dirty_index:
            entries = sorted(self._entries.values(), key=lambda e: e.sequence)
            doc = {
                "format": INDEX_FORMAT,
                "hash_algorithm": _io.HASH_ALGORITHM,
                "sequence": self._sequence,
                "entries": [{"name": e.name, "version": str(e.version),
                             "hash": e.payload_hash, "sequence": e.sequence}
                            for e in entries],
            }
            _io.atomic_write(self.root / "index.json", _io.dump_json(doc))
        self._dirty_index = False

    @contextlib.contextmanager
    def transaction(self) -> Iterator[Repository]:
        """Group mutations; state is written once when the outermost block exits.

        Holds the writer lock for the whole block. On entry, state committed by
        other writers since this object was loaded is picked up.
        """
        if self._batch == 0 and self._lock is not None:
            self._lock.acquire()
            try:
                if self._stored_sequence() != self._sequence:
                    self._load()
            except BaseException:
                self._lock.release()
                raise
        self._batch += 1
        try:
            yield self
        finally:
            self._batch -= 1
            if self._batch == 0:
                try:
                    self._flush()
                finally:
                    if self._lock is not None:
                        self._lock.release()

    def _next_sequence(self) -> int:
        self._dirty_index = True
        self._sequence += 1
        return self._sequence

    def _payload_path(self, name: str, version: Version) -> Path:
        return self.root / "archive" / name / f"{name}_{version}.pkg"

    def _manifest_path(self, name: str, version: Version) -> Path:
        return self.root / "archive" / name / f"{name}_{version}.manifest"

    # -- archive ----------------------------------------------------------

    def publish(self, manifest: PackageManifest, payload: bytes, *,
                manifest_text: str | None = None,
                declared_hash: str | None = None) -> ArchiveEntry:
        """Add a new (name, version) to the archive.

        Only the unstable view can change as a result; frozen branches keep
        their pins.
        """
        payload_hash = _io.digest(payload)
        if declared_hash is not None and declared_hash != payload_hash:
            raise PayloadHashMismatch(
                f"{manifest.name} {manifest.version}: declared {declared_hash}, payload hashes to {payload_hash}")
        with self.transaction():
            key = (manifest.name, manifest.version)
            if key in self._entries:
                raise DuplicateVersion(f"{manifest.name} {manifest.version} is already published")
            if self.root is not None:
                if manifest_text is None:
                    try:
                        manifest_text = format_dcf_manifest(manifest)
                    except BadConstraintSyntax:
                        manifest_text = manifest.dumps()
                _io.atomic_write(self._payload_path(*key), payload)
                _io.atomic_write(self._manifest_path(*key), manifest_text)
            else:
                self.payloads[key] = payload
            entry = ArchiveEntry(manifest, payload_hash, self._next_sequence())
            self._entries[key] = entry
        return entry

    def entry(self, name: str, version: Version | str) -> ArchiveEntry:
        version = Version.coerce(version)
        try:
            return self._entries[(name, version)]
        except KeyError:
            raise UnknownVersion(f"{name} {version} is not in the archive") from None

    def entries(self) -> list[ArchiveEntry]:
        return sorted(self._entries.values(), key=lambda e: e.sequence)

    def has(self, name: str, version: Version) -> bool:
        return (name, version) in self._entries

    def versions(self, name: str) -> list[Version]:
        return sorted(v for (n, v) in self._entries if n == name)

    def names(self) -> list[str]:
        return sorted({n for n, _ in self._entries})

    def manifest(self, name: str, version: Version | str) -> PackageManifest:
        return self.entry(name, version).manifest

    def payload(self, name: str, version: Version | str, verify: bool = True) -> bytes:
        """Payload bytes, checked against the recorded hash."""
        entry = self.entry(name, version)
        key = (entry.name, entry.version)
        if self.root is None:
            data = self.payloads.get(key)
        else:
            try:
                data = self._payload_path(*key).read_bytes()
            except FileNotFoundError:
                data = None
        if data is None:
            raise MissingPayload(entry.name, entry.version)
        if verify and _io.digest(data) != entry.payload_hash:
            raise PayloadHashMismatch(f"{entry.name} {entry.version}: stored payload does not match its hash")
        return data

    def __len__(self):
        return len(self._entries)

    @property
    def sequence(self) -> int:
        return self._sequence

    # -- branches ---------------------------------------------------------

    def branch(self, branch_id: str) -> Branch:
        if branch_id == UNSTABLE:
            audit = tuple(AuditEntry(e.sequence, "publish", e.name, e.version)
                          for e in self.entries())
            return Branch(UNSTABLE, UNSTABLE, {}, audit)
        try:
            return self._branches[branch_id]
        except KeyError:
            raise UnknownBranch(f"no branch named {branch_id!r}") from None

    def branches(self) -> list[Branch]:
        return [self.branch(UNSTABLE)] + [self._branches[b] for b in sorted(self._branches)]

    def latest_stable(self) -> Branch | None:
        stables = [b for b in self._branches.values() if b.kind == STABLE]
        return max(stables, key=lambda b: b.audit[0].sequence) if stables else None

    def default_branch(self) -> str:
        """Newest stable branch, or ``unstable`` when none has been released."""
        stable = self.latest_stable()
        return stable.id if stable is not None else UNSTABLE

    def _check_new_id(self, branch_id: str) -> None:
        if not isinstance(branch_id, str) or not _BRANCH_ID.fullmatch(branch_id):
            raise InvalidBranchId(f"invalid branch id {branch_id!r}")
        if branch_id == UNSTABLE or branch_id in self._branches:
            raise BranchIdTaken(f"branch {branch_id!r} already exists")

    def _store_branch(self, branch: Branch) -> Branch:
        self._branches[branch.id] = branch
        self._dirty_branches.add(branch.id)
        return branch

    def unstable_view(self) -> dict[str, Version]:
        latest: dict[str, Version] = {}
        for name, version in self._entries:
            if name not in latest or version > latest[name]:
                latest[name] = version
        return dict(sorted(latest.items()))

    def branch_view(self, branch_id: str, revision: int | None = None) -> dict[str, Version]:
        """Name to version map of a branch, optionally at an earlier revision."""
        if branch_id == UNSTABLE:
            if revision not in (None, 0):
                raise UnknownRevision("the unstable branch has no revisions")
            return self.unstable_view()
        return self.branch(branch_id).pins(revision)

    def freeze(self, branch_id: str, reason: str = "code freeze") -> Branch:
        """Fork the current unstable view into a new testing branch."""
        with self.transaction():
            self._check_new_id(branch_id)
            audit = (AuditEntry(self._next_sequence(), "freeze", reason=reason),)
            return self._store_branch(Branch(branch_id, TESTING, self.unstable_view(), audit))

    def promote(self, testing_id: str, stable_id: str, reason: str = "release") -> Branch:
        """Release a testing branch as a new stable branch with identical pins."""
        with self.transaction():
            testing = self.branch(testing_id)
            if testing.kind != TESTING:
                raise BranchKindMismatch(f"{testing_id!r} is a {testing.kind} branch, not testing")
            self._check_new_id(stable_id)
            seq = self._next_sequence()
            note = AuditEntry(seq, "promote", reason=f"promoted to {stable_id}")
            self._store_branch(replace(testing, audit=testing.audit + (note,), promoted_to=stable_id))
            stable = Branch(stable_id, STABLE, testing.pins(),
                            (AuditEntry(seq, "promote", reason=reason or f"from {testing_id}"),))
            return self._store_branch(stable)

    def backport(self, branch_id: str, name: str, version: Version | str, reason: str) -> Branch:
        """Move one pin of a frozen branch to another archived version."""
        version = Version.coerce(version)
        with self.transaction():
            branch = self.branch(branch_id)
            if branch.kind == UNSTABLE:
                raise BranchKindMismatch("cannot backport into the unstable branch")
            if branch.promoted_to is not None:
                raise BranchReadOnly(f"{branch_id!r} was promoted to {branch.promoted_to!r} and is read-only")
            if not reason or not reason.strip():
                raise EmptyReason("a backport needs a reason for the audit log")
            entry = self.entry(name, version)
            pins = branch.pins()
            if name not in pins:
                raise NotPinned(f"{name} is not pinned in {branch_id!r}")
            audit = AuditEntry(self._next_sequence(), "backport", name, entry.version,
                               pins[name], reason.strip())
            return self._store_branch(replace(branch, audit=branch.audit + (audit,)))

    # -- views for resolution ---------------------------------------------

    def index(self, branch_id: str = UNSTABLE, revision: int | None = None) -> PackageIndex:
        """Resolution input for a branch.

        The unstable branch offers every archived version; a frozen branch
        offers exactly its pinned versions.
        """
        if branch_id == UNSTABLE:
            if revision not in (None, 0):
                raise UnknownRevision("the unstable branch has no revisions")
            return PackageIndex(e.manifest for e in self._entries.values())
        pins = self.branch_view(branch_id, revision)
        return PackageIndex(self.manifest(n, v) for n, v in pins.items())

    def revdep(self, branch_id: str, name: str) -> dict[str, str]:
        """Packages in a branch view that declare a dependency on ``name``.

        Maps each dependent to ``"required"`` or ``"optional"`` (required wins
        when both are declared).
        """
        out: dict[str, str] = {}
        for dep_name, version in self.branch_view(branch_id).items():
            kinds = {d.kind for d in self.manifest(dep_name, version).dependencies if d.name == name}
            if kinds:
                out[dep_name] = REQUIRED if REQUIRED in kinds else OPTIONAL
        return out

    def update_impact(self, branch_id: str, candidate: PackageManifest) -> ImpactReport:
        """Classify reverse dependents as if ``candidate`` became current.

        Single-current-version semantics are assumed after the update: the
        candidate and any already archived newer versions are installable, older
        ones are not. A dependent is

        * ``newly-selected`` when its range admits the candidate and flat
          resolution would now choose it,
        * ``broken`` when its range admitted the old current version but admits
          nothing that remains installable,
        * ``unaffected`` otherwise.

        Nothing is published.
        """
        view = self.branch_view(branch_id)
        name = candidate.name
        if name not in view:
            raise UnknownPackage(f"{name} is not in branch {branch_id!r}")
        previous = view[name]
        if branch_id == UNSTABLE:
            available = self.versions(name)
        else:
            available = [previous]
        # versions installable once the candidate is published; an older
        # candidate never becomes current
        floor = max(previous, candidate.version)
        after = sorted({v for v in set(available) | {candidate.version} if v >= floor})

        entries = []
        for dependent, kind in self.revdep(branch_id, name).items():
            manifest = self.manifest(dependent, view[dependent])
            decls = [d for d in manifest.dependencies if d.name == name]
            decl = next((d for d in decls if d.kind == REQUIRED), decls[0])
            chosen = max_satisfying(after, decl.range)
            if chosen == candidate.version:
                status = "newly-selected"
            elif chosen is None and satisfies(previous, decl.range):
                status = "broken"
            else:
                status = "unaffected"
            entries.append(ImpactEntry(dependent, view[dependent], kind,
                                       decl.range.source_text, status))
        return ImpactReport(name, candidate.version, previous, tuple(entries))
