"""Package metadata.

Two on-disk formats normalize to the same :class:`PackageManifest`:

* ``DESCRIPTION``: DCF ``Key: value`` lines with indented continuations.
  ``Depends``/``Imports`` give required dependencies, ``Suggests``/``Enhances``
  optional ones. Entries are ``name`` or ``name (op version)`` with op one of
  ``>=``, ``<=``, ``==``.
* ``package.meta.json``: a JSON object with ``name``, ``version``,
  ``dependencies`` and ``optionalDependencies`` (maps of name to range
  descriptor) and an optional ``description``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable

from .errors import (
    BadConstraintSyntax,
    DuplicateDependency,
    InvalidPackageName,
    ManifestSyntaxError,
    MissingField,
    RangeError,
    SelfDependency,
    VersionError,
)
from .ranges import ANY, Comparator, Exact, RangeDescriptor, parse_range
from .version import Version, parse_version

REQUIRED = "required"
OPTIONAL = "optional"

DCF_FILENAME = "DESCRIPTION"
NATIVE_FILENAME = "package.meta.json"

DCF_KINDS = {
    "Depends": REQUIRED,
    "Imports": REQUIRED,
    "Suggests": OPTIONAL,
    "Enhances": OPTIONAL,
}

# underscore is reserved as the name/version separator of library directories
NAME_PATTERN = re.compile(r"[A-Za-z][A-Za-z0-9.-]*")

_DCF_ENTRY = re.compile(r"(?P<name>[^\s(]+)\s*(?:\((?P<constraint>[^)]*)\))?")
_DCF_CONSTRAINT = re.compile(r"\s*(?P<op>[<>=!~^]+)\s*(?P<version>\S+)\s*")


def check_name(name: str) -> str:
    if not isinstance(name, str) or not NAME_PATTERN.fullmatch(name):
        raise InvalidPackageName(f"invalid package name {name!r}")
    return name


@dataclass(frozen=True)
class DependencyDecl:
    name: str
    range: RangeDescriptor
    kind: str = REQUIRED
    # Enhances entries are recorded but never resolved automatically
    enhances: bool = False

    @property
    def optional(self) -> bool:
        return self.kind == OPTIONAL


@dataclass(frozen=True)
class PackageManifest:
    name: str
    version: Version
    dependencies: tuple[DependencyDecl, ...] = ()
    description: str | None = field(default=None, compare=False)

    def __post_init__(self):
        check_name(self.name)
        seen = set()
        for dep in self.dependencies:
            check_name(dep.name)
            if dep.name == self.name:
                raise SelfDependency(f"{self.name} depends on itself")
            key = (dep.name, dep.kind)
            if key in seen:
                raise DuplicateDependency(f"{self.name}: {dep.kind} dependency {dep.name} declared twice")
            seen.add(key)

    @property
    def key(self) -> tuple[str, Version]:
        return self.name, self.version

    def required(self) -> list[DependencyDecl]:
        return [d for d in self.dependencies if d.kind == REQUIRED]

    def resolvable(self, include_optional: bool = False) -> list[DependencyDecl]:
        """Dependencies a resolver should follow, in declaration order."""
        return [d for d in self.dependencies
                if d.kind == REQUIRED or (include_optional and not d.enhances)]

    def to_native(self) -> dict:
        doc = {"name": self.name, "version": str(self.version)}
        if self.description is not None:
            doc["description"] = self.description
        doc["dependencies"] = {d.name: d.range.source_text
                               for d in self.dependencies if d.kind == REQUIRED}
        doc["optionalDependencies"] = {d.name: d.range.source_text
                                       for d in self.dependencies
                                       if d.kind == OPTIONAL and not d.enhances}
        enhances = {d.name: d.range.source_text for d in self.dependencies if d.enhances}
        if enhances:
            doc["enhances"] = enhances
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_native(), indent=2, ensure_ascii=False) + "\n"


# -- DCF ---------------------------------------------------------------------

def parse_dcf(text: str) -> dict[str, str]:
    """Split DCF text into a field map; continuation lines are folded."""
    fields: dict[str, str] = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            current = None
            continue
        if line[0] in " \t":
            if current is None:
                raise ManifestSyntaxError(f"line {lineno}: continuation without a field")
            fields[current] = f"{fields[current]} {line.strip()}".strip()
            continue
        key, sep, value = line.partition(":")
        key = key.strip()
        if not sep or not key or " " in key:
            raise ManifestSyntaxError(f"line {lineno}: expected 'Key: value'")
        if key in fields:
            raise ManifestSyntaxError(f"line {lineno}: field {key} repeated")
        fields[key] = value.strip()
        current = key
    return fields


def _dcf_range(name: str, constraint: str | None) -> RangeDescriptor:
    if constraint is None:
        return ANY
    m = _DCF_CONSTRAINT.fullmatch(constraint)
    if not m:
        raise BadConstraintSyntax(f"{name}: cannot parse constraint ({constraint})")
    op, text = m.group("op"), m.group("version")
    if op not in (">=", "<=", "=="):
        raise BadConstraintSyntax(f"{name}: operator {op!r} not one of >=, <=, ==")
    try:
        v = parse_version(text)
    except VersionError as exc:
        raise BadConstraintSyntax(f"{name}: {exc}") from None
    return RangeDescriptor.of(Comparator(op, v))


def _dcf_entries(field_name: str, value: str) -> Iterable[DependencyDecl]:
    kind = DCF_KINDS[field_name]
    for raw in value.split(","):
        raw = raw.strip()
        if not raw:
            continue
        m = _DCF_ENTRY.fullmatch(raw)
        if not m:
            raise BadConstraintSyntax(f"{field_name}: cannot parse entry {raw!r}")
        name = check_name(m.group("name"))
        yield DependencyDecl(name, _dcf_range(name, m.group("constraint")), kind,
                             enhances=field_name == "Enhances")


def parse_dcf_manifest(text: str) -> PackageManifest:
    fields = parse_dcf(text)
    for required in ("Package", "Version"):
        if not fields.get(required):
            raise MissingField(required)
    deps: list[DependencyDecl] = []
    for field_name in DCF_KINDS:
        if field_name in fields:
            deps.extend(_dcf_entries(field_name, fields[field_name]))
    return PackageManifest(
        name=fields["Package"],
        version=parse_version(fields["Version"]),
        dependencies=tuple(deps),
        description=fields.get("Description"),
    )


def format_dcf_manifest(manifest: PackageManifest) -> str:
    """Render a manifest as DCF. Only DCF-expressible ranges are accepted."""
    lines = [f"Package: {manifest.name}", f"Version: {manifest.version}"]
    groups: dict[str, list[str]] = {}
    for dep in manifest.dependencies:
        field_name = "Enhances" if dep.enhances else ("Depends" if dep.kind == REQUIRED else "Suggests")
        groups.setdefault(field_name, []).append(_dcf_entry_text(dep))
    for field_name in DCF_KINDS:
        if field_name in groups:
            lines.append(f"{field_name}: " + ", ".join(groups[field_name]))
    if manifest.description is not None:
        lines.append("Description: " + manifest.description.replace("\n", "\n  "))
    return "\n".join(lines) + "\n"


def _dcf_entry_text(dep: DependencyDecl) -> str:
    if dep.range == ANY:
        return dep.name
    (alt,) = dep.range.alternatives
    (prim,) = alt.primitives
    if isinstance(prim, Exact):
        return f"{dep.name} (== {prim.version})"
    if isinstance(prim, Comparator) and prim.op in (">=", "<=", "=="):
        return f"{dep.name} ({prim.op} {prim.version})"
    raise BadConstraintSyntax(f"{dep.name}: range {dep.range} has no DCF form")


# -- native JSON ---------------------------------------------------------------

def _reject_duplicates(pairs):
    out = {}
    for key, value in pairs:
        if key in out:
            raise DuplicateDependency(f"key {key!r} appears twice")
        out[key] = value
    return out


def parse_native_manifest(text: str) -> PackageManifest:
    try:
        doc = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ManifestSyntaxError(str(exc)) from None
    if not isinstance(doc, dict):
        raise ManifestSyntaxError("manifest must be a JSON object")
    for required in ("name", "version"):
        if not doc.get(required):
            raise MissingField(required)
    if not isinstance(doc["version"], str):
        raise ManifestSyntaxError("version must be a string")

    deps: list[DependencyDecl] = []
    sections = (("dependencies", REQUIRED, False),
                ("optionalDependencies", OPTIONAL, False),
                ("enhances", OPTIONAL, True))
    for key, kind, enhances in sections:
        section = doc.get(key) or {}
        if not isinstance(section, dict):
            raise ManifestSyntaxError(f"{key} must map names to range descriptors")
        for dep_name, descriptor in section.items():
            if not isinstance(descriptor, str):
                raise ManifestSyntaxError(f"{key}.{dep_name}: descriptor must be a string")
            try:
                rng = parse_range(descriptor)
            except RangeError as exc:
                raise type(exc)(f"{dep_name}: {exc}") from None
            deps.append(DependencyDecl(check_name(dep_name), rng, kind, enhances))

    return PackageManifest(
        name=doc["name"],
        version=parse_version(doc["version"]),
        dependencies=tuple(deps),
        description=doc.get("description"),
    )


def parse_manifest(text: str) -> PackageManifest:
    """Parse either format, sniffing JSON by its leading brace."""
    if text.lstrip().startswith("{"):
        return parse_native_manifest(text)
    return parse_dcf_manifest(text)
