"""Dependency resolution.

Two strategies share one input, a :class:`PackageIndex`:

``resolve_nested``
    every package gets a private copy of its dependency tree. Each edge picks
    the newest version admitted by the declared range, independently of the
    rest of the tree, so two packages may use different versions of the same
    dependency.

``resolve_flat``
    one version per name. Demands on a name are intersected and the newest
    version admitted by all of them is pinned; this repeats until no pin
    changes. An empty intersection produces a :class:`ConflictReport`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence, Union

from .errors import CycleDetected, ResolutionLimitExceeded, Unsatisfiable, UnknownVersion
from .manifest import PackageManifest
from .ranges import RangeDescriptor, coerce_range, max_satisfying, satisfies
from .version import Version

ROOT_REQUESTER = "(request)"

Request = tuple[str, Union[RangeDescriptor, str, None]]


class ResolutionWarning(UserWarning):
    """An optional dependency could not be satisfied and was skipped."""


class PackageIndex:
    """The versions a resolver may choose from, with their manifests."""

    def __init__(self, manifests: Iterable[PackageManifest] = ()):
        self._by_name: dict[str, dict[Version, PackageManifest]] = {}
        for m in manifests:
            self._by_name.setdefault(m.name, {})[m.version] = m
        self._sorted: dict[str, list[Version]] = {}

    def versions(self, name: str) -> list[Version]:
        if name not in self._sorted:
            self._sorted[name] = sorted(self._by_name.get(name, ()))
        return self._sorted[name]

    def manifest(self, name: str, version: Version) -> PackageManifest:
        try:
            return self._by_name[name][version]
        except KeyError:
            raise UnknownVersion(f"{name} {version} not in index") from None

    def names(self) -> list[str]:
        return sorted(self._by_name)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __len__(self):
        return sum(len(v) for v in self._by_name.values())

    def restrict(self, pins: Mapping[str, Version]) -> PackageIndex:
        """Sub-index holding only the pinned version of each pinned name."""
        return PackageIndex(self.manifest(n, v) for n, v in pins.items())


@dataclass(frozen=True)
class ResolutionTree:
    name: str
    version: Version
    children: tuple[ResolutionTree, ...] = ()
    # range the parent (or the request) declared for this node
    range: str = "*"
    optional: bool = False

    @property
    def label(self) -> str:
        return f"{self.name}@{self.version}"

    def walk(self) -> Iterator[ResolutionTree]:
        yield self
        for child in self.children:
            yield from child.walk()

    def to_dict(self) -> dict:
        doc = {"name": self.name, "version": str(self.version), "range": self.range,
               "children": [c.to_dict() for c in self.children]}
        if self.optional:
            doc["optional"] = True
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> ResolutionTree:
        return cls(
            name=doc["name"],
            version=Version.parse(doc["version"]),
            children=tuple(cls.from_dict(c) for c in doc.get("children", ())),
            range=doc.get("range", "*"),
            optional=bool(doc.get("optional", False)),
        )


def distinct_packages(trees: Iterable[ResolutionTree]) -> list[tuple[str, Version]]:
    """Every distinct (name, version) in the trees, sorted."""
    seen = {(node.name, node.version) for tree in trees for node in tree.walk()}
    return sorted(seen, key=lambda nv: (nv[0], nv[1].components))


@dataclass(frozen=True)
class InstallPlan:
    pins: dict[str, Version]
    roots: tuple[str, ...]
    requests: tuple[tuple[str, str], ...] = ()

    def packages(self) -> list[tuple[str, Version]]:
        return sorted(self.pins.items())


@dataclass(frozen=True)
class ConflictReport:
    name: str
    demands: tuple[tuple[str, str], ...]
    explanation: str = field(default="")

    def __post_init__(self):
        if not self.explanation:
            wants = "; ".join(f"{who} requires {rng!r}" for who, rng in self.demands)
            object.__setattr__(self, "explanation",
                               f"no single version of {self.name} satisfies all demands: {wants}")

    def __str__(self):
        return self.explanation


def _normalize(requests: Sequence[Request]) -> list[tuple[str, RangeDescriptor]]:
    if not requests:
        raise ValueError("at least one request is required")
    return [(name, coerce_range(rng)) for name, rng in requests]


# -- nested -------------------------------------------------------------------

class _NestedResolver:
    def __init__(self, index: PackageIndex, include_optional: bool):
        self.index = index
        self.include_optional = include_optional
        # (name, version) -> (subtree, every (dep name, range) demanded inside it)
        self.memo: dict[tuple[str, Version], tuple[ResolutionTree, dict[str, set[RangeDescriptor]]]] = {}

    def build(self, name, rng, path, optional=False):
        v = max_satisfying(self.index.versions(name), rng)
        if v is None:
            raise Unsatisfiable(name, rng.source_text, tuple(f"{n}@{pv}" for n, pv in path))
        key = (name, v)
        if key in self.memo:
            tree, demands = self.memo[key]
            for anc_name, anc_v in path:
                if any(satisfies(anc_v, r) for r in demands.get(anc_name, ())):
                    raise CycleDetected(tuple(f"{n}@{pv}" for n, pv in path) + (f"{name}@{v}", anc_name))
            return ResolutionTree(name, v, tree.children, rng.source_text, optional), demands

        here = path + ((name, v),)
        children = []
        demands: dict[str, set[RangeDescriptor]] = {}
        for dep in self.index.manifest(name, v).resolvable(self.include_optional):
            for anc_name, anc_v in here:
                if anc_name == dep.name and satisfies(anc_v, dep.range):
                    raise CycleDetected(tuple(f"{n}@{pv}" for n, pv in here) + (dep.name,))
            try:
                child, sub = self.build(dep.name, dep.range, here, dep.optional)
            except Unsatisfiable as exc:
                if not dep.optional:
                    raise
                warnings.warn(f"skipping optional dependency: {exc}", ResolutionWarning, stacklevel=4)
                continue
            children.append(child)
            demands.setdefault(dep.name, set()).add(dep.range)
            for dep_name, ranges in sub.items():
                demands.setdefault(dep_name, set()).update(ranges)
        tree = ResolutionTree(name, v, tuple(children), rng.source_text, optional)
        self.memo[key] = (tree, demands)
        return tree, demands


def resolve_nested(index: PackageIndex, requests: Sequence[Request],
                   include_optional: bool = False) -> list[ResolutionTree]:
    """Resolve each request into its own private dependency tree.

    Raises :class:`Unsatisfiable` when some required edge admits no version and
    :class:`CycleDetected` when a name reappears below itself with a range that
    admits the ancestor's version.
    """
    resolver = _NestedResolver(index, include_optional)
    return [resolver.build(name, rng, ())[0] for name, rng in _normalize(requests)]


# -- flat ---------------------------------------------------------------------

def _collect_demands(index, roots, pins, include_optional):
    demands: dict[str, list[tuple[str, RangeDescriptor, bool]]] = {}
    for name, rng in roots:
        demands.setdefault(name, []).append((ROOT_REQUESTER, rng, False))
    queue = [name for name, _ in roots]
    visited = set()
    while queue:
        name = queue.pop(0)
        if name in visited or name not in pins:
            continue
        visited.add(name)
        for dep in index.manifest(name, pins[name]).resolvable(include_optional):
            demands.setdefault(dep.name, []).append((name, dep.range, dep.optional))
            queue.append(dep.name)
    return demands


def resolve_flat(index: PackageIndex, requests: Sequence[Request],
                 include_optional: bool = False) -> InstallPlan | ConflictReport:
    """Pick one version per name that satisfies every demand on it.

    Returns a :class:`ConflictReport` instead of raising when demands on a name
    cannot be met, jointly or singly. :class:`Unsatisfiable` is raised only for
    a requested name with no versions at all. The search is greedy (newest
    admitted version, no backtracking), so it can miss solutions that exist.
    """
    roots = _normalize(requests)
    for name, rng in roots:
        if not index.versions(name):
            raise Unsatisfiable(name, rng.source_text)

    limit = max(1, len(index.names()) * max(1, len(index)))
    pins: dict[str, Version] = {}
    for _ in range(limit):
        demands = _collect_demands(index, roots, pins, include_optional)
        new_pins: dict[str, Version] = {}
        for name, ds in demands.items():
            candidates = index.versions(name)
            chosen = _newest_admitted(candidates, (r for _, r, _ in ds))
            if chosen is None:
                required = [(who, r) for who, r, opt in ds if not opt]
                if len(required) < len(ds):
                    warnings.warn(f"ignoring optional demand(s) on {name}", ResolutionWarning, stacklevel=2)
                    if not required:
                        continue
                    chosen = _newest_admitted(candidates, (r for _, r in required))
                if chosen is None:
                    return ConflictReport(name, tuple((who, r.source_text) for who, r in required))
            new_pins[name] = chosen
        if new_pins == pins:
            return InstallPlan(dict(sorted(pins.items())), tuple(n for n, _ in roots),
                               tuple((n, r.source_text) for n, r in roots))
        pins = new_pins
    raise ResolutionLimitExceeded(f"flat resolution did not settle within {limit} steps")


def _newest_admitted(candidates: list[Version], ranges) -> Version | None:
    ranges = list(ranges)
    for v in reversed(candidates):
        if all(satisfies(v, r) for r in ranges):
            return v
    return None


# -- rendering ------------------------------------------------------------------

def _render(node: ResolutionTree, prefix: str, last: bool, lines: list[str]) -> None:
    branch = "└" if last else "├"
    joint = "─┬ " if node.children else "── "
    lines.append(f"{prefix}{branch}{joint}{node.label}")
    child_prefix = prefix + ("  " if last else "│ ")
    for i, child in enumerate(node.children):
        _render(child, child_prefix, i == len(node.children) - 1, lines)


def render_tree(trees: Iterable[ResolutionTree]) -> str:
    """Box-drawing listing in the style of ``npm list``; one line per node."""
    lines: list[str] = []
    for tree in trees:
        _render(tree, "", True, lines)
    return "".join(line + "\n" for line in lines)
