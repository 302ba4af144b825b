"""Versioned package management with staged releases and reproducible lockfiles."""

__version__ = "0.1.0"

from .errors import VpmError  # noqa: E402
from .version import Version, compare_versions, parse_version  # noqa: E402
from .ranges import RangeDescriptor, max_satisfying, parse_range, satisfies  # noqa: E402
from .manifest import PackageManifest, parse_dcf_manifest, parse_manifest, parse_native_manifest  # noqa: E402
from .resolver import (  # noqa: E402
    ConflictReport,
    InstallPlan,
    PackageIndex,
    ResolutionTree,
    render_tree,
    resolve_flat,
    resolve_nested,
)
from .repository import Repository  # noqa: E402
from .store import LibraryStore, Session  # noqa: E402
from .lockfile import Lockfile, lock_store, restore, write_lock  # noqa: E402

__all__ = [
    "ConflictReport", "InstallPlan", "LibraryStore", "Lockfile", "PackageIndex", "PackageManifest",
    "RangeDescriptor", "Repository", "ResolutionTree", "Session", "Version", "VpmError",
    "compare_versions", "lock_store", "max_satisfying", "parse_dcf_manifest", "parse_manifest",
    "parse_native_manifest", "parse_range", "parse_version", "render_tree", "resolve_flat",
    "resolve_nested", "restore", "satisfies", "write_lock",
]
