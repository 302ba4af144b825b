"""Exception hierarchy.

Every domain failure derives from :class:`VpmError`. The command line maps
these to exit status 1 and prints ``error: <TYPE>: <detail>``, where TYPE is
the exception class name.
"""

from __future__ import annotations


class VpmError(Exception):
    """Base class for all domain errors."""

    @property
    def kind(self) -> str:
        return type(self).__name__


# -- versions ---------------------------------------------------------------

class VersionError(VpmError, ValueError):
    """Raised when a version string cannot be parsed."""


class EmptyVersion(VersionError):
    pass


class NonNumericComponent(VersionError):
    pass


class DanglingSeparator(VersionError):
    pass


class TooManyComponents(VersionError):
    pass


class ComponentOutOfRange(VersionError):
    pass


# -- range descriptors ------------------------------------------------------

class RangeError(VpmError, ValueError):
    """Raised when a range descriptor cannot be parsed."""


class RangeSyntaxError(RangeError):
    def __init__(self, message: str, text: str = "", position: int = 0):
        self.text = text
        self.position = position
        if text:
            message = f"{message} at position {position} in {text!r}"
        super().__init__(message)


class UrlDependencyUnsupported(RangeError):
    pass


class EmptyDescriptor(RangeError):
    pass


# -- manifests --------------------------------------------------------------

class ManifestError(VpmError, ValueError):
    """Raised for malformed package metadata."""


class ManifestSyntaxError(ManifestError):
    pass


class MissingField(ManifestError):
    pass


class BadConstraintSyntax(ManifestError):
    pass


class DuplicateDependency(ManifestError):
    pass


class SelfDependency(ManifestError):
    pass


class InvalidPackageName(ManifestError):
    pass


# -- repository -------------------------------------------------------------

class RepositoryError(VpmError):
    pass


class DuplicateVersion(RepositoryError):
    pass


class PayloadHashMismatch(RepositoryError):
    pass


class BranchIdTaken(RepositoryError):
    pass


class UnknownBranch(RepositoryError, LookupError):
    pass


class UnknownRevision(RepositoryError, LookupError):
    pass


class UnknownVersion(RepositoryError, LookupError):
    pass


class UnknownPackage(RepositoryError, LookupError):
    pass


class NotPinned(RepositoryError):
    pass


class EmptyReason(RepositoryError, ValueError):
    pass


class BranchReadOnly(RepositoryError):
    pass


class BranchKindMismatch(RepositoryError):
    pass


class InvalidBranchId(RepositoryError, ValueError):
    pass


class MissingPayload(RepositoryError):
    def __init__(self, name: str, version: object):
        self.name = name
        self.version = version
        super().__init__(f"{name} {version}: payload not present in archive")


# -- resolution -------------------------------------------------------------

class ResolutionError(VpmError):
    pass


class Unsatisfiable(ResolutionError):
    def __init__(self, name: str, range_text: str, path: tuple[str, ...] = ()):
        self.name = name
        self.range_text = range_text
        self.path = tuple(path)
        via = " -> ".join(self.path) if self.path else "<request>"
        super().__init__(f"no version of {name} satisfies {range_text!r} (required by {via})")


class CycleDetected(ResolutionError):
    def __init__(self, path: tuple[str, ...]):
        self.path = tuple(path)
        super().__init__("dependency cycle: " + " -> ".join(self.path))


class ResolutionLimitExceeded(ResolutionError):
    pass


class Conflict(ResolutionError):
    """Flat resolution found no single version satisfying every demand."""

    def __init__(self, report):
        self.report = report
        super().__init__(str(report))


# -- library store and sessions --------------------------------------------

class StoreError(VpmError):
    pass


class StoreCorrupt(StoreError):
    pass


class StoreModeMismatch(StoreError):
    pass


class NoInstalledMatch(StoreError, LookupError):
    pass


class VersionConflict(StoreError):
    def __init__(self, name: str, loaded: object, requested: str):
        self.name = name
        self.loaded = loaded
        self.requested = requested
        super().__init__(f"{name} {loaded} is already loaded; cannot load {requested!r}")


# -- lockfiles --------------------------------------------------------------

class LockfileError(VpmError):
    pass


class IncompleteResolution(LockfileError):
    pass


class LockfileCorrupt(LockfileError):
    pass
