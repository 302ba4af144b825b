"""Numeric versions such as ``2.10.3`` or ``7.3-22``.

Components are separated by ``.`` or ``-`` interchangeably. Ordering is
lexicographic over the integer components; when one component list is a
strict prefix of the other the shorter one sorts first, so ``1.2 < 1.2.0``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import total_ordering

from .errors import (
    ComponentOutOfRange,
    DanglingSeparator,
    EmptyVersion,
    NonNumericComponent,
    TooManyComponents,
)

MAX_COMPONENTS = 8
COMPONENT_LIMIT = 2**31

_SEPARATORS = re.compile(r"[.-]")
_DIGITS = re.compile(r"[0-9]+")


@total_ordering
@dataclass(frozen=True, eq=False)
class Version:
    components: tuple[int, ...]
    text: str = field(default="")

    def __post_init__(self):
        if not self.components:
            raise EmptyVersion("version has no components")
        if len(self.components) > MAX_COMPONENTS:
            raise TooManyComponents(
                f"{len(self.components)} components (at most {MAX_COMPONENTS})")
        for c in self.components:
            if not 0 <= c < COMPONENT_LIMIT:
                raise ComponentOutOfRange(f"component {c} outside [0, 2^31)")
        if not self.text:
            object.__setattr__(self, "text", ".".join(map(str, self.components)))

    @classmethod
    def parse(cls, text: str) -> Version:
        return parse_version(text)

    @classmethod
    def coerce(cls, value: Version | str) -> Version:
        return value if isinstance(value, Version) else parse_version(value)

    def __eq__(self, other):
        if not isinstance(other, Version):
            return NotImplemented
        return self.components == other.components

    def __lt__(self, other):
        if not isinstance(other, Version):
            return NotImplemented
        # tuple ordering already ranks a strict prefix below its extensions
        return self.components < other.components

    def __hash__(self):
        return hash(self.components)

    def __str__(self):
        return self.text

    def __repr__(self):
        return f"Version({self.text!r})"


def parse_version(text: str) -> Version:
    """Parse ``text`` into a :class:`Version`, keeping the original spelling."""
    if not isinstance(text, str):
        raise TypeError(f"expected str, got {type(text).__name__}")
    if text == "":
        raise EmptyVersion("empty version string")
    pieces = _SEPARATORS.split(text)
    if len(pieces) > MAX_COMPONENTS:
        raise TooManyComponents(f"{text!r} has {len(pieces)} components (at most {MAX_COMPONENTS})")
    components = []
    for i, piece in enumerate(pieces):
        if piece == "":
            raise DanglingSeparator(f"{text!r}: empty component at index {i}")
        if not _DIGITS.fullmatch(piece):
            raise NonNumericComponent(f"{text!r}: component {piece!r} is not a non-negative integer")
        components.append(int(piece))
    return Version(tuple(components), text)


def compare_versions(a: Version, b: Version) -> int:
    """Three-way comparison: -1 if ``a < b``, 0 if equal, 1 if ``a > b``."""
    if a.components == b.components:
        return 0
    return -1 if a.components < b.components else 1
