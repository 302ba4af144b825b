"""Version range descriptors.

Grammar::

    descriptor  := conjunction ("||" conjunction)*
    conjunction := primitive (whitespace primitive)*
    primitive   := comparator | hyphen | tilde | xrange | exact | "*"

    comparator  := ("<" | "<=" | ">" | ">=" | "==") version
    hyphen      := version " - " version          (inclusive at both ends)
    tilde       := "~" version                    (at least two components)
    xrange      := version-prefix sep ("x" | "X") e.g. "2.x", "3.3.x", "7.3-x"
    exact       := version

``||`` binds loosest. A version satisfies a descriptor when it satisfies every
primitive of at least one alternative.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass, field
from typing import Iterable, Union

from .errors import (
    EmptyDescriptor,
    RangeSyntaxError,
    UrlDependencyUnsupported,
    VersionError,
)
from .version import Version, parse_version

OPERATORS = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
}

_COMPARATOR = re.compile(r"(<=|>=|==|<|>)(.*)")
_XRANGE = re.compile(r"([0-9]+(?:[.-][0-9]+)*)[.-][xX]")
_URL = re.compile(r"https?://", re.IGNORECASE)


@dataclass(frozen=True)
class Comparator:
    op: str
    version: Version

    def __post_init__(self):
        if self.op not in OPERATORS:
            raise ValueError(f"unknown operator {self.op!r}")

    def holds(self, v: Version) -> bool:
        return OPERATORS[self.op](v, self.version)

    def desugar(self) -> list[Comparator]:
        return [self]

    def __str__(self):
        return f"{self.op}{self.version}"


@dataclass(frozen=True)
class HyphenRange:
    lo: Version
    hi: Version

    def desugar(self) -> list[Comparator]:
        return [Comparator(">=", self.lo), Comparator("<=", self.hi)]

    def __str__(self):
        return f"{self.lo} - {self.hi}"


@dataclass(frozen=True)
class Tilde:
    version: Version

    def __post_init__(self):
        if len(self.version.components) < 2:
            raise ValueError("tilde range needs at least two components")

    def desugar(self) -> list[Comparator]:
        major, minor = self.version.components[:2]
        return [Comparator(">=", self.version),
                Comparator("<", Version((major, minor + 1)))]

    def __str__(self):
        return f"~{self.version}"


@dataclass(frozen=True)
class XRange:
    prefix: tuple[int, ...]
    text: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.prefix:
            raise ValueError("x-range needs at least one fixed component")

    def desugar(self) -> list[Comparator]:
        upper = self.prefix[:-1] + (self.prefix[-1] + 1,)
        return [Comparator(">=", Version(self.prefix)),
                Comparator("<", Version(upper))]

    def __str__(self):
        return self.text or ".".join(map(str, self.prefix)) + ".x"


@dataclass(frozen=True)
class Exact:
    version: Version

    def desugar(self) -> list[Comparator]:
        return [Comparator("==", self.version)]

    def __str__(self):
        return str(self.version)


@dataclass(frozen=True)
class Wildcard:
    def desugar(self) -> list[Comparator]:
        return []

    def __str__(self):
        return "*"


Primitive = Union[Comparator, HyphenRange, Tilde, XRange, Exact, Wildcard]


def desugar(p: Primitive) -> list[Comparator]:
    """Rewrite a primitive as the list of comparators it stands for.

    The wildcard desugars to the empty list, i.e. no constraint at all.
    """
    return p.desugar()


@dataclass(frozen=True)
class ConstraintConjunction:
    primitives: tuple[Primitive, ...]

    def __post_init__(self):
        if not self.primitives:
            raise ValueError("conjunction needs at least one primitive")

    def comparators(self) -> list[Comparator]:
        return [c for p in self.primitives for c in p.desugar()]

    def admits(self, v: Version) -> bool:
        return all(c.holds(v) for c in self.comparators())

    def __str__(self):
        return " ".join(map(str, self.primitives))


@dataclass(frozen=True)
class RangeDescriptor:
    alternatives: tuple[ConstraintConjunction, ...]
    source_text: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.alternatives:
            raise EmptyDescriptor("descriptor needs at least one alternative")
        if not self.source_text:
            object.__setattr__(self, "source_text", " || ".join(map(str, self.alternatives)))

    @classmethod
    def parse(cls, text: str) -> RangeDescriptor:
        return parse_range(text)

    @classmethod
    def of(cls, *primitives: Primitive) -> RangeDescriptor:
        """Single-alternative descriptor built from primitives."""
        return cls((ConstraintConjunction(tuple(primitives)),))

    def __contains__(self, v: Version) -> bool:
        return satisfies(v, self)

    def __str__(self):
        return self.source_text


ANY = RangeDescriptor.of(Wildcard())


def _parse_version_token(token: str, text: str, position: int) -> Version:
    try:
        return parse_version(token)
    except VersionError as exc:
        raise RangeSyntaxError(f"bad version {token!r} ({exc})", text, position) from None


def _parse_primitive(token: str, text: str, position: int) -> Primitive:
    if token == "*":
        return Wildcard()
    if token.startswith("~"):
        v = _parse_version_token(token[1:], text, position + 1)
        if len(v.components) < 2:
            raise RangeSyntaxError("tilde range needs at least two components", text, position)
        return Tilde(v)
    m = _COMPARATOR.fullmatch(token)
    if m:
        op, rest = m.groups()
        if not rest:
            raise RangeSyntaxError(f"operator {op!r} without version", text, position)
        return Comparator(op, _parse_version_token(rest, text, position + len(op)))
    m = _XRANGE.fullmatch(token)
    if m:
        prefix = tuple(int(p) for p in re.split(r"[.-]", m.group(1)))
        if len(prefix) >= 8:
            raise RangeSyntaxError("x-range has too many components", text, position)
        return XRange(prefix, token)
    if token[0] in "<>=!^~":
        raise RangeSyntaxError(f"unsupported operator in {token!r}", text, position)
    return Exact(_parse_version_token(token, text, position))


def _parse_conjunction(tokens: list[tuple[int, str]], text: str) -> ConstraintConjunction:
    primitives: list[Primitive] = []
    i = 0
    while i < len(tokens):
        pos, tok = tokens[i]
        # a detached operator such as ">= 1.0" joins with the next token
        if tok in OPERATORS and i + 1 < len(tokens):
            tok = tok + tokens[i + 1][1]
            i += 1
        if i + 2 < len(tokens) and tokens[i + 1][1] == "-":
            lo = _parse_version_token(tok, text, pos)
            hi_pos, hi_tok = tokens[i + 2]
            primitives.append(HyphenRange(lo, _parse_version_token(hi_tok, text, hi_pos)))
            i += 3
            continue
        if tok == "-":
            raise RangeSyntaxError("hyphen range needs a lower bound", text, pos)
        if i + 1 < len(tokens) and tokens[i + 1][1] == "-":
            raise RangeSyntaxError("hyphen range needs an upper bound", text, tokens[i + 1][0])
        prim = _parse_primitive(tok, text, pos)
        try:
            prim.desugar()
        except VersionError as exc:
            raise RangeSyntaxError(f"bound out of range ({exc})", text, pos) from None
        primitives.append(prim)
        i += 1
    return ConstraintConjunction(tuple(primitives))


def parse_range(text: str) -> RangeDescriptor:
    """Parse a range descriptor string into a :class:`RangeDescriptor`."""
    if not isinstance(text, str):
        raise TypeError(f"expected str, got {type(text).__name__}")
    stripped = text.strip()
    if not stripped:
        raise EmptyDescriptor("empty range descriptor")
    url = _URL.search(stripped)
    if url:
        raise UrlDependencyUnsupported(f"URL dependencies are not supported: {stripped!r}")

    alternatives = []
    start = 0
    for chunk in stripped.split("||"):
        tokens = [(start + m.start(), m.group()) for m in re.finditer(r"\S+", chunk)]
        if not tokens:
            raise RangeSyntaxError("empty alternative", stripped, start)
        for pos, tok in tokens:
            if "|" in tok:
                raise RangeSyntaxError("stray '|'", stripped, pos + tok.index("|"))
        alternatives.append(_parse_conjunction(tokens, stripped))
        start += len(chunk) + 2
    return RangeDescriptor(tuple(alternatives), stripped)


def coerce_range(value: RangeDescriptor | str | None) -> RangeDescriptor:
    if value is None:
        return ANY
    if isinstance(value, RangeDescriptor):
        return value
    return parse_range(value)


def satisfies(v: Version, r: RangeDescriptor) -> bool:
    return any(alt.admits(v) for alt in r.alternatives)


def max_satisfying(candidates: Iterable[Version], r: RangeDescriptor) -> Version | None:
    """Highest candidate admitted by ``r``, or ``None``."""
    best = None
    for v in candidates:
        if satisfies(v, r) and (best is None or v > best):
            best = v
    return best
